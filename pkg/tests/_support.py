"""Shared fixtures-as-functions for the test modules."""
from __future__ import annotations

import json
import math
from functools import lru_cache
from pathlib import Path

import numpy as np

from xfpt.grid import MetricField, RegionSpec

DATA = Path(__file__).parent / "data"


@lru_cache(maxsize=None)
def oracles() -> dict:
    return json.loads((DATA / "oracles.json").read_text())


def strip(L: float = 1.0, back: float = 3.0, h: float = 0.05) -> tuple[MetricField, RegionSpec]:
    """One-cell-high channel: start point, target column at distance L, reflecting wall ``back`` behind.

    Long enough behind the start that the wall is invisible on the time
    scales used, so it stands in for the half-line.
    """
    nx = int(round((back + L) / h)) + 1
    fld = MetricField.uniform(nx, 1, h)
    tgt = np.zeros((1, nx), dtype=bool)
    tgt[0, -1] = True
    src = np.zeros((1, nx), dtype=bool)
    x0 = back
    src[0, int(x0 / h)] = True
    return fld, RegionSpec(src, tgt, np.array([[x0, 0.5 * h]]))


def ks_distance(times: np.ndarray, censored: np.ndarray, cdf) -> float:
    """Sup |F_emp - F| over the uncensored window (censored samples count as survivors)."""
    n = len(times)
    done = np.sort(times[~censored])
    if done.size == 0:
        return 0.0
    F = cdf(done)
    k = np.arange(1, done.size + 1)
    return float(max(np.max(np.abs(k / n - F)), np.max(np.abs((k - 1) / n - F))))


def ks_critical_99(n: int) -> float:
    """Asymptotic 99% Kolmogorov-Smirnov band."""
    return 1.6276 / math.sqrt(n)


def disk_detour_length(p, q, c, r) -> float:
    """Shortest Euclidean path from p to q around the disk (c, r).

    Straight line when the segment misses the disk; otherwise the two tangent
    segments plus the shorter connecting arc.
    """
    p, q, c = (np.asarray(v, dtype=float) for v in (p, q, c))
    d = q - p
    s = np.clip(np.dot(c - p, d) / np.dot(d, d), 0.0, 1.0)
    if np.linalg.norm(p + s * d - c) >= r:
        return float(np.linalg.norm(d))
    dp, dq = np.linalg.norm(p - c), np.linalg.norm(q - c)
    tp, tq = math.sqrt(dp * dp - r * r), math.sqrt(dq * dq - r * r)
    ang = math.acos(np.clip(np.dot(p - c, q - c) / (dp * dq), -1.0, 1.0))
    arc = ang - math.acos(r / dp) - math.acos(r / dq)
    return tp + tq + r * max(arc, 0.0)
