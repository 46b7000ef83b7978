"""Monte Carlo first-passage sample sets and their CSV form."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class FptSampleSet:
    """First-passage times, sorted ascending, with censoring flags.

    Censored samples never reached the target before ``max_time`` and carry
    ``t == max_time``. ``hits`` holds the absorption position per sample
    (NaN when censored).
    """

    times: np.ndarray
    censored: np.ndarray
    hits: np.ndarray | None = None
    seed: int | None = None
    dt: float | None = None
    max_time: float = math.inf
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        censored = np.asarray(self.censored, dtype=bool)
        if times.ndim != 1 or censored.shape != times.shape:
            raise ConfigError("times and censored flags must be 1-D arrays of equal length")
        if np.any(times < 0) or np.any(np.isnan(times)):
            raise ConfigError("sample times must be nonnegative")
        order = np.argsort(times, kind="stable")
        object.__setattr__(self, "times", times[order])
        object.__setattr__(self, "censored", censored[order])
        if self.hits is not None:
            hits = np.asarray(self.hits, dtype=float).reshape(len(times), -1)
            object.__setattr__(self, "hits", hits[order])

    def __len__(self):
        return len(self.times)

    @property
    def n_censored(self) -> int:
        return int(self.censored.sum())

    @property
    def cutoff(self) -> float:
        if self.n_censored:
            return float(self.times[self.censored].min())
        return self.max_time

    @classmethod
    def from_times(cls, times, max_time: float = math.inf, **kw) -> "FptSampleSet":
        """Build from raw times, censoring everything at or beyond ``max_time``."""
        times = np.asarray(times, dtype=float)
        censored = times >= max_time
        return cls(np.where(censored, max_time, times), censored, max_time=max_time, **kw)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "censored", "hit_x", "hit_y"])
            hits = self.hits if self.hits is not None else np.full((len(self), 2), np.nan)
            for t, c, h in zip(self.times, self.censored, hits):
                hx = "" if np.isnan(h[0]) else repr(float(h[0]))
                hy = "" if h.shape[0] < 2 or np.isnan(h[1]) else repr(float(h[1]))
                w.writerow([repr(float(t)), int(c), hx, hy])

    @classmethod
    def from_csv(cls, path, max_time: float | None = None) -> "FptSampleSet":
        """Read ``t,censored[,hit_x,hit_y]`` rows (header required)."""
        path = Path(path)
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or not {"t", "censored"} <= set(reader.fieldnames):
                raise ConfigError(f"{path}: expected header with columns t,censored")
            rows = list(reader)
        times = np.array([float(r["t"]) for r in rows])
        cens = np.array([r["censored"].strip().lower() in ("1", "true") for r in rows], dtype=bool)
        hits = None
        if rows and "hit_x" in rows[0]:
            hits = np.array(
                [[float(r.get("hit_x") or "nan"), float(r.get("hit_y") or "nan")] for r in rows]
            )
        if max_time is None:
            max_time = float(times[cens].min()) if cens.any() else math.inf
        return cls(times, cens, hits=hits, max_time=max_time)
