"""Euler-Maruyama first-passage simulation on tensor-field grids.

Searchers follow dX = b(X) dt + sqrt(2D) sigma(X) dW with sigma the principal
square root of the cell tensor. Outer walls and obstacles reflect
specularly; the target absorbs on entry (kappa = inf) or with probability
``kappa * sqrt(pi dt / D)`` per contact (finite kappa). Perfect targets also
get a Brownian-bridge check for crossings that happen inside a step.
"""
from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _mc_kernels, _mc_numpy
from ._backend import NUMBA_AVAILABLE, USE_NUMBA, max_threads
from .errors import ConfigError
from .grid import MetricField, RegionSpec
from .moments import MomentQuery, extreme_moment, log_order_stat_survival
from .samples import FptSampleSet
from .survival import empirical_survival

DEFAULT_SEED = 20190417
_CHUNK = 4096


class StepSizeWarning(UserWarning):
    """The typical Euler step is larger than one grid cell."""


@dataclass(frozen=True, eq=False)
class DynamicsSpec:
    """Time stepping and drift for ``simulate_fpt``.

    ``drift`` is a constant 2-vector or an (ny, nx, 2) per-cell field; None
    means no drift. The diffusivity comes from the MetricField.
    """

    dt: float
    max_time: float
    seed: int = DEFAULT_SEED
    drift: np.ndarray | tuple | None = None
    bridge: bool = True

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive, got {self.dt!r}")
        if not (self.max_time >= self.dt and math.isfinite(self.max_time)):
            raise ConfigError("max_time must be finite and at least dt")
        if int(self.seed) != self.seed or not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an integer in [0, 2**64)")

    def drift_array(self, fld: MetricField) -> np.ndarray:
        n = fld.nx * fld.ny
        if self.drift is None:
            return np.zeros((n, 2))
        b = np.asarray(self.drift, dtype=float)
        if b.shape == (2,):
            return np.broadcast_to(b, (n, 2)).copy()
        if b.shape == (fld.ny, fld.nx, 2):
            return np.ascontiguousarray(b.reshape(n, 2))
        raise ConfigError(f"drift must be a 2-vector or shape ({fld.ny}, {fld.nx}, 2)")

    def step_ratio(self, fld: MetricField) -> float:
        """sqrt(2 D alpha_max dt) / h; above 1 the grid is under-resolved."""
        free = ~fld.obstacles
        a_max = float(fld.eigenvalues()[1][free].max())
        return math.sqrt(2.0 * fld.D * a_max * self.dt) / fld.h

    def to_dict(self) -> dict:
        drift = None if self.drift is None else np.asarray(self.drift, dtype=float).tolist()
        return {"dt": self.dt, "max_time": self.max_time, "seed": int(self.seed), "drift": drift, "bridge": self.bridge}

    @classmethod
    def from_dict(cls, data: dict) -> "DynamicsSpec":
        try:
            return cls(
                dt=float(data["dt"]),
                max_time=float(data["max_time"]),
                seed=int(data.get("seed", DEFAULT_SEED)),
                drift=data.get("drift"),
                bridge=bool(data.get("bridge", True)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"dynamics JSON: {exc}") from None


def absorption_probability(kappa: float, dt: float, D: float) -> float:
    """Per-contact absorption probability of the one-step Robin rule."""
    if math.isinf(kappa):
        return 1.0
    return kappa * math.sqrt(math.pi * dt / D)


@dataclass
class _Prepared:
    args: tuple
    partial: bool
    p_abs: float
    bridge: bool


def _prepare(fld: MetricField, regions: RegionSpec, dyn: DynamicsSpec, kappa: float) -> _Prepared:
    regions.validate(fld)
    if not kappa > 0:
        raise ConfigError(f"kappa must be positive or inf, got {kappa!r}")
    partial = not math.isinf(kappa)
    p_abs = absorption_probability(kappa, dyn.dt, fld.D)
    if partial and p_abs > 0.5:
        raise ConfigError(
            f"absorption probability per contact {p_abs:.3g} > 0.5; reduce dt below "
            f"{0.25 * fld.D / (math.pi * kappa**2):.3g} for kappa={kappa:g}"
        )
    ratio = dyn.step_ratio(fld)
    if ratio > 1.0:
        warnings.warn(
            f"typical step sqrt(2 D alpha2 dt) is {ratio:.2f} cells; reduce dt", StepSizeWarning, stacklevel=3
        )
    if regions.source_points is not None and len(regions.source_points):
        start_pts = np.ascontiguousarray(regions.source_points, dtype=float)
        ix, iy = fld.cell_of(start_pts[:, 0], start_pts[:, 1])
        if np.any(ix < 0) or np.any(fld.obstacles[iy, ix]) or np.any(regions.targets[iy, ix]):
            raise ConfigError("source points must lie in free, non-target cells")
    else:
        start_pts = np.zeros((0, 2))
    src_cells = np.flatnonzero(regions.sources.ravel()).astype(np.int64)
    bridge = dyn.bridge and not partial
    args = (
        np.uint64(int(dyn.seed)),
        start_pts,
        src_cells,
        fld.nx,
        fld.ny,
        float(fld.h),
        np.ascontiguousarray(fld.sigma().reshape(-1, 3)),
        dyn.drift_array(fld),
        np.ascontiguousarray(fld.obstacles.ravel()),
        np.ascontiguousarray(regions.targets.ravel()),
        _mc_kernels.neighbour_mask(regions.targets),
        float(fld.D),
        float(dyn.dt),
        float(dyn.max_time),
        partial,
        float(p_abs) if partial else 1.0,
        bridge,
    )
    return _Prepared(args, partial, p_abs, bridge)


def _use_numba(backend: str | None) -> bool:
    if backend is None:
        return USE_NUMBA
    if backend not in ("numba", "numpy"):
        raise ConfigError(f"unknown backend {backend!r}")
    if backend == "numba" and not NUMBA_AVAILABLE:
        raise ConfigError("numba backend requested but numba is not installed")
    return backend == "numba"


def simulate_fpt(
    fld: MetricField,
    regions: RegionSpec,
    dyn: DynamicsSpec,
    kappa: float = math.inf,
    n_samples: int = 10_000,
    backend: str | None = None,
) -> FptSampleSet:
    """Simulate ``n_samples`` independent searchers until absorption or ``max_time``.

    Output is bit-identical for a given (seed, dt, field, regions) regardless
    of backend chunking or thread count.
    """
    n_samples = int(n_samples)
    if n_samples < 1:
        raise ConfigError("n_samples must be >= 1")
    prep = _prepare(fld, regions, dyn, float(kappa))
    numba_path = _use_numba(backend)
    chunks = [(s, min(_CHUNK, n_samples - s)) for s in range(0, n_samples, _CHUNK)]

    def run(chunk):
        first, n = chunk
        if numba_path:
            return _mc_kernels.run_batch(first, n, *prep.args)
        return _mc_numpy.run_batch(first, n, *prep.args)

    workers = min(max_threads(), len(chunks)) if numba_path else 1
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    times = np.concatenate([p[0] for p in parts])
    cens = np.concatenate([p[1] for p in parts])
    hits = np.concatenate([p[2] for p in parts])
    stats = np.sum([p[3] for p in parts], axis=0)
    meta = {
        "scheme": "euler-maruyama",
        "backend": "numba" if numba_path else "numpy",
        "kappa": float(kappa),
        "p_abs": prep.p_abs if prep.partial else None,
        "bridge_correction": prep.bridge,
        "n_samples": n_samples,
        "n_censored": int(cens.sum()),
        "contacts": int(stats[0]),
        "absorptions": int(stats[1]),
        "redraws": int(stats[2]),
        "bridge_hits": int(stats[3]),
        "field_hash": fld.digest(),
        "step_ratio": dyn.step_ratio(fld),
    }
    return FptSampleSet(times, cens, hits, seed=int(dyn.seed), dt=dyn.dt, max_time=dyn.max_time, meta=meta)


# -- extreme-moment estimation -------------------------------------------------


@dataclass(frozen=True)
class MomentEstimate:
    """Plug-in estimate of E[(T_{k,N})^m] with a bootstrap standard error.

    ``reliable`` is False when the estimate extrapolates far beyond the data
    (fewer than ``min_support`` samples expected below the crossover time),
    when the bootstrap spread is large, or when some resamples hit the
    censoring guard. ``note`` says which.
    """

    value: float
    se: float
    n_boot: int
    censored_mass: float
    boot_failures: int
    reliable: bool
    note: str = ""


def _plugin_moment(times, done_w, n: int, cutoff: float, q: MomentQuery) -> tuple[float, float]:
    """Weighted twin of the empirical-moment routine for bootstrap resamples.

    ``times`` are sorted sample times and ``done_w`` the (resampled) counts of
    uncensored samples at each. Returns (value, P(T_{k,N} > cutoff)).
    """
    keep = done_w > 0
    knots = times[keep]
    counts = np.cumsum(done_w[keep])
    sf = np.concatenate([[1.0], 1.0 - counts / n])
    cdf = np.concatenate([[0.0], counts / n])
    with np.errstate(divide="ignore"):
        p = np.exp(np.asarray(log_order_stat_survival(np.log(sf), np.log(cdf), q.N, q.k)))
    edges = np.concatenate([[0.0], knots]) ** q.m
    value = math.fsum(p[:-1] * np.diff(edges))
    tail_p = float(p[-1])
    if counts.size == 0 or counts[-1] < n:
        value += tail_p * (cutoff**q.m - float(edges[-1]))
    else:
        tail_p = 0.0
    return value, tail_p


def estimate_extreme_moment(
    samples: FptSampleSet,
    q: MomentQuery,
    n_boot: int = 200,
    seed: int = DEFAULT_SEED,
    min_support: float = 10.0,
) -> MomentEstimate:
    """E[(T_{k,N})^m] from the empirical survival, with bootstrap SE.

    Raises CensoredTail when P(T_{k,N} > max_time) under the empirical law is
    at least 10 * rel_tol.
    """
    model = empirical_survival(samples)
    res = extreme_moment(model, q)
    n = len(samples)
    cutoff = samples.cutoff if math.isfinite(samples.cutoff) else float(samples.times.max())
    _, censored_mass = _plugin_moment(samples.times, (~samples.censored).astype(float), n, cutoff, q)

    rng = np.random.default_rng(seed)
    done = ~samples.censored
    boots = np.empty(n_boot)
    failures = 0
    for b in range(n_boot):
        w = rng.multinomial(n, np.full(n, 1.0 / n)).astype(float)
        val, tail = _plugin_moment(samples.times, w * done, n, cutoff, q)
        if tail >= 10.0 * q.rel_tol:
            failures += 1
        boots[b] = val
    se = float(np.std(boots, ddof=1)) if n_boot > 1 else math.nan

    notes = []
    support = n * q.k / q.N
    if support < min_support:
        notes.append(f"only {support:.3g} samples expected below the crossover; estimate extrapolates")
    if failures:
        notes.append(f"{failures}/{n_boot} resamples exceed the censoring guard")
    if not math.isfinite(se) or se > 0.25 * abs(res.value):
        notes.append("bootstrap spread exceeds 25% of the estimate")
    return MomentEstimate(
        value=res.value,
        se=se,
        n_boot=n_boot,
        censored_mass=censored_mass,
        boot_failures=failures,
        reliable=not notes,
        note="; ".join(notes),
    )


# -- trajectories --------------------------------------------------------------


@dataclass
class TraceResult:
    """Recorded trajectories and the fastest searcher.

    ``paths[i]`` is an (m, 3) array of (t, x, y) rows; ``fastest`` is -1 when
    every searcher was censored. ``max_deviation`` is the largest local-metric
    distance from the fastest full path to ``reference`` (the geodesic
    polyline, when one was supplied).
    """

    paths: list[np.ndarray]
    times: np.ndarray
    censored: np.ndarray
    fastest: int
    fastest_path: np.ndarray | None
    reference: np.ndarray | None = None
    max_deviation: float = math.nan
    meta: dict = field(default_factory=dict)

    @property
    def fastest_time(self) -> float:
        return float(self.times[self.fastest]) if self.fastest >= 0 else math.inf

    def fraction_in(self, fld: MetricField, mask: np.ndarray) -> float:
        """Fraction of the fastest path's steps whose start lies in ``mask`` cells."""
        if self.fastest_path is None or len(self.fastest_path) < 2:
            return math.nan
        pts = self.fastest_path[:-1]
        ix, iy = fld.cell_of(pts[:, 1], pts[:, 2])
        return float(np.mean(mask[iy, ix]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path_id", "step", "t", "x", "y"])
            for pid, arr in enumerate(self.paths):
                for step, (t, x, y) in enumerate(arr):
                    w.writerow([pid, step, repr(float(t)), repr(float(x)), repr(float(y))])


def _record_paths(prep: _Prepared, first: int, n: int, cap: int, stride: int, numba_path: bool):
    if numba_path:
        paths, times, cens = [], np.empty(n), np.zeros(n, dtype=bool)
        stats = np.zeros(4, dtype=np.int64)
        for i in range(n):
            rec = np.empty((cap, 3))
            t, c, _, _, m = _mc_kernels.run_sample(first + i, *prep.args, rec, stride, stats)
            paths.append(rec[:m].copy())
            times[i] = t
            cens[i] = c
        return paths, times, cens
    out = _mc_numpy.run_batch(first, n, *prep.args, rec_cap=cap, stride=stride)
    times, cens, _, _, rec, nrec = out
    return [rec[i, : nrec[i]].copy() for i in range(n)], times, cens


def replay_path(
    fld: MetricField,
    regions: RegionSpec,
    dyn: DynamicsSpec,
    kappa: float,
    index: int,
    backend: str | None = None,
) -> np.ndarray:
    """Every step of sample ``index``, identical to its run inside simulate_fpt."""
    prep = _prepare(fld, regions, dyn, float(kappa))
    cap = int(math.ceil(dyn.max_time / dyn.dt)) + 2
    paths, _, _ = _record_paths(prep, int(index), 1, cap, 1, _use_numba(backend))
    return paths[0]


def polyline_deviation(fld: MetricField, points: np.ndarray, polyline: np.ndarray) -> float:
    """Max over ``points`` of the local-metric distance to the nearest polyline point.

    The nearest point is Euclidean; its offset is then measured with the
    inverse tensor of the cell holding the trajectory point.
    """
    pts = np.asarray(points, dtype=float)[:, -2:]
    poly = np.asarray(polyline, dtype=float)
    if len(poly) == 1:
        nearest = np.broadcast_to(poly[0], pts.shape)
    else:
        a, b = poly[:-1], poly[1:]
        ab = b - a
        ab2 = np.maximum(np.sum(ab * ab, axis=1), 1e-300)
        rel = pts[:, None, :] - a[None, :, :]
        s = np.clip(np.sum(rel * ab[None], axis=2) / ab2[None], 0.0, 1.0)
        cand = a[None] + s[..., None] * ab[None]
        d2 = np.sum((pts[:, None, :] - cand) ** 2, axis=2)
        j = np.argmin(d2, axis=1)
        nearest = cand[np.arange(len(pts)), j]
    off = pts - nearest
    ix, iy = fld.cell_of(pts[:, 0], pts[:, 1])
    ten = fld.tensors[iy, ix]
    a11, a12, a22 = ten[:, 0], ten[:, 1], ten[:, 2]
    det = a11 * a22 - a12 * a12
    q = (a22 * off[:, 0] ** 2 - 2 * a12 * off[:, 0] * off[:, 1] + a11 * off[:, 1] ** 2) / det
    return float(np.sqrt(np.max(q)))


def trajectory_trace(
    fld: MetricField,
    regions: RegionSpec,
    dyn: DynamicsSpec,
    kappa: float = math.inf,
    n_paths: int = 100,
    record_stride: int = 10,
    reference: np.ndarray | None = None,
    backend: str | None = None,
) -> TraceResult:
    """Record ``n_paths`` trajectories (every ``record_stride`` steps).

    Sample ``i`` here is sample ``i`` of ``simulate_fpt`` with the same
    inputs. The fastest path is replayed at full resolution.
    """
    n_paths = int(n_paths)
    stride = int(record_stride)
    if n_paths < 1 or stride < 1:
        raise ConfigError("n_paths and record_stride must be >= 1")
    prep = _prepare(fld, regions, dyn, float(kappa))
    numba_path = _use_numba(backend)
    cap = int(math.ceil(dyn.max_time / dyn.dt)) // stride + 3
    paths, times, cens = [], [], []
    for s in range(0, n_paths, _CHUNK):
        p, t, c = _record_paths(prep, s, min(_CHUNK, n_paths - s), cap, stride, numba_path)
        paths += p
        times.append(t)
        cens.append(c)
    times = np.concatenate(times)
    cens = np.concatenate(cens)
    fastest = int(np.argmin(np.where(cens, np.inf, times))) if (~cens).any() else -1
    full = replay_path(fld, regions, dyn, kappa, fastest, backend) if fastest >= 0 else None
    dev = math.nan
    if full is not None and reference is not None and len(reference):
        dev = polyline_deviation(fld, full[:, 1:], reference)
    meta = {"n_paths": n_paths, "record_stride": stride, "backend": "numba" if numba_path else "numpy"}
    return TraceResult(paths, times, cens, fastest, full, reference, dev, meta)
