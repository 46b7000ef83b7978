"""Survival probabilities S(t) = P(tau > t) for one-dimensional first passage.

Every model evaluates ``ln(1 - S(t))`` directly in the log domain, so the
extreme short-time regime (where ``1 - S`` underflows long before ``S`` stops
being exactly 1 in double precision) stays accurate. ``S`` and ``ln S`` are
derived from that value whenever ``S > 1/2``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial.laguerre import laggauss

from .errors import ConfigError, DomainError, FitFailure
from .samples import FptSampleSet
from .special import SQRT_PI, erf, erfc, erfcx, log_erfc

LN2 = math.log(2.0)
_LN_HALF = -LN2

# erfcx(z) - erfcx(z + d) as a Laplace-type integral without cancellation
_LAG_NODES, _LAG_WEIGHTS = laggauss(64)


def _erfcx_gap(z, d):
    """erfcx(z) - erfcx(z + d) for z >= 0, d >= 0, accurate when d << z."""
    z, d = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(d, dtype=float))
    out = erfcx(z) - erfcx(z + d)
    big = z >= 4.0
    if np.any(big):
        zb = z[big][:, None]
        db = d[big][:, None]
        w = _LAG_NODES[None, :]
        f = np.exp(-(w * w) / (4.0 * zb * zb)) * -np.expm1(-db * w / zb)
        out = out.copy()
        out[big] = (f @ _LAG_WEIGHTS) / (zb[:, 0] * SQRT_PI)
    return out


def _validate_time(t, strict: bool = False) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(np.isnan(t)):
        raise DomainError("time must not be NaN")
    if strict and np.any(t <= 0):
        raise DomainError("time must be > 0")
    if np.any(t < 0):
        raise DomainError("time must be >= 0")
    return t


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not value > 0 or not math.isfinite(value):
        raise DomainError(f"{name} must be a positive finite number, got {value!r}")
    return value


class SurvivalModel:
    """Base class; subclasses implement the two ``_pos`` hooks for t > 0."""

    variant: str = ""

    # -- hooks -------------------------------------------------------------
    def _log_cdf_pos(self, t: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _sf_pos(self, t: np.ndarray) -> np.ndarray:
        """S(t) by a formula that is accurate when S is not close to 1."""
        raise NotImplementedError

    # -- public, vectorized ------------------------------------------------
    def log_cdf(self, t) -> np.ndarray:
        """ln(1 - S(t)); ``-inf`` at t = 0."""
        t = np.asarray(t, dtype=float)
        flat = t.reshape(-1)
        out = np.full(flat.shape, -np.inf)
        pos = flat > 0
        if np.any(pos):
            lc = np.minimum(self._log_cdf_pos(flat[pos]), 0.0)
            # once S < 1/2, ln(1 - S) ~ -S is tiny and log1p(-S) is the accurate route
            small = lc > _LN_HALF
            if np.any(small):
                sel = flat[pos][small]
                lc[small] = np.log1p(-np.clip(self._sf_pos(sel), 0.0, 1.0))
            out[pos] = lc
        return out.reshape(t.shape)

    def _near_one(self, t):
        t = np.asarray(t, dtype=float)
        lc = self.log_cdf(t).reshape(-1)
        return t.reshape(-1), lc, lc < _LN_HALF

    def sf(self, t) -> np.ndarray:
        shape = np.shape(t)
        flat, lc, near_one = self._near_one(t)
        out = -np.expm1(lc)
        far = ~near_one
        if np.any(far):
            out[far] = self._sf_pos(flat[far])
        return np.clip(out, 0.0, 1.0).reshape(shape)

    def log_sf(self, t) -> np.ndarray:
        shape = np.shape(t)
        flat, lc, near_one = self._near_one(t)
        with np.errstate(divide="ignore"):
            out = np.log1p(-np.exp(lc))
        far = ~near_one
        if np.any(far):
            with np.errstate(divide="ignore"):
                out[far] = np.log(np.clip(self._sf_pos(flat[far]), 0.0, 1.0))
        return np.minimum(out, 0.0).reshape(shape)

    @property
    def sf_inf(self) -> float:
        """lim S(t) as t grows; nonzero only for defective (transient) models."""
        return 0.0

    @property
    def short_time_constant(self) -> float:
        """Analytic C in lim t ln(1 - S(t)) = -C."""
        raise NotImplementedError

    @property
    def time_scale(self) -> float:
        return 1.0

    def to_dict(self) -> dict:
        d = {"variant": self.variant}
        d.update(asdict(self))
        return d


@dataclass(frozen=True)
class HalfLine(SurvivalModel):
    """Pure diffusion on (0, inf) from x = L, perfectly absorbing origin."""

    L: float
    D: float
    variant = "HalfLine"

    def __post_init__(self):
        _positive("L", self.L)
        _positive("D", self.D)

    def _z(self, t):
        return self.L / np.sqrt(4.0 * self.D * t)

    def _log_cdf_pos(self, t):
        return log_erfc(self._z(t))

    def _sf_pos(self, t):
        return erf(self._z(t))

    @property
    def short_time_constant(self):
        return self.L**2 / (4.0 * self.D)

    @property
    def time_scale(self):
        return self.L**2 / self.D


@dataclass(frozen=True)
class HalfLineDrift(SurvivalModel):
    """Drifted diffusion from x = L to an absorbing origin.

    ``b > 0`` pushes away from the target; the hitting time is then
    defective with ``P(tau = inf) = 1 - exp(-b L / D)``.
    """

    L: float
    D: float
    b: float
    variant = "HalfLineDrift"

    def __post_init__(self):
        _positive("L", self.L)
        _positive("D", self.D)
        if not math.isfinite(float(self.b)):
            raise DomainError("drift b must be finite")

    def _args(self, t):
        s = np.sqrt(4.0 * self.D * t)
        return (self.L + self.b * t) / s, (self.L - self.b * t) / s

    def _log_cdf_pos(self, t):
        # 1 - S = erfc(a1)/2 + exp(-bL/D) erfc(a2)/2
        a1, a2 = self._args(t)
        return np.logaddexp(log_erfc(a1), -self.b * self.L / self.D + log_erfc(a2)) - LN2

    def _sf_pos(self, t):
        a1, a2 = self._args(t)
        # S = [erfc(-a1) - exp(-bL/D) erfc(a2)] / 2
        la = log_erfc(-a1)
        lb = -self.b * self.L / self.D + log_erfc(a2)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.exp(lb - la)
            out = 0.5 * np.exp(la) * (1.0 - r)
        return np.where(r >= 1.0, 0.0, out)

    @property
    def sf_inf(self):
        return -math.expm1(-self.b * self.L / self.D) if self.b > 0 else 0.0

    @property
    def short_time_constant(self):
        return self.L**2 / (4.0 * self.D)

    @property
    def time_scale(self):
        return self.L**2 / self.D


@dataclass(frozen=True)
class HalfLinePartial(SurvivalModel):
    """Pure diffusion from x = L to a partially absorbing origin (reactivity kappa).

    1 - S = exp(-z^2) [erfcx(z) - erfcx(z + kappa sqrt(t/D))], z = L/sqrt(4Dt),
    which is the closed form with exp(kappa(kappa t + L)/D) folded into erfcx.
    """

    L: float
    D: float
    kappa: float
    variant = "HalfLinePartial"

    def __post_init__(self):
        _positive("L", self.L)
        _positive("D", self.D)
        kappa = float(self.kappa)
        if not kappa > 0:
            raise DomainError(f"kappa must be > 0, got {kappa!r}")

    def _zd(self, t):
        z = self.L / np.sqrt(4.0 * self.D * t)
        return z, self.kappa * np.sqrt(t / self.D)

    def _log_cdf_pos(self, t):
        if math.isinf(self.kappa):
            return HalfLine(self.L, self.D)._log_cdf_pos(t)
        z, d = self._zd(t)
        with np.errstate(divide="ignore"):
            return -z * z + np.log(_erfcx_gap(z, d))

    def _sf_pos(self, t):
        if math.isinf(self.kappa):
            return HalfLine(self.L, self.D)._sf_pos(t)
        z, d = self._zd(t)
        return erf(z) + np.exp(-z * z) * erfcx(z + d)

    @property
    def short_time_constant(self):
        return self.L**2 / (4.0 * self.D)

    @property
    def time_scale(self):
        return self.L**2 / self.D


@dataclass(frozen=True)
class IntervalEscape(SurvivalModel):
    """Escape of pure diffusion from (-2l, 2l) started at the centre."""

    l: float  # noqa: E741
    D: float
    variant = "IntervalEscape"
    # Dt/l^2 below this uses the image (erfc) series, above it the eigenfunction series
    crossover = 0.5

    def __post_init__(self):
        _positive("l", self.l)
        _positive("D", self.D)

    def _x(self, t):
        return self.D * t / self.l**2

    def image_log_cdf(self, t):
        """ln(1 - S) from 2 sum_n (-1)^n erfc((2n+1) z), z = l/sqrt(Dt)."""
        t = np.asarray(t, dtype=float)
        z = self.l / np.sqrt(self.D * t)
        lead = log_erfc(z)
        corr = np.zeros_like(z)
        for n in range(1, 200):
            term = np.exp(log_erfc((2 * n + 1) * z) - lead)
            corr += term if n % 2 == 0 else -term
            if np.all(term < 1e-17 * np.maximum(1.0 + corr, 1e-300)):
                break
        return LN2 + lead + np.log1p(corr)

    def series_sf(self, t):
        """S from (4/pi) sum_n (-1)^n/(2n+1) exp(-(2n+1)^2 pi^2 Dt / (16 l^2))."""
        x = np.asarray(self._x(t), dtype=float)
        total = np.zeros_like(x)
        for n in range(0, 10_000):
            k = 2 * n + 1
            term = np.exp(-(k * k) * math.pi**2 * x / 16.0) / k
            total += term if n % 2 == 0 else -term
            if np.all(term < 1e-16 * np.abs(total)):
                break
        return 4.0 / math.pi * total

    def _log_cdf_pos(self, t):
        x = self._x(t)
        short = x < self.crossover
        out = np.empty_like(t)
        if np.any(short):
            out[short] = self.image_log_cdf(t[short])
        if np.any(~short):
            out[~short] = np.log1p(-self.series_sf(t[~short]))
        return out

    def _sf_pos(self, t):
        x = self._x(t)
        short = x < self.crossover
        out = np.empty_like(t)
        if np.any(short):
            out[short] = -np.expm1(self.image_log_cdf(t[short]))
        if np.any(~short):
            out[~short] = self.series_sf(t[~short])
        return out

    @property
    def short_time_constant(self):
        return self.l**2 / self.D

    @property
    def time_scale(self):
        return self.l**2 / self.D

    @property
    def mean(self) -> float:
        """Classical mean exit time (2l)^2 / (2D)."""
        return 2.0 * self.l**2 / self.D


@dataclass(frozen=True, eq=False)
class Empirical(SurvivalModel):
    """Right-continuous step survival ``#(samples > t) / n``.

    Censored samples count as surviving at every t, so the estimate is exact
    up to ``cutoff`` and biased upwards beyond it.
    """

    times: np.ndarray
    censored: np.ndarray
    cutoff: float = math.inf
    variant = "Empirical"
    _done: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        censored = np.asarray(self.censored, dtype=bool)
        if times.size == 0:
            raise ConfigError("empirical survival needs at least one sample")
        order = np.argsort(times, kind="stable")
        object.__setattr__(self, "times", times[order])
        object.__setattr__(self, "censored", censored[order])
        object.__setattr__(self, "_done", np.sort(times[~censored]))

    @property
    def n(self) -> int:
        return int(self.times.size)

    @property
    def n_censored(self) -> int:
        return int(self.censored.sum())

    def count_done(self, t) -> np.ndarray:
        """Number of uncensored samples <= t."""
        return np.searchsorted(self._done, np.asarray(t, dtype=float), side="right")

    def _log_cdf_pos(self, t):
        with np.errstate(divide="ignore"):
            return np.log(self.count_done(t) / self.n)

    def _sf_pos(self, t):
        return (self.n - self.count_done(t)) / self.n

    def sf(self, t):
        t = np.asarray(t, dtype=float)
        return (self.n - self.count_done(t)) / self.n

    def log_sf(self, t):
        with np.errstate(divide="ignore"):
            return np.log(self.sf(t))

    @property
    def sf_inf(self):
        return self.n_censored / self.n

    @property
    def time_scale(self):
        return float(np.median(self.times)) or 1.0

    @property
    def short_time_constant(self):
        raise NotImplementedError("no analytic short-time constant for empirical survival")

    def to_dict(self):
        return {
            "variant": self.variant,
            "times": self.times.tolist(),
            "censored": self.censored.astype(int).tolist(),
            "cutoff": self.cutoff,
        }

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "censored"])
            for t, c in zip(self.times, self.censored):
                w.writerow([repr(float(t)), int(c)])

    @classmethod
    def from_csv(cls, path) -> "Empirical":
        return empirical_survival(FptSampleSet.from_csv(path))


EXACT_VARIANTS = {
    "HalfLine": HalfLine,
    "HalfLineDrift": HalfLineDrift,
    "HalfLinePartial": HalfLinePartial,
    "IntervalEscape": IntervalEscape,
}


def model_from_dict(data: dict, base_dir: Path | None = None) -> SurvivalModel:
    """Inverse of ``SurvivalModel.to_dict``.

    ``kappa`` may be the string ``"inf"``. Empirical models take either inline
    ``times``/``censored`` lists or a ``csv`` path.
    """
    if not isinstance(data, dict) or "variant" not in data:
        raise ConfigError("model JSON must be an object with a 'variant' key")
    params = {k: v for k, v in data.items() if k != "variant"}
    variant = data["variant"]
    if variant == "Empirical":
        if "csv" in params:
            path = Path(params["csv"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            return Empirical.from_csv(path)
        try:
            return Empirical(
                np.asarray(params["times"], dtype=float),
                np.asarray(params.get("censored", [0] * len(params["times"])), dtype=bool),
                float(params.get("cutoff", math.inf)),
            )
        except KeyError as exc:
            raise ConfigError(f"Empirical model missing {exc}") from None
    cls = EXACT_VARIANTS.get(variant)
    if cls is None:
        raise ConfigError(f"unknown survival variant {variant!r}")
    try:
        kwargs = {k: float(v) for k, v in params.items()}
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad parameters for {variant}: {exc}") from None


def load_model(path) -> SurvivalModel:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read model {path}: {exc}") from None
    return model_from_dict(data, base_dir=path.parent)


# -- operations ------------------------------------------------------------


def eval_survival(model: SurvivalModel, t):
    """S(t) for scalar or array ``t >= 0``."""
    t = _validate_time(t)
    out = model.sf(t)
    return float(out) if out.ndim == 0 else out


def eval_log_one_minus_survival(model: SurvivalModel, t):
    """ln(1 - S(t)) for ``t > 0`` without forming 1 - S by subtraction."""
    t = _validate_time(t, strict=True)
    out = model.log_cdf(t)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LogLimitFit:
    """Least-squares fit of g(t) = -t ln(1 - S(t)) = C + c1 t ln t + c2 t."""

    C: float
    c1: float
    c2: float
    residual: float  # RMS residual relative to |C|
    t: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)


def short_time_log_limit(
    model: SurvivalModel,
    t_min: float,
    t_max: float,
    points: int = 40,
    max_residual: float = 1e-3,
) -> LogLimitFit:
    """Estimate C = -lim t ln(1 - S(t)) from a log-spaced grid on [t_min, t_max]."""
    if not (0 < t_min < t_max):
        raise DomainError("need 0 < t_min < t_max")
    if points < 4:
        raise DomainError("need at least 4 grid points")
    t = np.geomspace(t_min, t_max, int(points))
    g = -t * model.log_cdf(t)
    if not np.all(np.isfinite(g)):
        raise FitFailure("ln(1 - S) is not finite on the fit grid")
    A = np.column_stack([np.ones_like(t), t * np.log(t), t])
    # column scaling keeps lstsq well conditioned across decades of t
    scale = np.abs(A).max(axis=0)
    coef, *_ = np.linalg.lstsq(A / scale, g, rcond=None)
    coef = coef / scale
    resid = g - A @ coef
    C = float(coef[0])
    rel = float(np.sqrt(np.mean(resid**2)) / max(abs(C), 1e-300))
    if rel > max_residual:
        raise FitFailure(f"log-limit fit residual {rel:.3g} exceeds {max_residual:.3g}")
    return LogLimitFit(C, float(coef[1]), float(coef[2]), rel, t, g)


def empirical_survival(samples: FptSampleSet) -> Empirical:
    """Step-function survival estimate from a Monte Carlo sample set."""
    if len(samples) == 0:
        raise ConfigError("empirical survival needs at least one sample")
    return Empirical(samples.times, samples.censored, samples.cutoff)
