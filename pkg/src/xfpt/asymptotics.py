"""Universal large-N law E[(T_{k,N})^m] ~ (L^2 / (4 D ln N))^m and invariance checks."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

from .errors import DomainError
from .moments import MomentQuery, extreme_moment
from .survival import SurvivalModel


@dataclass(frozen=True)
class AsymptoticSpec:
    L_eff: float
    D: float
    m: int = 1

    def __post_init__(self):
        if not (self.L_eff > 0 and math.isfinite(self.L_eff)):
            raise DomainError(f"L_eff must be positive and finite, got {self.L_eff!r}")
        if not self.D > 0:
            raise DomainError(f"D must be positive, got {self.D!r}")
        if int(self.m) != self.m or self.m < 1:
            raise DomainError(f"m must be an integer >= 1, got {self.m!r}")


def extreme_moment_asymptotic(spec: AsymptoticSpec, N: float) -> float:
    """(L_eff^2 / (4 D ln N))^m. There is deliberately no k, drift or reactivity argument."""
    if not N > 1:
        raise DomainError(f"asymptotic formula needs N > 1, got {N!r}")
    return (spec.L_eff**2 / (4.0 * spec.D * math.log(N))) ** spec.m


@dataclass(frozen=True)
class InvarianceRow:
    variant: str
    N: float
    ratio: float
    abs_err_est: float


@dataclass
class InvarianceReport:
    rows: list[InvarianceRow]
    approaching: dict[str, bool]

    def ratios(self, variant: str) -> list[float]:
        return [r.ratio for r in self.rows if r.variant == variant]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["variant", "N", "ratio", "abs_err_est"])
            for r in self.rows:
                w.writerow([r.variant, int(r.N), repr(r.ratio), repr(r.abs_err_est)])


def approaching_one(ratios) -> bool:
    """|ratio - 1| shrinking over the last three points and below 0.5 at the end."""
    dev = [abs(r - 1.0) for r in ratios]
    if not dev:
        return False
    tail = dev[-3:]
    shrinking = all(b <= a for a, b in zip(tail, tail[1:]))
    return shrinking and dev[-1] < 0.5


def _label(model: SurvivalModel, index: int) -> str:
    params = {k: v for k, v in model.to_dict().items() if k != "variant"}
    body = ";".join(f"{k}={v:g}" for k, v in params.items() if isinstance(v, (int, float)))
    return f"{index}:{model.variant}({body})"


def invariance_report(
    base: SurvivalModel,
    variants,
    N_grid,
    q_defaults: MomentQuery | None = None,
) -> InvarianceReport:
    """Ratios extreme_moment(variant) / extreme_moment(base) along ``N_grid``."""
    q_defaults = q_defaults or MomentQuery(1)
    base_vals = {}
    for N in N_grid:
        base_vals[N] = extreme_moment(base, replace(q_defaults, N=N))
    rows: list[InvarianceRow] = []
    approaching: dict[str, bool] = {}
    for i, model in enumerate(variants):
        label = _label(model, i)
        seq = []
        for N in N_grid:
            b = base_vals[N]
            v = b if model == base else extreme_moment(model, replace(q_defaults, N=N))
            ratio = 1.0 if model == base else v.value / b.value
            err = ratio * (v.abs_error_estimate / v.value + b.abs_error_estimate / b.value)
            if model == base:
                err = 0.0
            rows.append(InvarianceRow(label, float(N), ratio, err))
            seq.append(ratio)
        approaching[label] = approaching_one(seq)
    return InvarianceReport(rows, approaching)
