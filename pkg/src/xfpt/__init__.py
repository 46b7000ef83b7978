"""Extreme first-passage times: exact survival models, large-N moment
quadrature, the universal short-time asymptote, Riemannian geodesic lengths on
grids and a Monte Carlo engine for checking all of them."""
from __future__ import annotations

__version__ = "0.1.0"

from ._backend import BACKEND  # noqa: E402
from .asymptotics import (  # noqa: E402
    AsymptoticSpec,
    InvarianceReport,
    extreme_moment_asymptotic,
    invariance_report,
)
from .errors import (  # noqa: E402
    CensoredTail,
    ConfigError,
    DomainError,
    FitFailure,
    NonIntegrable,
    NumericalError,
    ObstacleCrossing,
    Unreachable,
    XfptError,
)
from .geodesic import (  # noqa: E402
    GeodesicResult,
    effective_length_for_asymptotics,
    geodesic_distance,
    path_length,
)
from .grid import MetricField, RegionSpec, field_from_dict, load_field, two_band_config  # noqa: E402
from .moments import (  # noqa: E402
    MomentQuery,
    QuadratureResult,
    extreme_moment,
    fig3_sweep,
    log_order_stat_survival,
    relative_error,
)
from .montecarlo import (  # noqa: E402
    DynamicsSpec,
    MomentEstimate,
    TraceResult,
    estimate_extreme_moment,
    simulate_fpt,
    trajectory_trace,
)
from .samples import FptSampleSet  # noqa: E402
from .survival import (  # noqa: E402
    Empirical,
    HalfLine,
    HalfLineDrift,
    HalfLinePartial,
    IntervalEscape,
    SurvivalModel,
    empirical_survival,
    eval_log_one_minus_survival,
    eval_survival,
    short_time_log_limit,
)

__all__ = [
    "BACKEND",
    "AsymptoticSpec",
    "CensoredTail",
    "ConfigError",
    "DomainError",
    "DynamicsSpec",
    "Empirical",
    "FitFailure",
    "FptSampleSet",
    "GeodesicResult",
    "HalfLine",
    "HalfLineDrift",
    "HalfLinePartial",
    "IntervalEscape",
    "InvarianceReport",
    "MetricField",
    "MomentEstimate",
    "MomentQuery",
    "NonIntegrable",
    "NumericalError",
    "ObstacleCrossing",
    "QuadratureResult",
    "RegionSpec",
    "SurvivalModel",
    "TraceResult",
    "Unreachable",
    "XfptError",
    "effective_length_for_asymptotics",
    "empirical_survival",
    "estimate_extreme_moment",
    "eval_log_one_minus_survival",
    "eval_survival",
    "extreme_moment",
    "extreme_moment_asymptotic",
    "field_from_dict",
    "fig3_sweep",
    "geodesic_distance",
    "invariance_report",
    "load_field",
    "log_order_stat_survival",
    "path_length",
    "relative_error",
    "short_time_log_limit",
    "simulate_fpt",
    "trajectory_trace",
    "two_band_config",
]
