"""Exception hierarchy.

``ConfigError`` maps to CLI exit code 2; ``NumericalError`` subclasses map to
exit code 3.
"""


class XfptError(Exception):
    """Base class for all package errors."""


class ConfigError(XfptError, ValueError):
    """Invalid parameters, inputs or configuration."""


class DomainError(ConfigError):
    """Argument outside the mathematical domain of an operation."""


class NumericalError(XfptError, ArithmeticError):
    """A computation could not meet its contract."""


class NonIntegrable(NumericalError):
    """Moment integral tail cannot be bounded (integrability condition fails)."""


class CensoredTail(NumericalError):
    """Empirical survival truncated by the simulation cutoff carries too much mass."""


class Unreachable(NumericalError):
    """Obstacles disconnect the source set from the target set."""


class FitFailure(NumericalError):
    """Short-time log-limit fit residual exceeds the configured threshold."""


class ObstacleCrossing(ConfigError):
    """A polyline segment passes through an obstacle cell or leaves the grid."""
