"""Exception hierarchy shared by all services.

Every error carries a stable ``code``; the CLI maps families to exit codes
(configuration problems exit 2, numerical failures exit 3).
"""

from typing import Any


class RegVarError(Exception):
    """Base class for all domain errors."""

    code = "REGVAR_ERROR"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details


class ConfigError(RegVarError):
    """Invalid inputs, files or settings."""

    code = "CONFIG_ERROR"


class NumericalError(RegVarError):
    """A computation could not produce a trustworthy number."""

    code = "NUMERICAL_ERROR"


class DimensionMismatch(ConfigError, ValueError):
    code = "DIMENSION_MISMATCH"


class SizeCapExceeded(ConfigError):
    code = "SIZE_CAP_EXCEEDED"


class UnsupportedLikelihood(ConfigError):
    code = "UNSUPPORTED_LIKELIHOOD"


class UnsupportedPrior(ConfigError):
    code = "UNSUPPORTED_PRIOR"


class UnknownDataset(ConfigError):
    code = "UNKNOWN_DATASET"


class ParseError(ConfigError):
    """Malformed CSV content; ``line`` is 1-based and counts the header."""

    code = "PARSE_ERROR"

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message, line=line)
        self.line = line


class SchemaError(ConfigError):
    code = "SCHEMA_ERROR"


class NotPositiveDefinite(NumericalError):
    """Cholesky hit a pivot at or below the floor."""

    code = "NOT_POSITIVE_DEFINITE"

    def __init__(self, message: str, min_eigenvalue: float | None = None):
        super().__init__(message, min_eigenvalue=min_eigenvalue)
        self.min_eigenvalue = min_eigenvalue


class ConvergenceFailure(NumericalError):
    code = "CONVERGENCE_FAILURE"


class DegenerateEigenvalue(NumericalError):
    code = "DEGENERATE_EIGENVALUE"


class NonFiniteResult(NumericalError):
    code = "NON_FINITE_RESULT"


class NonFiniteObjective(NumericalError):
    """The optimizer produced NaN/Inf; lower the learning rate."""

    code = "NON_FINITE_OBJECTIVE"


class SignalBelowNoise(NumericalError):
    """The regularized refit moved the prediction less than the optimizer noise floor."""

    code = "SIGNAL_BELOW_NOISE"


class ZeroVariance(NumericalError):
    code = "ZERO_VARIANCE"


class NotStationary(ConvergenceFailure):
    """A warm start whose gradient ∞-norm exceeds the stationarity tolerance."""

    code = "NOT_STATIONARY"
