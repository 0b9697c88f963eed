"""Exception types shared across the package."""


class DeepNurbsError(Exception):
    """Base class for all package errors."""


class ParametricDomainError(DeepNurbsError, ValueError):
    """A parametric coordinate fell outside the unit interval/cube."""


class SingularJacobian(DeepNurbsError, ArithmeticError):
    """The geometry map is (numerically) singular at a requested point."""


class EmptyBatch(DeepNurbsError):
    """Every sample of a batch was skipped, so no estimate is possible."""


class NonFiniteGradient(DeepNurbsError, FloatingPointError):
    """A NaN or infinite gradient reached the optimizer."""

    def __init__(self, message: str, step: int | None = None, bad_count: int = 0):
        super().__init__(message)
        self.step = step
        self.bad_count = bad_count


class ZeroReferenceNorm(DeepNurbsError, ZeroDivisionError):
    """Relative error requested against a reference with zero norm."""


class ConsistencyCheckFailed(DeepNurbsError):
    """A closed-form Laplacian disagrees with its numerical counterpart."""


class OracleError(DeepNurbsError):
    """A reference solver failed to reach its residual target."""


class ConfigParseError(DeepNurbsError):
    """The run configuration could not be parsed."""

    def __init__(self, message: str, lineno: int | None = None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class ConfigValidationError(DeepNurbsError, ValueError):
    """A configuration field holds an invalid value."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class IncompleteRun(DeepNurbsError):
    """A run directory lacks finished artifacts."""
