"""Exception hierarchy shared by every module."""


class OccmarkError(Exception):
    """Base class for all library errors."""


class UsageError(OccmarkError, ValueError):
    """Invalid arguments (bad horizon, empty weights, missing episode scope...)."""


class SchemaError(OccmarkError, ValueError):
    """A JSON document does not match the expected schema.

    ``line`` is the 1-based line in the source text the problem was anchored
    to, or ``None`` when no source text was available.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvalidMdpError(OccmarkError, ValueError):
    def __init__(self, report):
        self.report = report
        lines = [f"{loc}: {desc} ({mag:.3g})" for loc, desc, mag in report.violations]
        super().__init__("invalid MDP:\n  " + "\n  ".join(lines))


class NonFiniteOccupancyError(OccmarkError, ArithmeticError):
    """The occupancy of a policy is not finite (undiscounted, non-terminating)."""

    def __init__(self, message: str, policy=None, spectral_radius: float | None = None):
        self.policy = policy
        self.spectral_radius = spectral_radius
        super().__init__(message)


class NumericalError(OccmarkError, ArithmeticError):
    def __init__(self, message: str, residual: float | None = None):
        self.residual = residual
        super().__init__(message)


class HorizonInsufficientError(OccmarkError, ArithmeticError):
    """Enumeration could not push the tail bound under ``tol`` within ``max_depth``."""

    def __init__(self, message: str, tail_bound: float):
        self.tail_bound = tail_bound
        super().__init__(message)


class EnumerationInfeasibleError(OccmarkError):
    pass


class TreeCapExceededError(OccmarkError):
    pass


class InvariantViolationError(OccmarkError, ValueError):
    pass
