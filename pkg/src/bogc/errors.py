"""Exception types raised across the package."""


class BogcError(Exception):
    """Base class for all package errors."""


class NotPositiveDefinite(BogcError, ArithmeticError):
    """Cholesky factorization failed even after jitter escalation."""


class DegenerateCovariance(NotPositiveDefinite):
    """A Monte-Carlo covariance could not be regularized to positive definite."""


class DimensionMismatch(BogcError, ValueError):
    pass


class InvalidProbability(BogcError, ValueError):
    pass


class InvalidParameter(BogcError, ValueError):
    pass


class TotalConflict(BogcError, ArithmeticError):
    """Two mass sets are (numerically) in total conflict, so 1 - C vanishes."""


class ZeroGradient(BogcError, ValueError):
    pass


class SpecInvalid(BogcError, ValueError):
    pass


class TrainingError(BogcError, RuntimeError):
    """Wraps a numeric failure raised inside the training loop."""

    def __init__(self, step: int, cause: BaseException):
        super().__init__(f"step {step}: {type(cause).__name__}: {cause}")
        self.step = step
        self.cause = cause
