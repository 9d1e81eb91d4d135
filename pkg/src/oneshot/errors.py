"""Exception hierarchy shared by all modules."""


class OneShotError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(OneShotError, ValueError):
    """Input data or arguments violate a documented invariant."""


class DomainError(ValidationError):
    """A scalar argument lies outside the mathematical domain of a function."""


class ParseError(ValidationError):
    """A data or configuration file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyCellError(ValidationError):
    """A cell with zero tested devices was used where data are required."""


class UnsupportedTimeError(ValidationError):
    """Reliability requested at a time the semi-parametric model does not identify."""


class BoundaryEstimateError(ValidationError):
    """An estimated reliability sits exactly on 0 or 1."""


class EstimationPrecisionError(OneShotError):
    """A matrix needed for inference is too ill-conditioned to invert reliably."""

    def __init__(self, message, condition_number=None):
        self.condition_number = condition_number
        super().__init__(message)


class DegenerateConstraintError(EstimationPrecisionError):
    """The covariance of the constraint function is singular."""


class PowerUndefinedError(OneShotError):
    """Power approximation requested at a parameter value satisfying the null."""
