"""Exception hierarchy for lanpredict."""


class LanPredictError(Exception):
    """Base class for all package errors."""


class ParameterDomainError(LanPredictError, ValueError):
    """Raised when a drift parameter leaves the domain alpha > |beta|."""


class DomainError(ParameterDomainError):
    """Raised when a parameter box is not contained in the domain."""


class GridError(LanPredictError, ValueError):
    """Raised for invalid time grids or sub-path horizons."""


class EstimationError(LanPredictError, RuntimeError):
    """Raised when an estimator fails to produce a usable value."""

    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations
