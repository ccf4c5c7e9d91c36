"""Exception types raised across the package."""


class ReistokesError(Exception):
    """Base class for all package errors."""


class GridError(ReistokesError, ValueError):
    pass


class EllipticityViolation(ReistokesError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NoConvergence(ReistokesError):
    """Iterative solve did not reach its tolerance within the budget."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class NonZeroMean(ReistokesError):
    pass


class MeanNotZero(ReistokesError):
    pass


class EpsilonTooSmall(ReistokesError):
    pass


class RTooSmall(ReistokesError):
    pass


class IncompatibleData(ReistokesError):
    pass


class ResolutionInsufficient(ReistokesError):
    pass


class DegenerateData(ReistokesError):
    pass


class ConfigError(ReistokesError):
    pass


class StageError(ReistokesError):
    """Wraps a failure with the pipeline stage that produced it."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
