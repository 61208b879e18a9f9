"""Exception types raised across the package."""


class SphereflowError(Exception):
    """Base class for all package errors."""


class PoleHemisphereError(SphereflowError, ValueError):
    """Point lies outside the open hemisphere of a gnomonic chart."""


class NonSymmetricError(SphereflowError, ValueError):
    pass


class DimensionError(SphereflowError, ValueError):
    pass


class RangeError(SphereflowError, ValueError):
    pass


class SupportOverlapError(SphereflowError, ValueError):
    """Grid too coarse to resolve the requested bump supports."""


class SupportError(SphereflowError, ValueError):
    """Measure has atoms outside the spherical cap a check requires."""


class BetaZeroError(SphereflowError, ValueError):
    pass


class MissingAntiderivativeError(SphereflowError, ValueError):
    pass


class NotCriticalError(SphereflowError, ValueError):
    pass


class NonTangentError(SphereflowError, ValueError):
    pass


class HypothesisError(SphereflowError, ValueError):
    """Eigenvalue hypotheses of the escape-direction argument are not met."""


class StepSizeError(SphereflowError, RuntimeError):
    pass


class CflError(SphereflowError, RuntimeError):
    pass


class InsufficientDataError(SphereflowError, ValueError):
    pass


class ConfigError(SphereflowError, ValueError):
    """Invalid scenario configuration. Carries an optional line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
