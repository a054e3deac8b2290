"""Exception types raised by the numerical modules.

Everything numerical derives from :class:`NumericalError` so the CLI can map
it to a single exit status.
"""


class JumpCtlError(Exception):
    """Base class for all package errors."""


class ConfigError(JumpCtlError, ValueError):
    """Invalid run configuration."""


class NumericalError(JumpCtlError):
    """Base class for failures inside the numerical kernels."""


class DimensionError(NumericalError, ValueError):
    pass


class DomainError(NumericalError, ValueError):
    pass


class SingularityError(NumericalError):
    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class ConvergenceError(NumericalError):
    def __init__(self, message, iterations=None, last_change=None):
        super().__init__(message)
        self.iterations = iterations
        self.last_change = last_change


class SpectralError(NumericalError):
    pass


class DivergenceError(NumericalError):
    def __init__(self, message, spectral_radius=None):
        super().__init__(message)
        self.spectral_radius = spectral_radius


class RangeError(NumericalError):
    def __init__(self, message, attainable=None):
        super().__init__(message)
        self.attainable = attainable


class AccuracyError(NumericalError):
    pass


class AlignmentError(NumericalError, ValueError):
    pass


class DegeneracyWarning(UserWarning):
    """A computation hit a degenerate case and returned a conventional answer."""
