"""Exception and warning types shared across the package."""


class FracSPDEError(Exception):
    """Base class for all package errors."""


class DomainError(FracSPDEError, ValueError):
    """Argument outside the domain of a function."""


class ParameterError(FracSPDEError, ValueError):
    """Parameters outside the range an algorithm supports."""


class UnsupportedArgumentError(FracSPDEError, ValueError):
    pass


class BracketError(FracSPDEError):
    """Root bracketing failed during monotone inversion."""


class QuadratureError(FracSPDEError):
    pass


class NonconvergenceError(FracSPDEError):
    """An iteration did not converge.

    ``history`` holds whatever residual trace was collected.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class GridMismatchError(FracSPDEError, ValueError):
    pass


class ConfigError(FracSPDEError, ValueError):
    """Invalid experiment configuration. ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class GateViolation(ConfigError):
    """A cross-field inequality required by the theory does not hold."""


class AliasingWarning(UserWarning):
    """Kernel symbol still significant at the Nyquist frequency."""


class EnsembleTooSmallWarning(UserWarning):
    """Monte Carlo relative standard error above the reporting threshold."""


class InfiniteRateError(ParameterError):
    """Sampling requested from an intensity with infinite total mass."""
