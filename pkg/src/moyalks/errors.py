"""Exception types raised across the package."""


class MoyalKSError(Exception):
    """Base class for all package errors."""


class PhaseSpaceMismatch(MoyalKSError, ValueError):
    pass


class ResolutionError(MoyalKSError):
    """A grid field carries too much energy in its top Fourier modes."""


class DegenerateFitError(MoyalKSError):
    """The quantum deviation vanishes, so no power law can be fitted."""


class StabilityError(MoyalKSError):
    """Step size too large for the mode-coupling growth bound."""


class StatisticsError(MoyalKSError):
    """Too few samples for the requested refinement depth."""


class ConfigurationError(MoyalKSError, ValueError):
    pass


class UnsupportedError(MoyalKSError, NotImplementedError):
    pass
