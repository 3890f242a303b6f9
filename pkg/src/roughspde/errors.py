"""Exception types shared across the package."""


class RoughSpdeError(Exception):
    """Base class for all package errors."""


class ConfigError(RoughSpdeError):
    """A configuration or parameter-inequality violation."""


class GridError(RoughSpdeError):
    """A time point or interval is incompatible with the discrete grid."""


class NumericalFailure(RoughSpdeError):
    """A numerical procedure could not complete (blow-up, non-contraction,
    embedding failure, mode collapse)."""
