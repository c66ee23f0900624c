"""Exception hierarchy shared by all ssr3d modules."""


class Ssr3dError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(Ssr3dError):
    """Tensor or array shapes are incompatible for the requested operation."""


class GeometryError(Ssr3dError):
    """Convolution / resampling geometry produces an empty or negative output."""


class ContractError(Ssr3dError):
    """An API precondition was violated (e.g. backward on a non-scalar)."""


class FormatError(Ssr3dError):
    """A binary file (HSC cube or SSRC checkpoint) is malformed."""


class ConfigError(Ssr3dError):
    """Invalid configuration value or unknown configuration key."""


class TrainingError(Ssr3dError):
    """Optimization aborted (non-finite loss or gradient)."""


class MetricError(Ssr3dError):
    """A metric is undefined for the given inputs (e.g. all spectra degenerate)."""
