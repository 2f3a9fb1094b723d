"""Exception types shared across the package.

The CLI maps these onto distinct exit codes (usage=2, data=3, numerical=4).
"""


class RespmocoError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RespmocoError):
    """Invalid configuration value (bad range, even kernel, unknown key)."""


class DimensionError(RespmocoError):
    """Array shapes incompatible with the requested operation."""


class DomainError(RespmocoError):
    """Argument outside its mathematical domain (e.g. amplitude not in [0,1])."""


class SpecificationError(RespmocoError):
    """Phantom specification that cannot be realized (e.g. lesion outside lung)."""


class ParseError(RespmocoError):
    """Malformed input file; carries the offending location where known."""


class GatingError(RespmocoError):
    """Breathing trace unusable for the requested binning."""


class DatasetError(RespmocoError):
    """Dataset on disk is missing, inconsistent, or too small."""


class MetricError(RespmocoError):
    """Metric undefined for the given inputs (empty mask, zero mean)."""


class NumericalError(RespmocoError):
    """Numerical procedure failed (non-convergence, NaN); carries diagnostics."""
