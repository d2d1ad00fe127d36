"""Shared exception types."""


class HetsentError(Exception):
    """Base class for all package errors."""


class DataError(HetsentError):
    """Malformed input file or record."""


class ConfigError(HetsentError):
    """Invalid or inconsistent configuration."""


class ShapeError(HetsentError, ValueError):
    """Tensor shape mismatch."""


class NumericError(HetsentError):
    """NaN encountered or a numeric verification failed."""
