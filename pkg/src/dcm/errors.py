"""Exception types shared across the package."""


class DcmError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(DcmError, ValueError):
    """Array dimensions do not match the contract."""


class NumericError(DcmError, ValueError):
    """Non-finite or otherwise invalid numeric input."""


class ConfigError(DcmError, ValueError):
    """Invalid configuration value or combination."""


class EmptyInputError(DcmError, ValueError):
    """An operation that requires data received an empty input."""
