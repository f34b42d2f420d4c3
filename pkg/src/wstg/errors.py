"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ``ConfigError`` exits with 2, every
other ``GroundingError`` (and I/O failures) with 1.
"""


class GroundingError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(GroundingError, ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class EmptyInputError(GroundingError, ValueError):
    """An operation received a zero-length sequence it cannot handle."""


class InputError(GroundingError):
    """User-supplied data is invalid (bad ids, mismatched lists, ...)."""


class ParseError(InputError):
    """A corpus or checkpoint file is malformed; message names the file."""


class ConfigError(GroundingError):
    """A configuration value is missing, unparseable, or out of range."""


class CheckpointError(GroundingError):
    """A checkpoint is unreadable or used in the wrong stage."""
