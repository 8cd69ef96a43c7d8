"""Exception hierarchy used across the toolkit.

Every error raised on purpose derives from ToolkitError so callers can
catch toolkit failures without swallowing genuine bugs.  ArgumentError
doubles as ValueError because most call sites validate plain values.
"""


class ToolkitError(Exception):
    """Base class for all errors raised by this package."""


class ArgumentError(ToolkitError, ValueError):
    """A parameter is out of range, inconsistent, or missing."""


class FormatError(ToolkitError):
    """A file is not a valid OCTV container or uses an unknown layout."""


class DataError(ToolkitError):
    """Array values violate the contract of their declared domain."""


class DegenerateInputError(ToolkitError):
    """Input is technically well formed but carries no usable signal."""


# Filesystem failures keep the builtin semantics; the alias gives the
# toolkit a single name to document and map to an exit code.
IoError = OSError
