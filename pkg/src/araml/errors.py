"""Exception hierarchy shared across the library.

Exit-code mapping used by the CLI: UsageError -> 1, DataError -> 2,
NumericError -> 3.
"""


class AramlError(Exception):
    """Base class for all library errors."""


class UsageError(AramlError):
    """Bad configuration or invalid call arguments."""


class DimensionError(UsageError):
    """Axis / shape mismatch between tables and distributions."""


class ParameterError(UsageError):
    """Invalid numeric parameter (non-positive shape, bad range, ...)."""


class DataError(AramlError):
    """Malformed input data (parse failures, schema violations)."""


class NumericError(AramlError):
    """Non-finite values or failed numeric procedures."""
