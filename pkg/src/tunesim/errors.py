"""Exception types shared across the package.

Each maps to a CLI exit code: ConfigError -> 2, DataError and
CheckpointError -> 3, NumericError -> 4.
"""


class TunesimError(Exception):
    """Base class for all package errors."""


class ConfigError(TunesimError):
    """Invalid, unknown, or inconsistent configuration."""


class DataError(TunesimError):
    """Malformed or missing data files, or data unusable for the task."""


class CheckpointError(TunesimError):
    """Corrupt, incompatible, or incomplete checkpoint."""


class NumericError(TunesimError):
    """Non-finite values where finite ones are required."""
