"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class TwrnntError(Exception):
    """Base class for all package errors."""


class ConfigError(TwrnntError):
    """Invalid configuration: unknown keys, bad values, missing paths."""


class DataError(TwrnntError):
    """Invalid input data: malformed files, dimension mismatches, bad labels."""


class NumericalError(TwrnntError):
    """Numerical failure: zero-probability prefixes, NaN losses, divergence."""
