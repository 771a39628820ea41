"""Exception types shared across the package.

The CLI maps these to exit codes: DataError -> 2, DivergenceError -> 3.
"""


class RelfactorError(Exception):
    """Base class for all relfactor errors."""


class DataError(RelfactorError):
    """Malformed or inconsistent input data (schema, tuples, model files)."""


class DivergenceError(RelfactorError):
    """Training produced non-finite or runaway parameters."""
