"""Exception types mapped to CLI exit codes."""


class DataError(ValueError):
    """Malformed or inconsistent input data (exit code 2)."""


class NumericalError(RuntimeError):
    """A fit or decomposition produced unusable numbers (exit code 3)."""
