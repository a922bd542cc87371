"""Exception types shared across the package, each mapped to a CLI exit code."""


class XmodalError(Exception):
    """Base class; exit_code is what the CLI returns when the error escapes."""

    exit_code = 1


class UsageError(XmodalError):
    """Bad command line or configuration keys."""

    exit_code = 1


class DataError(XmodalError):
    """Malformed input data or a violated interface contract."""

    exit_code = 2


class NumericalError(XmodalError):
    """Non-finite values where finite ones are required (training aborts)."""

    exit_code = 3
