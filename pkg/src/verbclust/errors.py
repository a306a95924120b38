"""Exception types shared across the pipeline."""


class DataError(Exception):
    """Raised when an input file or record violates its format contract."""


class NumericError(Exception):
    """Raised when a numerical routine produces non-finite values or fails
    to converge in a way that invalidates its output."""
