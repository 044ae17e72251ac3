class ReviewQAError(Exception):
    """Base class for package errors."""

    exit_code = 1


class DataError(ReviewQAError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 2


class NumericalError(ReviewQAError, ArithmeticError):
    """Non-finite objective or gradient during optimization."""

    exit_code = 3
