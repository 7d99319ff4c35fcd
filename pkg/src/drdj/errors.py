"""Exception types shared across the package.

The CLI maps these onto exit codes: ``DataError`` subclasses exit with 2,
``NumericalError`` subclasses exit with 3.
"""


class DataError(Exception):
    """Input data could not be loaded or does not satisfy a contract."""


class SchemaError(DataError):
    """A declared column is missing from a CSV header."""


class ParseError(DataError):
    """A CSV cell could not be parsed.

    ``row`` is the 1-based data row (the header is row 0) and ``column`` the
    header name of the offending cell.
    """

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class EmptyDatasetError(DataError):
    pass


class SplitSizeError(DataError):
    pass


class NumericalError(Exception):
    """An optimizer produced a non-finite value."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class InfeasibleError(NumericalError):
    """Radii are too small for the requested certificate."""


class InfeasibleModelWarning(UserWarning):
    """An objective was evaluated at a point outside its feasible set."""
