"""Exception hierarchy shared by all modules."""


class CSSPError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(CSSPError, ValueError):
    """An argument is out of range or inconsistent with another argument."""


class DimensionError(ParameterError):
    """Operand shapes do not match."""


class RankDeficiencyError(CSSPError, ArithmeticError):
    """A matrix is numerically rank deficient where full rank is required."""


class DegenerateSetError(CSSPError):
    """A Voronoi set is empty (or otherwise unusable) and cannot be repaired."""


class ConvergenceError(CSSPError, ArithmeticError):
    """A factorization backend failed to converge."""


class MatrixFormatError(CSSPError, ValueError):
    """A matrix file could not be parsed.

    ``location`` carries a 1-based line number (CSV) or byte offset (binary)
    when one is known.
    """

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{message} (at {location})"
        super().__init__(message)


class ValidationError(CSSPError, ValueError):
    """Matrix data contains non-finite values or is otherwise invalid."""
