"""Exception types raised across the package.

Most of them subclass ``ValueError`` so that callers who only care about
"bad input" can catch that, while the CLI can still tell a pipeline failure
from a usage problem.
"""

from __future__ import annotations


class SpatialCrimeError(Exception):
    """Base class for all package errors."""


class GeoDomainError(SpatialCrimeError, ValueError):
    """Coordinate out of range or not finite."""


class EmptyInputError(SpatialCrimeError, ValueError):
    pass


class TooFewPointsError(SpatialCrimeError, ValueError):
    pass


class DisconnectedInputError(SpatialCrimeError, ValueError):
    pass


class ParseError(SpatialCrimeError, ValueError):
    """Malformed input file. ``line`` is 1-based and counts the header."""

    def __init__(self, message: str, path=None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class TaxonomyError(SpatialCrimeError, ValueError):
    pass


class SingleClassError(SpatialCrimeError, ValueError):
    pass


class DimensionMismatchError(SpatialCrimeError, ValueError):
    pass


class PeriodOverlapError(SpatialCrimeError):
    """Hotspot training period overlaps the records being featurized."""


class GeocodeError(SpatialCrimeError):
    pass


class SchemaError(SpatialCrimeError, ValueError):
    pass


class ConfigError(SpatialCrimeError, ValueError):
    pass


class ClassTooSmallError(SpatialCrimeError, ValueError):
    """A class has fewer members than there are folds."""
