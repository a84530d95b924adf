"""Exception hierarchy shared across the package."""


class AaeError(Exception):
    """Base class for all package errors."""


class ValidationError(AaeError, ValueError):
    """Bad arguments, labels, or configuration values."""


class ShapeError(ValidationError):
    """Array dimensions do not match what an operation expects."""


class UsageError(AaeError, RuntimeError):
    """An API was used out of order (e.g. a stale forward cache)."""


class ParseError(ValidationError):
    """Malformed CSV / ARFF / container input."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class SchemaError(ValidationError):
    """A required column or attribute is missing."""


class DegenerateInputError(ValidationError):
    """Input data cannot support the requested fit (e.g. all-constant features)."""


class DivergedTrainingError(AaeError, FloatingPointError):
    """Training produced non-finite or exploding losses."""

    def __init__(self, message, phase=None, epoch=None):
        self.phase = phase
        self.epoch = epoch
        super().__init__(message)
