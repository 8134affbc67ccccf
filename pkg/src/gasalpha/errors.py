"""Exception hierarchy shared by every stage.

Each class carries the CLI exit code it maps to, so the command-line layer
can translate failures without knowing where they were raised.
"""


class GasError(Exception):
    exit_code = 1


class ConfigurationError(GasError, ValueError):
    """Invalid parameters, infeasible split geometry, bad config files."""

    exit_code = 2


class DataError(GasError, ValueError):
    exit_code = 3


class FormatError(DataError):
    """Unparseable input file. ``row`` is 1-based counting the header as row 1."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class SchemaError(DataError):
    pass


class EmptyDataError(DataError):
    pass


class DomainError(DataError):
    pass


class DegenerateTargetError(DataError):
    pass


class ShapeError(DataError):
    pass


class EmptyColumnError(DataError):
    pass


class ExprReferenceError(DataError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class ParseError(DataError):
    def __init__(self, message: str, position: int):
        self.position = position
        super().__init__(f"{message} at position {position}")


class UndefinedCorrelationError(DataError):
    pass


class UndefinedSignalError(DataError):
    pass


class SelectionFailure(DataError):
    pass


class SearchFailure(DataError):
    pass


class DependencyError(GasError):
    """A stage was asked to run before the stage producing its input."""

    exit_code = 4
