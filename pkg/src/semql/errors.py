"""Exception types shared across the package.

Each layer raises the most specific type that applies; the CLI maps
families of these onto process exit codes.
"""


class SemqlError(Exception):
    """Base class for every error this package raises on purpose."""


class ConfigError(SemqlError):
    """Bad or inconsistent configuration (files, flags, parameters)."""


class DataError(SemqlError):
    """Input data violates a contract (schemas, corpora, model files)."""


class SchemaError(DataError):
    """Table schema is missing, malformed, or contradicts the data."""


class DanglingForeignKey(DataError):
    """A foreign key cell references a row key that does not exist."""


class EmptyCorpus(DataError):
    """Training requires at least one non-empty sentence."""


class InsufficientData(DataError):
    """Not enough distinct values to fit the requested encoder."""


class MalformedHierarchy(DataError):
    """A type hierarchy string has fewer than two usable parts."""


class FormatError(DataError):
    """A serialized file does not match its declared format."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ChecksumMismatch(DataError):
    """Stored checksum does not match the file on disk."""


class VersionMismatch(DataError):
    """Stored format version is not one this build can read."""


class DimensionMismatch(SemqlError):
    """Vector dimensionalities disagree."""


class ZeroVector(SemqlError):
    """An operation needs a nonzero vector and got a (near) zero one."""


class UnknownToken(SemqlError):
    """Token absent from the vocabulary under the strict lookup policy."""


class AllTokensUnknown(SemqlError):
    """None of the tokens on one side of an operation resolved to vectors."""


class UnknownKey(SemqlError):
    """Row key not present in the row-attribute cache or vocabulary."""


class UnknownConcept(SemqlError):
    """External knowledge base has no entry for the requested concept."""


class InvalidFlag(SemqlError):
    """Flag value outside the documented set."""


class DegenerateDirection(SemqlError):
    """Analogy direction vector has (near) zero norm."""


class InvalidK(SemqlError):
    """Cluster or neighbor count outside the valid range."""


class QueryError(SemqlError):
    """Base class for query compilation and execution failures."""


class QuerySyntaxError(QueryError):
    """Query text failed to parse; carries the position of the failure."""

    def __init__(self, message: str, line: int = 1, column: int = 1, text: str = ""):
        super().__init__(f"{message} at line {line}, column {column}")
        self.bare_message = message
        self.line = line
        self.column = column
        self.text = text


class UnknownFunction(QueryError):
    """Function name not present in the UDF registry."""


class UnknownTable(QueryError):
    """FROM references a table the catalog does not hold."""


class UnknownColumn(QueryError):
    """Column reference does not resolve against any table in scope."""


class UnconstrainedTokenVariable(QueryError):
    """A token variable is never bound by a contains() predicate."""


class NoValidSubstitution(QueryError):
    """No (table, column) substitution for a relational variable type-checks."""
