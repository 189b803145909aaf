"""Query syntax tree.

Plain dataclasses; the parser builds them, the executor walks them.
Qualifiers starting with "$" are relational variables the executor
expands before evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Literal:
    value: object  # str | float | int

    def describe(self) -> str:
        if isinstance(self.value, str):
            return f"'{self.value}'"
        return str(self.value)


@dataclass(frozen=True)
class ColumnRef:
    qualifier: str | None
    column: str

    @property
    def is_variable(self) -> bool:
        return self.qualifier is not None and self.qualifier.startswith("$")

    @property
    def column_is_variable(self) -> bool:
        # a variable qualifier makes its column name a variable too
        return self.is_variable

    def describe(self) -> str:
        return f"{self.qualifier}.{self.column}" if self.qualifier else self.column


@dataclass(frozen=True)
class TokenVarRef:
    name: str

    def describe(self) -> str:
        return self.name


@dataclass(frozen=True)
class UdfCall:
    name: str
    args: tuple

    def describe(self) -> str:
        inner = ", ".join(arg.describe() for arg in self.args)
        return f"{self.name}({inner})"


@dataclass(frozen=True)
class Aggregate:
    func: str  # MAX | MIN | AVG
    ref: ColumnRef

    def describe(self) -> str:
        return f"{self.func}({self.ref.describe()})"


@dataclass(frozen=True)
class Comparison:
    left: object
    op: str  # = != <> < > <= >=
    right: object


@dataclass(frozen=True)
class Contains:
    scope_qualifier: str  # alias or table name
    scope_column: str | None  # None = whole relation, "*" = whole row
    var: str


@dataclass(frozen=True)
class And:
    items: tuple


@dataclass(frozen=True)
class Or:
    items: tuple


@dataclass(frozen=True)
class Projection:
    expr: object
    alias: str | None

    @property
    def label(self) -> str:
        return self.alias if self.alias else self.expr.describe()


@dataclass(frozen=True)
class TableSource:
    table: str  # table name, or "$R" for a relational variable
    alias: str | None

    @property
    def is_variable(self) -> bool:
        return self.table.startswith("$")

    @property
    def binding(self) -> str:
        return self.alias if self.alias else self.table


@dataclass
class Query:
    projections: list[Projection]
    sources: list[TableSource]
    token_vars: list[str]
    where: object | None = None
    group_by: list[ColumnRef] = field(default_factory=list)
    order_by: object | None = None  # ColumnRef | alias str
    order_desc: bool = False
    limit: int | None = None
    text: str = ""
