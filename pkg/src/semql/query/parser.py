"""Recursive-descent parser for the query dialect.

Grammar (docs/dialect.md carries the full EBNF):

  query      := SELECT items FROM sources [WHERE or_expr]
                [GROUP BY refs] [ORDER BY key [ASC|DESC]]
                [LIMIT int] [";"]
  sources    := table [alias] ("," table [alias])* ["," Token names]
  item       := expr [AS ident]
  expr       := aggregate | call | operand
  or_expr    := and_expr (OR and_expr)*
  and_expr   := factor (AND factor)*
  factor     := "(" or_expr ")" | contains | comparison
  comparison := operand op operand

Function names resolve against the UDF registry while parsing, so an
unknown name fails fast with a position instead of mid-execution.
"""

from __future__ import annotations

import re

from ..errors import QuerySyntaxError, UnknownFunction
from ..udf import DEFAULT_REGISTRY
from .ast import (
    Aggregate,
    And,
    ColumnRef,
    Comparison,
    Contains,
    Literal,
    Or,
    Projection,
    Query,
    TableSource,
    TokenVarRef,
    UdfCall,
)

_KEYWORDS = {
    "select", "from", "where", "group", "by", "order", "limit",
    "as", "and", "or", "asc", "desc", "token",
}
_AGGREGATES = {"max", "min", "avg"}
_CONTAINS = "contains"

_TOKEN_RE = re.compile(
    r"""
    (?P<space>\s+)
  | (?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>'(?:[^']|'')*')
  | (?P<op><=|>=|!=|<>|=|<|>)
  | (?P<punct>[(),.;*$])
    """,
    re.VERBOSE,
)


class _Token:
    __slots__ = ("kind", "value", "line", "column")

    def __init__(self, kind, value, line, column):
        self.kind = kind
        self.value = value
        self.line = line
        self.column = column

    def __repr__(self):
        return f"_Token({self.kind}, {self.value!r})"


def _scan(text: str) -> list[_Token]:
    tokens = []
    line, column = 1, 1
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            raise QuerySyntaxError(
                f"unexpected character {text[pos]!r}", line, column, text
            )
        kind = match.lastgroup
        value = match.group()
        if kind != "space":
            tokens.append(_Token(kind, value, line, column))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            column = len(value) - value.rfind("\n")
        else:
            column += len(value)
        pos = match.end()
    tokens.append(_Token("eof", "", line, column))
    return tokens


class _Parser:
    def __init__(self, text: str, registry):
        self.text = text
        self.registry = registry
        self.tokens = _scan(text)
        self.pos = 0

    # --- token plumbing ---

    @property
    def current(self) -> _Token:
        return self.tokens[self.pos]

    def error(self, message: str, token=None):
        token = token or self.current
        raise QuerySyntaxError(message, token.line, token.column, self.text)

    def advance(self) -> _Token:
        token = self.current
        self.pos += 1
        return token

    def at_keyword(self, *words) -> bool:
        token = self.current
        return token.kind == "ident" and token.value.lower() in words

    def expect_keyword(self, word: str):
        if not self.at_keyword(word):
            self.error(f"expected {word.upper()}")
        return self.advance()

    def at_punct(self, value: str) -> bool:
        return self.current.kind == "punct" and self.current.value == value

    def expect_punct(self, value: str):
        if not self.at_punct(value):
            self.error(f"expected {value!r}")
        return self.advance()

    def take_identifier(self, what="identifier") -> str:
        token = self.current
        if token.kind != "ident":
            self.error(f"expected {what}")
        if token.value.lower() in _KEYWORDS:
            self.error(f"expected {what}, found keyword {token.value.upper()}")
        return self.advance().value

    # --- grammar ---

    def parse(self) -> Query:
        self.expect_keyword("select")
        projections = self.projection_list()
        self.expect_keyword("from")
        sources, token_vars = self.source_list()
        where = None
        if self.at_keyword("where"):
            self.advance()
            where = self.or_expr()
        group_by = []
        if self.at_keyword("group"):
            self.advance()
            self.expect_keyword("by")
            group_by.append(self.column_ref())
            while self.at_punct(","):
                self.advance()
                group_by.append(self.column_ref())
        order_by, order_desc = None, False
        if self.at_keyword("order"):
            self.advance()
            self.expect_keyword("by")
            order_by = self.order_key()
            if self.at_keyword("asc"):
                self.advance()
            elif self.at_keyword("desc"):
                self.advance()
                order_desc = True
        limit = None
        if self.at_keyword("limit"):
            self.advance()
            token = self.current
            if token.kind != "number" or "." in token.value:
                self.error("LIMIT takes a nonnegative integer")
            limit = int(self.advance().value)
            if limit < 0:
                self.error("LIMIT takes a nonnegative integer", token)
        if self.at_punct(";"):
            self.advance()
        if self.current.kind != "eof":
            self.error("unexpected trailing input")
        return Query(
            projections=projections,
            sources=sources,
            token_vars=token_vars,
            where=where,
            group_by=group_by,
            order_by=order_by,
            order_desc=order_desc,
            limit=limit,
            text=self.text,
        )

    def projection_list(self) -> list[Projection]:
        items = [self.projection()]
        while self.at_punct(","):
            self.advance()
            items.append(self.projection())
        return items

    def projection(self) -> Projection:
        expr = self.expression()
        alias = None
        if self.at_keyword("as"):
            self.advance()
            alias = self.take_identifier("alias")
        return Projection(expr=expr, alias=alias)

    def source_list(self):
        sources: list[TableSource] = []
        token_vars: list[str] = []
        in_tokens = False
        while True:
            if self.at_keyword("token"):
                self.advance()
                in_tokens = True
                token_vars.append(self.take_identifier("token variable"))
            elif in_tokens:
                # once Token appears, the rest of the list is variables
                token_vars.append(self.take_identifier("token variable"))
            else:
                sources.append(self.table_source())
            if self.at_punct(","):
                self.advance()
                continue
            break
        if not sources:
            self.error("FROM needs at least one table")
        seen = set()
        for source in sources:
            if source.binding in seen:
                self.error(f"duplicate table alias {source.binding!r}")
            seen.add(source.binding)
        for var in token_vars:
            if var in seen or token_vars.count(var) > 1:
                self.error(f"duplicate variable {var!r}")
            seen.add(var)
        return sources, token_vars

    def table_source(self) -> TableSource:
        if self.at_punct("$"):
            self.advance()
            name = "$" + self.take_identifier("relational variable")
        else:
            name = self.take_identifier("table name")
        alias = None
        if self.current.kind == "ident" and self.current.value.lower() not in _KEYWORDS:
            alias = self.take_identifier("alias")
        return TableSource(table=name, alias=alias)

    def order_key(self):
        # alias or (qualified) column; resolved later against projections
        ref = self.column_ref()
        if ref.qualifier is None:
            return ref.column
        return ref

    def column_ref(self) -> ColumnRef:
        if self.at_punct("$"):
            self.advance()
            qualifier = "$" + self.take_identifier("relational variable")
            self.expect_punct(".")
            return ColumnRef(qualifier=qualifier, column=self.take_identifier("column"))
        name = self.take_identifier("column or alias")
        if self.at_punct("."):
            self.advance()
            return ColumnRef(qualifier=name, column=self.take_identifier("column"))
        return ColumnRef(qualifier=None, column=name)

    def expression(self):
        token = self.current
        if token.kind == "ident" and token.value.lower() in _AGGREGATES:
            ahead = self.tokens[self.pos + 1]
            if ahead.kind == "punct" and ahead.value == "(":
                func = self.advance().value.upper()
                self.expect_punct("(")
                ref = self.column_ref()
                self.expect_punct(")")
                return Aggregate(func=func, ref=ref)
        return self.operand()

    def operand(self):
        token = self.current
        if token.kind == "number":
            value = float(token.value)
            self.advance()
            return Literal(value=int(value) if value.is_integer() and "." not in token.value and "e" not in token.value.lower() else value)
        if token.kind == "string":
            self.advance()
            return Literal(value=token.value[1:-1].replace("''", "'"))
        if self.at_punct("$") or token.kind == "ident":
            ahead = self.tokens[self.pos + 1]
            if token.kind == "ident" and ahead.kind == "punct" and ahead.value == "(":
                return self.call()
            return self.column_ref()
        self.error("expected a value, column, or function call")

    def call(self) -> UdfCall:
        name_token = self.advance()
        name = name_token.value
        if name.lower() == _CONTAINS:
            self.error("contains() is a predicate, not a value", name_token)
        try:
            entry = self.registry.resolve(name)
        except UnknownFunction:
            self.error(f"unknown function {name!r}", name_token)
        self.expect_punct("(")
        args = []
        if not self.at_punct(")"):
            args.append(self.operand())
            while self.at_punct(","):
                self.advance()
                args.append(self.operand())
        closing = self.expect_punct(")")
        if not entry.min_arity <= len(args) <= entry.max_arity:
            wanted = (
                str(entry.min_arity)
                if entry.min_arity == entry.max_arity
                else f"{entry.min_arity}..{entry.max_arity}"
            )
            self.error(
                f"{entry.name} takes {wanted} arguments, got {len(args)}", closing
            )
        return UdfCall(name=entry.name, args=tuple(args))

    def or_expr(self):
        items = [self.and_expr()]
        while self.at_keyword("or"):
            self.advance()
            items.append(self.and_expr())
        return items[0] if len(items) == 1 else Or(items=tuple(items))

    def and_expr(self):
        items = [self.factor()]
        while self.at_keyword("and"):
            self.advance()
            items.append(self.factor())
        return items[0] if len(items) == 1 else And(items=tuple(items))

    def factor(self):
        if self.at_punct("("):
            self.advance()
            inner = self.or_expr()
            self.expect_punct(")")
            return inner
        if self.at_keyword(_CONTAINS):
            return self.contains()
        left = self.operand()
        token = self.current
        if token.kind != "op":
            self.error("expected a comparison operator")
        op = self.advance().value
        right = self.operand()
        return Comparison(left=left, op="!=" if op == "<>" else op, right=right)

    def contains(self) -> Contains:
        self.advance()  # contains
        self.expect_punct("(")
        qualifier = self.take_identifier("table or alias")
        scope_column = None
        if self.at_punct("."):
            self.advance()
            if self.at_punct("*"):
                self.advance()
                scope_column = "*"
            else:
                scope_column = self.take_identifier("column")
        self.expect_punct(",")
        var = self.take_identifier("token variable")
        self.expect_punct(")")
        return Contains(scope_qualifier=qualifier, scope_column=scope_column, var=var)


def parse_query(text: str, registry=None) -> Query:
    """Parse one SELECT statement; raises QuerySyntaxError on bad input."""
    if not text or not text.strip():
        raise QuerySyntaxError("empty query", 1, 1, text or "")
    parser = _Parser(text, registry or DEFAULT_REGISTRY)
    return parser.parse()
