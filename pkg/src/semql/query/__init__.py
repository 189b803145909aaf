"""SQL-flavored query dialect with semantic predicates."""

from .parser import parse_query
from .executor import Catalog, QueryContext, TableHandle, execute
from .render import render_csv, render_json, render_table

__all__ = [
    "parse_query",
    "execute",
    "Catalog",
    "TableHandle",
    "QueryContext",
    "render_table",
    "render_csv",
    "render_json",
]
