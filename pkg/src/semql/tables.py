"""Relational tables and their schemas.

A table is a named list of rows over typed columns. Column kinds drive
textification: primary keys become row anchors, numeric columns go
through an encoder, text and image-reference columns become word
tokens.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field

from .errors import SchemaError

COLUMN_KINDS = ("primary_key", "text", "numeric", "image")
NUMERIC_MODES = ("literal", "rounded", "kmeans", "range_rule")

_NAME_CLEAN_RE = re.compile(r"[^a-z0-9_]+")


def canonical_column_name(name: str) -> str:
    """Lowercased column name reduced to the token charset."""
    cleaned = _NAME_CLEAN_RE.sub("_", name.strip().lower()).strip("_")
    return cleaned or "column"


@dataclass
class RangeRule:
    """One named bucket; max_value None marks the open-ended rule."""

    name: str
    max_value: float | None = None


@dataclass
class ColumnSchema:
    name: str
    kind: str = "text"
    # numeric encoding controls, ignored for non-numeric kinds
    mode: str = "rounded"
    precision: int = 2
    k: int = 0
    ranges: list[RangeRule] = field(default_factory=list)
    # textification controls
    weight: float = 1.0
    prepend_name: bool = False

    def __post_init__(self):
        if self.kind not in COLUMN_KINDS:
            raise SchemaError(f"unknown column kind {self.kind!r} for {self.name!r}")
        if self.kind == "numeric" and self.mode not in NUMERIC_MODES:
            raise SchemaError(f"unknown numeric mode {self.mode!r} for {self.name!r}")
        self.canonical = canonical_column_name(self.name)

    @property
    def empty_marker(self) -> str:
        return f"{self.canonical}_empty"


@dataclass
class RelationalTable:
    name: str
    columns: list[ColumnSchema]
    rows: list[dict] = field(default_factory=list)

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError(f"duplicate column names in table {self.name!r}")
        self._by_name = {c.name: c for c in self.columns}
        self._by_lower = {c.name.lower(): c for c in self.columns}

    def column(self, name: str) -> ColumnSchema:
        col = self._by_name.get(name) or self._by_lower.get(name.lower())
        if col is None:
            raise SchemaError(f"table {self.name!r} has no column {name!r}")
        return col

    def has_column(self, name: str) -> bool:
        return name in self._by_name or name.lower() in self._by_lower

    @property
    def primary_key(self) -> ColumnSchema | None:
        for c in self.columns:
            if c.kind == "primary_key":
                return c
        return None

    def key_of(self, row: dict):
        pk = self.primary_key
        return None if pk is None else row.get(pk.name)

    def check_keys(self):
        """Primary key cells must be present and unique."""
        pk = self.primary_key
        if pk is None:
            return
        seen = set()
        for i, row in enumerate(self.rows):
            value = row.get(pk.name)
            if value is None or str(value).strip() == "":
                raise SchemaError(f"table {self.name!r} row {i}: empty primary key")
            if value in seen:
                raise SchemaError(f"table {self.name!r}: duplicate key {value!r}")
            seen.add(value)


def schema_from_dict(spec: dict) -> list[ColumnSchema]:
    try:
        column_specs = spec["columns"]
    except (KeyError, TypeError):
        raise SchemaError("schema file needs a top-level 'columns' list")
    columns = []
    for entry in column_specs:
        if "name" not in entry:
            raise SchemaError("schema column entry without a 'name'")
        ranges = [
            RangeRule(r["name"], r.get("max"))
            for r in entry.get("ranges", [])
        ]
        columns.append(
            ColumnSchema(
                name=entry["name"],
                kind=entry.get("kind", "text"),
                mode=entry.get("mode", "rounded"),
                precision=int(entry.get("precision", 2)),
                k=int(entry.get("k", 0)),
                ranges=ranges,
                weight=float(entry.get("weight", 1.0)),
                prepend_name=bool(entry.get("prepend_name", False)),
            )
        )
    if not columns:
        raise SchemaError("schema declares no columns")
    pk_count = sum(1 for c in columns if c.kind == "primary_key")
    if pk_count > 1:
        raise SchemaError("schema declares more than one primary key")
    return columns


def load_schema(path) -> list[ColumnSchema]:
    with open(path, encoding="utf-8") as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"schema file {path}: {exc}") from exc
    return schema_from_dict(spec)


def _parse_cell(raw: str, column: ColumnSchema):
    if raw is None:
        return None
    text = raw.strip()
    if text == "":
        return None
    if column.kind == "numeric":
        try:
            return float(text)
        except ValueError:
            raise SchemaError(
                f"column {column.name!r}: non-numeric cell {raw!r}"
            ) from None
    return raw


def load_table_csv(path, name: str, columns: list[ColumnSchema]) -> RelationalTable:
    """Load an RFC-4180 CSV with a header row against a declared schema."""
    table = RelationalTable(name=name, columns=columns)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty CSV") from None
        declared = [c.name for c in columns]
        if [h.strip() for h in header] != declared:
            raise SchemaError(
                f"{path}: header {header!r} does not match schema {declared!r}"
            )
        for line_no, record in enumerate(reader, start=2):
            if not record or all(cell.strip() == "" for cell in record):
                continue
            if len(record) != len(columns):
                raise SchemaError(
                    f"{path} line {line_no}: expected {len(columns)} cells,"
                    f" got {len(record)}"
                )
            row = {
                col.name: _parse_cell(cell, col)
                for col, cell in zip(columns, record)
            }
            table.rows.append(row)
    table.check_keys()
    return table


def write_table_csv(table: RelationalTable, path):
    """Inverse of load_table_csv; missing cells serialize as empty."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([c.name for c in table.columns])
        for row in table.rows:
            record = []
            for col in table.columns:
                value = row.get(col.name)
                if value is None:
                    record.append("")
                elif isinstance(value, float) and value.is_integer():
                    record.append(str(int(value)))
                else:
                    record.append(str(value))
            writer.writerow(record)
