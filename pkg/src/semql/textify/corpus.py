"""Token sentences and whole-table textification.

One table row becomes one sentence. Foreign-key cells splice in the
referenced row's tokens (minus that row's own key, which the cell
token already names), so related entities share context. Sentences are
written as plain token lines plus a .meta.jsonl sidecar that keeps the
(table, row_key, per-token column) provenance a plain text file loses.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import DanglingForeignKey, DataError, SchemaError
from ..tables import ColumnSchema, RelationalTable
from .numeric import NumericEncoder, fit_numeric_encoder
from .text import normalize_free_text, normalize_text_token

EXTERNAL_KB_TABLE = "external_kb"


@dataclass
class TokenSentence:
    tokens: list[str]
    table: str | None = None
    row_key: str | None = None
    columns: list[str] | None = field(default=None)

    def __post_init__(self):
        if self.columns is not None and len(self.columns) != len(self.tokens):
            raise DataError("column provenance must parallel the tokens")


def build_encoders(table: RelationalTable) -> dict[str, NumericEncoder]:
    """Fit one encoder per numeric column from the table's own values."""
    encoders = {}
    for column in table.columns:
        if column.kind != "numeric":
            continue
        values = [row.get(column.name) for row in table.rows]
        encoders[column.name] = fit_numeric_encoder(values, column)
    return encoders


def cell_tokens(column: ColumnSchema, value, encoder: NumericEncoder | None = None) -> list[str]:
    """Tokens for one cell, honoring the column's encoding controls."""
    if column.kind == "numeric":
        if encoder is None:
            raise SchemaError(f"numeric column {column.name!r} needs an encoder")
        return [encoder.encode(value)]
    tokens = normalize_text_token(value, column)
    if column.prepend_name:
        tokens = [
            token if token == column.empty_marker else f"{column.canonical}_{token}"
            for token in tokens
        ]
    return tokens


class _TableContext:
    """A table with everything textification needs."""

    def __init__(self, table, encoders=None, fk_links=None):
        self.table = table
        self.encoders = build_encoders(table) if encoders is None else encoders
        self.fk_links = fk_links or {}
        self._rows_by_key = None

    def row_for_key(self, key):
        if self._rows_by_key is None:
            pk = self.table.primary_key
            if pk is None:
                raise SchemaError(
                    f"table {self.table.name!r} is referenced but has no primary key"
                )
            self._rows_by_key = {str(row[pk.name]): row for row in self.table.rows}
        return self._rows_by_key.get(str(key))


def _row_tokens(ctx: _TableContext, row, catalog, visited):
    """Token/column pairs for one row, expanding foreign keys."""
    tokens, columns = [], []
    pk = ctx.table.primary_key
    for column in ctx.table.columns:
        value = row.get(column.name)
        produced = cell_tokens(column, value, ctx.encoders.get(column.name))
        tokens.extend(produced)
        columns.extend([column.name] * len(produced))
        ref_name = ctx.fk_links.get(column.name)
        if ref_name is None or value is None:
            continue
        if catalog is None or ref_name not in catalog:
            raise SchemaError(
                f"column {column.name!r} references unknown table {ref_name!r}"
            )
        ref_ctx = catalog[ref_name]
        ref_row = ref_ctx.row_for_key(value)
        if ref_row is None:
            raise DanglingForeignKey(
                f"{ctx.table.name}.{column.name}={value!r} has no row in {ref_name!r}"
            )
        mark = (ref_name, str(value))
        if mark in visited:
            continue
        ref_tokens, ref_columns = _row_tokens(
            ref_ctx, ref_row, catalog, visited | {mark}
        )
        ref_pk = ref_ctx.table.primary_key
        for token, col in zip(ref_tokens, ref_columns):
            # the key token is already present as the FK cell's token
            if ref_pk is not None and col == ref_pk.name:
                continue
            tokens.append(token)
            columns.append(col)
    return tokens, columns


def textify_table(
    table: RelationalTable,
    encoders: dict[str, NumericEncoder] | None = None,
    fk_links: dict[str, str] | None = None,
    catalog: dict[str, "_TableContext"] | None = None,
) -> list[TokenSentence]:
    """One sentence per row; the primary key token anchors the row."""
    ctx = _TableContext(table, encoders, fk_links)
    if catalog is None and fk_links:
        raise SchemaError("fk_links given without a catalog of referenced tables")
    sentences = []
    pk = table.primary_key
    for row in table.rows:
        start = (table.name, str(row.get(pk.name))) if pk else None
        visited = {start} if start else set()
        tokens, columns = _row_tokens(ctx, row, catalog, visited)
        row_key = None
        if pk is not None:
            for token, col in zip(tokens, columns):
                if col == pk.name:
                    row_key = token
                    break
        sentences.append(
            TokenSentence(tokens=tokens, table=table.name, row_key=row_key, columns=columns)
        )
    return sentences


def make_catalog(entries) -> dict[str, _TableContext]:
    """entries: iterable of (table, encoders|None, fk_links|None)."""
    catalog = {}
    for table, encoders, fk_links in entries:
        catalog[table.name] = _TableContext(table, encoders, fk_links)
    return catalog


def textify_catalog(catalog: dict[str, _TableContext]) -> list[TokenSentence]:
    sentences = []
    for name in catalog:
        ctx = catalog[name]
        sentences.extend(
            textify_table(ctx.table, ctx.encoders, ctx.fk_links, catalog)
        )
    return sentences


def append_external_kb(
    sentences: list[TokenSentence], lines, repetitions: int = 1
) -> list[TokenSentence]:
    """Add hand-written knowledge lines to a corpus.

    Each non-empty line becomes one sentence, repeated `repetitions`
    times so small facts can outweigh their single occurrence.
    """
    if repetitions < 1:
        raise DataError(f"repetitions must be >= 1, got {repetitions}")
    result = list(sentences)
    for line in lines:
        tokens = normalize_free_text(line)
        if not tokens:
            continue
        for _ in range(repetitions):
            result.append(
                TokenSentence(
                    tokens=list(tokens),
                    table=EXTERNAL_KB_TABLE,
                    row_key=tokens[0],
                )
            )
    return result


def _meta_path(path) -> Path:
    return Path(str(path) + ".meta.jsonl")


def write_corpus(sentences: list[TokenSentence], path):
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for sentence in sentences:
            fh.write(" ".join(sentence.tokens))
            fh.write("\n")
    with open(_meta_path(path), "w", encoding="utf-8", newline="\n") as fh:
        for sentence in sentences:
            fh.write(
                json.dumps(
                    {
                        "table": sentence.table,
                        "row_key": sentence.row_key,
                        "columns": sentence.columns,
                    },
                    separators=(",", ":"),
                )
            )
            fh.write("\n")


def read_corpus(path) -> list[TokenSentence]:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        token_lines = [line.split() for line in fh if line.strip()]
    meta_file = _meta_path(path)
    metas = None
    if meta_file.exists():
        with open(meta_file, encoding="utf-8") as fh:
            metas = [json.loads(line) for line in fh if line.strip()]
        if len(metas) != len(token_lines):
            raise DataError(
                f"{meta_file} has {len(metas)} entries for {len(token_lines)} sentences"
            )
    sentences = []
    for i, tokens in enumerate(token_lines):
        meta = metas[i] if metas else {}
        sentences.append(
            TokenSentence(
                tokens=tokens,
                table=meta.get("table"),
                row_key=meta.get("row_key"),
                columns=meta.get("columns"),
            )
        )
    return sentences
