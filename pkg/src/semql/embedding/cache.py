"""Per-row attribute vectors.

For each (table, row key) the cache holds one averaged vector per
column: the mean of the member-token vectors of that cell. UDFs that
compare entities attribute-by-attribute read from here instead of
re-resolving tokens on every call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import UnknownKey
from ..tables import RelationalTable
from ..textify.corpus import build_encoders, cell_tokens
from .model import EmbeddingModel, resolve_vectors


@dataclass
class RowAttributeCache:
    dim: int
    entries: dict = field(default_factory=dict)  # (table, key) -> {column: vector}
    _key_index: dict = field(default_factory=dict, repr=False)

    def put(self, table: str, key: str, columns: dict):
        self.entries[(table, key)] = columns
        self._key_index.setdefault(key, []).append((table, key))

    def columns_for(self, table: str, key: str) -> dict:
        entry = self.entries.get((table, key))
        if entry is None:
            raise UnknownKey(f"no cached row for {table!r} key {key!r}")
        return entry

    def for_key(self, key: str) -> dict:
        """Column vectors for a key, table inferred.

        Keys are primary keys, so one key names one row; a collision
        across tables is ambiguous and refused.
        """
        hits = self._key_index.get(key, [])
        if not hits:
            raise UnknownKey(f"no cached row for key {key!r}")
        if len(hits) > 1:
            tables = sorted(table for table, _ in hits)
            raise UnknownKey(f"key {key!r} is ambiguous across tables {tables}")
        return self.entries[hits[0]]

    def has_key(self, key: str) -> bool:
        return key in self._key_index

    def column_vector(self, key: str, column: str) -> np.ndarray:
        columns = self.for_key(key)
        # schema casing varies; match case-insensitively
        vec = columns.get(column)
        if vec is None:
            lowered = column.lower()
            for name, value in columns.items():
                if name.lower() == lowered:
                    vec = value
                    break
        if vec is None:
            raise UnknownKey(f"key {key!r} has no cached column {column!r}")
        return vec

    def merge(self, other: "RowAttributeCache"):
        for (table, key), columns in other.entries.items():
            self.put(table, key, columns)

    def __len__(self) -> int:
        return len(self.entries)


def build_row_attribute_cache(
    table: RelationalTable,
    model: EmbeddingModel,
    encoders=None,
    policy: str = "skip_with_default",
) -> RowAttributeCache:
    """Average each cell's token vectors under the given OOV policy."""
    encoders = build_encoders(table) if encoders is None else encoders
    cache = RowAttributeCache(dim=model.dim)
    pk = table.primary_key
    for row in table.rows:
        key = None
        columns = {}
        for column in table.columns:
            tokens = cell_tokens(column, row.get(column.name), encoders.get(column.name))
            vectors = resolve_vectors(tokens, model, policy)
            columns[column.name] = vectors.mean(axis=0).astype(np.float32)
            if pk is not None and column.name == pk.name:
                key = tokens[0]
        if key is not None:
            cache.put(table.name, key, columns)
    return cache
