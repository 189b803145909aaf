"""Numeric column encoders.

Four interchangeable ways to map a numeric cell to one token:

  literal     col_0_75        value as-is, '.' becomes '_'
  rounded     col_0_75        round to a fixed precision first (default)
  kmeans      cluster_3       1-D k-means bucket, ids ascend by centroid
  range_rule  choc_dark       first matching named range

Missing values always yield the column's empty marker.
"""

from __future__ import annotations

import numpy as np

from ..errors import InsufficientData, InvalidK, SchemaError
from ..tables import ColumnSchema, canonical_column_name

_KMEANS_MAX_ITERS = 100
_KMEANS_REL_TOL = 1e-9


def _number_fragment(value: float) -> str:
    """Stable token fragment for a number; 25.00 and 25 coincide."""
    value = float(value)
    text = str(int(value)) if value.is_integer() else repr(value)
    sign = ""
    if text.startswith("-"):
        sign, text = "neg", text[1:]
    return sign + text.replace(".", "_")


def fit_kmeans_centroids(values, k: int) -> np.ndarray:
    """Deterministic 1-D Lloyd iteration; returns ascending centroids."""
    if k < 1:
        raise InvalidK(f"k must be >= 1, got {k}")
    data = np.asarray(sorted(float(v) for v in values), dtype=np.float64)
    distinct = np.unique(data)
    if distinct.size < k:
        raise InsufficientData(
            f"kmeans({k}) needs {k} distinct values, got {distinct.size}"
        )
    # evenly spaced quantiles over distinct values keep the init spread
    quantiles = (np.arange(k) + 0.5) / k
    centroids = np.quantile(distinct, quantiles)
    for _ in range(_KMEANS_MAX_ITERS):
        assign = np.argmin(np.abs(data[:, None] - centroids[None, :]), axis=1)
        updated = centroids.copy()
        for cluster in range(k):
            members = data[assign == cluster]
            if members.size:
                updated[cluster] = members.mean()
            else:
                # hand the emptied cluster the worst-fit value
                gaps = np.abs(data - centroids[assign])
                updated[cluster] = data[int(np.argmax(gaps))]
        scale = np.maximum(np.abs(centroids), 1.0)
        change = float(np.max(np.abs(updated - centroids) / scale))
        centroids = updated
        if change < _KMEANS_REL_TOL:
            break
    return np.sort(centroids)


class NumericEncoder:
    """Maps one column's numeric cells to tokens."""

    def __init__(self, column: ColumnSchema, centroids: np.ndarray | None = None):
        self.column = column
        self.mode = column.mode
        self.centroids = centroids
        if self.mode == "range_rule":
            if not column.ranges:
                raise SchemaError(
                    f"column {column.name!r}: range_rule needs at least one range"
                )
            bounded = [r for r in column.ranges if r.max_value is not None]
            if bounded != sorted(bounded, key=lambda r: r.max_value):
                raise SchemaError(
                    f"column {column.name!r}: range bounds must ascend"
                )

    @property
    def stateful(self) -> bool:
        return self.centroids is not None

    def cluster_of(self, value: float) -> int:
        # ties break toward the lower id (argmin picks the first)
        return int(np.argmin(np.abs(self.centroids - float(value))))

    def encode(self, value) -> str:
        column = self.column
        if value is None:
            return column.empty_marker
        value = float(value)
        if self.mode == "literal":
            return f"{column.canonical}_{_number_fragment(value)}"
        if self.mode == "rounded":
            return f"{column.canonical}_{_number_fragment(round(value, column.precision))}"
        if self.mode == "kmeans":
            token = f"cluster_{self.cluster_of(value)}"
            return f"{column.canonical}_{token}" if column.prepend_name else token
        # range_rule: first rule whose bound admits the value; an
        # open-ended last rule catches the rest, otherwise the last
        # named range does
        for rule in column.ranges:
            if rule.max_value is None or value <= rule.max_value:
                name = canonical_column_name(rule.name)
                break
        else:
            name = canonical_column_name(column.ranges[-1].name)
        return f"{column.canonical}_{name}" if column.prepend_name else name


def fit_numeric_encoder(values, column: ColumnSchema) -> NumericEncoder:
    """Fit an encoder on a column's non-missing values.

    Only kmeans carries fitted state; the other modes are stateless, so
    an all-missing column is fine for them.
    """
    if column.kind != "numeric":
        raise SchemaError(f"column {column.name!r} is not numeric")
    if column.mode != "kmeans":
        return NumericEncoder(column)
    present = [float(v) for v in values if v is not None]
    if column.k < 1:
        raise InvalidK(f"column {column.name!r}: kmeans needs k >= 1")
    centroids = fit_kmeans_centroids(present, column.k)
    return NumericEncoder(column, centroids=centroids)


def encode_numeric(value, column: ColumnSchema, encoder: NumericEncoder) -> str:
    if encoder.column.name != column.name:
        raise SchemaError(
            f"encoder fitted for {encoder.column.name!r}, used on {column.name!r}"
        )
    return encoder.encode(value)
