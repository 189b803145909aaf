"""Nearest-neighbor scoring over the vocabulary.

Exact mode is one matrix-vector product. Two approximate strategies
narrow the candidate set first and re-rank the survivors with exact
cosines, so approximate scores are always true cosines; only coverage
is approximate:

  lsh      sign-random-projection signatures, probing all buckets
           within a small Hamming radius of the query's signature
  kmeans   spherical k-means cells, probing the n nearest centroids

Both index kinds persist to a versioned binary file; rebuilding from
the same (model, seed) reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .embedding.model import EmbeddingModel
from .embedding.vocab import SENTINEL
from .errors import ConfigError, DimensionMismatch, FormatError, InvalidK, ZeroVector

_NORM_EPS = 1e-12
_MAGIC = b"SQIX"
_INDEX_VERSION = 1
_KIND_LSH = 1
_KIND_KMEANS = 2
MAX_PROBE_RADIUS = 2


def _unit(vector) -> np.ndarray:
    vector = np.asarray(vector, dtype=np.float64).ravel()
    norm = np.linalg.norm(vector)
    if norm < _NORM_EPS:
        raise ZeroVector("cannot score against a zero query vector")
    return vector / norm


def batch_scores(query, model: EmbeddingModel) -> np.ndarray:
    """Cosine of the query against every vocabulary row."""
    query = _unit(query)
    if query.shape[0] != model.dim:
        raise DimensionMismatch(
            f"query dimension {query.shape[0]} != model dimension {model.dim}"
        )
    return model.vectors.astype(np.float64) @ query


@dataclass
class LshIndex:
    bits: int
    seed: int
    planes: np.ndarray  # (bits, dim) float64
    signatures: np.ndarray  # (V,) uint64
    tokens: list[str]
    buckets: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.buckets:
            for row, signature in enumerate(self.signatures):
                self.buckets.setdefault(int(signature), []).append(row)

    @property
    def dim(self) -> int:
        return int(self.planes.shape[1])

    def signature_of(self, vector) -> int:
        vector = np.asarray(vector, dtype=np.float64).ravel()
        if vector.shape[0] != self.dim:
            raise DimensionMismatch(
                f"vector dimension {vector.shape[0]} != index dimension {self.dim}"
            )
        bits = (self.planes @ vector) >= 0.0
        signature = 0
        for i, bit in enumerate(bits):
            if bit:
                signature |= 1 << i
        return signature


def build_lsh_index(model: EmbeddingModel, bits: int = 16, seed: int = 0) -> LshIndex:
    if not 1 <= bits <= 64:
        raise ConfigError(f"lsh bits must be in 1..64, got {bits}")
    rng = np.random.default_rng(seed)
    planes = rng.standard_normal((bits, model.dim))
    projections = model.vectors.astype(np.float64) @ planes.T >= 0.0
    weights = (1 << np.arange(bits, dtype=np.uint64))
    signatures = (projections.astype(np.uint64) * weights).sum(axis=1).astype(np.uint64)
    return LshIndex(
        bits=bits,
        seed=seed,
        planes=planes,
        signatures=signatures,
        tokens=list(model.tokens),
    )


def _masks_within_radius(bits: int, radius: int):
    """All XOR masks with popcount <= radius, radius itself included."""
    yield 0
    if radius >= 1:
        for i in range(bits):
            yield 1 << i
    if radius >= 2:
        for i in range(bits):
            for j in range(i + 1, bits):
                yield (1 << i) | (1 << j)


def lsh_candidates(index: LshIndex, query, radius: int = 1) -> set[str]:
    """Tokens whose signature lies within the Hamming radius."""
    if not 0 <= radius <= MAX_PROBE_RADIUS:
        raise ConfigError(
            f"probe radius must be in 0..{MAX_PROBE_RADIUS}, got {radius}"
        )
    signature = index.signature_of(query)
    names = set()
    for mask in _masks_within_radius(index.bits, radius):
        for row in index.buckets.get(signature ^ mask, ()):
            names.add(index.tokens[row])
    return names


@dataclass
class KMeansIndex:
    k: int
    seed: int
    centroids: np.ndarray  # (k, dim) float64 unit rows
    assignment: np.ndarray  # (V,) int32
    objective_history: list[float]
    tokens: list[str]
    members: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.members:
            for row, cluster in enumerate(self.assignment):
                self.members.setdefault(int(cluster), []).append(row)

    @property
    def dim(self) -> int:
        return int(self.centroids.shape[1])


def build_kmeans_index(
    model: EmbeddingModel, k: int, seed: int = 0, max_iters: int = 50
) -> KMeansIndex:
    """Spherical k-means: cosine objective, unit centroids."""
    count = len(model)
    if not 1 <= k <= count:
        raise InvalidK(f"k must be in 1..{count}, got {k}")
    rows = model.vectors.astype(np.float64)
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    norms[norms < _NORM_EPS] = 1.0
    rows = rows / norms
    rng = np.random.default_rng(seed)
    centroids = rows[rng.choice(count, size=k, replace=False)].copy()
    history: list[float] = []
    assignment = np.zeros(count, dtype=np.int32)
    for _ in range(max_iters):
        sims = rows @ centroids.T
        fresh = np.argmax(sims, axis=1).astype(np.int32)
        best = sims[np.arange(count), fresh]
        history.append(float(best.sum()))
        converged = bool(history and np.array_equal(fresh, assignment) and len(history) > 1)
        assignment = fresh
        if converged:
            break
        for cluster in range(k):
            mask = assignment == cluster
            if mask.any():
                centroid = rows[mask].mean(axis=0)
            else:
                # re-seed an empty cluster with the worst-served vector
                centroid = rows[int(np.argmin(best))]
            norm = np.linalg.norm(centroid)
            centroids[cluster] = centroid / norm if norm > _NORM_EPS else centroid
    return KMeansIndex(
        k=k,
        seed=seed,
        centroids=centroids,
        assignment=assignment,
        objective_history=history,
        tokens=list(model.tokens),
    )


def kmeans_candidates(index: KMeansIndex, query, n_probe: int = 1) -> set[str]:
    """Tokens living in the n_probe centroids nearest the query."""
    if not 1 <= n_probe <= index.k:
        raise InvalidK(f"n_probe must be in 1..{index.k}, got {n_probe}")
    query = _unit(query)
    if query.shape[0] != index.dim:
        raise DimensionMismatch(
            f"query dimension {query.shape[0]} != index dimension {index.dim}"
        )
    sims = index.centroids @ query
    order = sorted(range(index.k), key=lambda c: (-sims[c], c))
    names = set()
    for cluster in order[:n_probe]:
        for row in index.members.get(cluster, ()):
            names.add(index.tokens[row])
    return names


# --- top-k strategies --------------------------------------------------------


@dataclass
class ExactStrategy:
    name = "exact"


@dataclass
class LshStrategy:
    index: LshIndex
    radius: int = 1
    name = "lsh"


@dataclass
class KMeansStrategy:
    index: KMeansIndex
    n_probe: int = 1
    name = "kmeans"


@dataclass
class TopKResult:
    entries: list[tuple[str, float]]
    exact: bool


def top_k(
    query,
    k: int,
    model: EmbeddingModel,
    strategy=None,
    exclude=frozenset(),
) -> TopKResult:
    """k best tokens by cosine; approximate strategies narrow, then
    re-rank with exact cosines."""
    if k < 1:
        raise InvalidK(f"k must be >= 1, got {k}")
    strategy = strategy or ExactStrategy()
    banned = set(exclude) | {SENTINEL}
    scores = batch_scores(query, model)
    if isinstance(strategy, ExactStrategy):
        candidates = [i for i, t in enumerate(model.tokens) if t not in banned]
        is_exact = True
    else:
        if isinstance(strategy, LshStrategy):
            names = lsh_candidates(strategy.index, query, strategy.radius)
        elif isinstance(strategy, KMeansStrategy):
            names = kmeans_candidates(strategy.index, query, strategy.n_probe)
        else:
            raise ConfigError(f"unknown strategy {strategy!r}")
        candidates = [
            model.index[t] for t in names if t not in banned and t in model.index
        ]
        is_exact = False
    candidates.sort(key=lambda i: (-scores[i], model.tokens[i]))
    entries = [(model.tokens[i], float(scores[i])) for i in candidates[:k]]
    return TopKResult(entries=entries, exact=is_exact)


def parse_strategy_spec(spec: str, lsh=None, kmeans=None):
    """Strategy objects from CLI specs: exact, lsh:R, kmeans:N."""
    text = spec.strip().lower()
    if text == "exact":
        return ExactStrategy()
    kind, _, arg = text.partition(":")
    try:
        value = int(arg) if arg else 1
    except ValueError:
        raise ConfigError(f"bad strategy parameter in {spec!r}") from None
    if kind == "lsh":
        if lsh is None:
            raise ConfigError("lsh strategy requested but no lsh index is loaded")
        return LshStrategy(index=lsh, radius=value)
    if kind == "kmeans":
        if kmeans is None:
            raise ConfigError("kmeans strategy requested but no kmeans index is loaded")
        return KMeansStrategy(index=kmeans, n_probe=value)
    raise ConfigError(f"unknown strategy {spec!r}")


# --- persistence -------------------------------------------------------------


def _write_block(fh, payload: bytes):
    fh.write(struct.pack("<Q", len(payload)))
    fh.write(payload)


def _read_block(fh) -> bytes:
    raw = fh.read(8)
    if len(raw) != 8:
        raise FormatError("truncated index block header", fh.tell())
    (length,) = struct.unpack("<Q", raw)
    payload = fh.read(length)
    if len(payload) != length:
        raise FormatError("truncated index block", fh.tell())
    return payload


def save_index(index, path):
    if isinstance(index, LshIndex):
        kind = _KIND_LSH
        header = {"bits": index.bits, "seed": index.seed, "dim": index.dim,
                  "count": len(index.tokens)}
        arrays = [
            np.ascontiguousarray(index.planes, dtype="<f8").tobytes(),
            np.ascontiguousarray(index.signatures, dtype="<u8").tobytes(),
        ]
    elif isinstance(index, KMeansIndex):
        kind = _KIND_KMEANS
        header = {"k": index.k, "seed": index.seed, "dim": index.dim,
                  "count": len(index.tokens),
                  "objective_history": index.objective_history}
        arrays = [
            np.ascontiguousarray(index.centroids, dtype="<f8").tobytes(),
            np.ascontiguousarray(index.assignment, dtype="<i4").tobytes(),
        ]
    else:
        raise ConfigError(f"cannot save index of type {type(index).__name__}")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<HB", _INDEX_VERSION, kind))
        _write_block(fh, json.dumps(header, sort_keys=True).encode("utf-8"))
        _write_block(fh, "\n".join(index.tokens).encode("utf-8"))
        for blob in arrays:
            _write_block(fh, blob)


def load_index(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise FormatError(f"not an index file (magic {magic!r})", 0)
        raw = fh.read(3)
        if len(raw) != 3:
            raise FormatError("truncated index header", fh.tell())
        version, kind = struct.unpack("<HB", raw)
        if version != _INDEX_VERSION:
            raise FormatError(f"unsupported index version {version}", 4)
        header = json.loads(_read_block(fh).decode("utf-8"))
        tokens = _read_block(fh).decode("utf-8").split("\n")
        if len(tokens) != header["count"]:
            raise FormatError(
                f"token count {len(tokens)} != declared {header['count']}", fh.tell()
            )
        if kind == _KIND_LSH:
            planes = np.frombuffer(_read_block(fh), dtype="<f8").reshape(
                header["bits"], header["dim"]
            )
            signatures = np.frombuffer(_read_block(fh), dtype="<u8")
            return LshIndex(
                bits=header["bits"],
                seed=header["seed"],
                planes=planes.copy(),
                signatures=signatures.copy(),
                tokens=tokens,
            )
        if kind == _KIND_KMEANS:
            centroids = np.frombuffer(_read_block(fh), dtype="<f8").reshape(
                header["k"], header["dim"]
            )
            assignment = np.frombuffer(_read_block(fh), dtype="<i4")
            return KMeansIndex(
                k=header["k"],
                seed=header["seed"],
                centroids=centroids.copy(),
                assignment=assignment.copy(),
                objective_history=list(header["objective_history"]),
                tokens=tokens,
            )
        raise FormatError(f"unknown index kind {kind}", 4)
