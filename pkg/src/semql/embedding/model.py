"""Embedding model container and the two interchange formats.

Text format:   "V d\\n" then one "token c1 ... cd\\n" line per token.
Binary format: "V d\\n" then, per token, the UTF-8 token, one space,
d little-endian float32 values, and a newline.

Vectors are float32 throughout, so the binary round trip is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import AllTokensUnknown, ConfigError, DimensionMismatch, FormatError, UnknownToken
from .vocab import SENTINEL

MODEL_FORMATS = ("word2vec_text", "word2vec_binary")
OOV_POLICIES = ("error", "skip_with_default")


@dataclass
class EmbeddingModel:
    tokens: list[str]
    vectors: np.ndarray
    counts: np.ndarray | None = None
    normalized: bool = True
    index: dict[str, int] = field(init=False, repr=False)
    output_weights: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.tokens):
            raise DimensionMismatch(
                f"{len(self.tokens)} tokens with vector block {self.vectors.shape}"
            )
        self.vectors = np.ascontiguousarray(self.vectors, dtype=np.float32)
        self.index = {token: i for i, token in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise FormatError("duplicate token in model vocabulary")

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def vector(self, token: str) -> np.ndarray | None:
        i = self.index.get(token)
        return None if i is None else self.vectors[i]

    def require(self, token: str) -> np.ndarray:
        vec = self.vector(token)
        if vec is None:
            raise UnknownToken(f"token {token!r} is not in the vocabulary")
        return vec

    @property
    def sentinel_vector(self) -> np.ndarray:
        return self.require(SENTINEL)


def _default_sentinel(dim: int) -> np.ndarray:
    return np.full(dim, 1.0 / np.sqrt(dim), dtype=np.float32)


def normalize_vectors(model: EmbeddingModel) -> EmbeddingModel:
    """L2-normalize every row; zero rows are left alone."""
    norms = np.linalg.norm(model.vectors, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    model.vectors = (model.vectors / norms).astype(np.float32)
    model.normalized = True
    return model


def resolve_vectors(tokens, model: EmbeddingModel, policy: str = "error") -> np.ndarray:
    """Vectors for a token group under the out-of-vocabulary policy.

    "error" raises on the first unknown token; "skip_with_default"
    substitutes the sentinel vector. An empty group can never resolve.
    """
    if policy not in OOV_POLICIES:
        raise ConfigError(f"unknown oov policy {policy!r}")
    tokens = list(tokens)
    if not tokens:
        raise AllTokensUnknown("no tokens to resolve")
    rows = []
    for token in tokens:
        vec = model.vector(token)
        if vec is None:
            if policy == "error":
                raise UnknownToken(f"token {token!r} is not in the vocabulary")
            vec = model.sentinel_vector
        rows.append(vec)
    return np.stack(rows)


def _ensure_sentinel(tokens: list[str], vectors: np.ndarray):
    if SENTINEL in tokens:
        return tokens, vectors
    # foreign files may lack the sentinel; give it a fixed unit vector
    tokens = tokens + [SENTINEL]
    vectors = np.vstack([vectors, _default_sentinel(vectors.shape[1])])
    return tokens, vectors


def save_model(model: EmbeddingModel, path, fmt: str = "word2vec_binary"):
    if fmt not in MODEL_FORMATS:
        raise ConfigError(f"unknown model format {fmt!r}")
    path = Path(path)
    if fmt == "word2vec_text":
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{len(model)} {model.dim}\n")
            for token, row in zip(model.tokens, model.vectors):
                parts = " ".join(format(float(c), ".8g") for c in row)
                fh.write(f"{token} {parts}\n")
        return
    with open(path, "wb") as fh:
        fh.write(f"{len(model)} {model.dim}\n".encode("ascii"))
        for token, row in zip(model.tokens, model.vectors):
            fh.write(token.encode("utf-8"))
            fh.write(b" ")
            fh.write(np.ascontiguousarray(row, dtype="<f4").tobytes())
            fh.write(b"\n")


def _parse_header(line: bytes, offset: int):
    parts = line.split()
    if len(parts) != 2:
        raise FormatError(f"bad header {line!r}", offset)
    try:
        count, dim = int(parts[0]), int(parts[1])
    except ValueError:
        raise FormatError(f"bad header {line!r}", offset) from None
    if count < 1 or dim < 1:
        raise FormatError(f"non-positive header {line!r}", offset)
    return count, dim


def _load_text(path: Path) -> EmbeddingModel:
    data = path.read_bytes()
    lines = data.split(b"\n")
    count, dim = _parse_header(lines[0], 0)
    offset = len(lines[0]) + 1
    tokens = []
    vectors = np.empty((count, dim), dtype=np.float32)
    for i in range(count):
        if i + 1 >= len(lines) or not lines[i + 1]:
            raise FormatError(f"expected {count} rows, file ends at row {i}", offset)
        parts = lines[i + 1].split()
        if len(parts) != dim + 1:
            raise FormatError(
                f"row {i} has {len(parts) - 1} components, expected {dim}", offset
            )
        tokens.append(parts[0].decode("utf-8"))
        try:
            vectors[i] = [float(p) for p in parts[1:]]
        except ValueError:
            raise FormatError(f"row {i} has a non-numeric component", offset) from None
        offset += len(lines[i + 1]) + 1
    tokens, vectors = _ensure_sentinel(tokens, vectors)
    return EmbeddingModel(tokens=tokens, vectors=vectors)


def _load_binary(path: Path) -> EmbeddingModel:
    with open(path, "rb") as fh:
        header = fh.readline()
        if not header:
            raise FormatError("empty model file", 0)
        count, dim = _parse_header(header.rstrip(b"\n"), 0)
        tokens = []
        vectors = np.empty((count, dim), dtype=np.float32)
        row_bytes = dim * 4
        for i in range(count):
            chars = bytearray()
            while True:
                ch = fh.read(1)
                if not ch:
                    raise FormatError(f"file ends inside token {i}", fh.tell())
                if ch == b" ":
                    break
                if ch == b"\n":
                    raise FormatError(f"newline inside token {i}", fh.tell())
                chars.extend(ch)
            tokens.append(chars.decode("utf-8"))
            blob = fh.read(row_bytes)
            if len(blob) != row_bytes:
                raise FormatError(f"truncated vector for row {i}", fh.tell())
            vectors[i] = np.frombuffer(blob, dtype="<f4")
            tail = fh.read(1)
            if tail not in (b"\n", b""):
                raise FormatError(f"expected newline after row {i}", fh.tell())
    tokens, vectors = _ensure_sentinel(tokens, vectors)
    return EmbeddingModel(tokens=tokens, vectors=vectors)


def load_model(path, fmt: str = "word2vec_binary") -> EmbeddingModel:
    if fmt not in MODEL_FORMATS:
        raise ConfigError(f"unknown model format {fmt!r}")
    path = Path(path)
    if fmt == "word2vec_text":
        return _load_text(path)
    return _load_binary(path)
