"""On-disk store for models, row caches, and indexes.

A store is a directory with a manifest.json naming every artifact and
its sha256, plus the seed and training-config hash the artifacts were
built from. open_store verifies checksums before anything loads, so a
corrupt or hand-edited artifact fails fast. The manifest carries no
timestamps: rebuilding the same inputs reproduces the store byte for
byte.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ann import load_index, save_index
from .embedding.cache import RowAttributeCache
from .embedding.model import EmbeddingModel, load_model, save_model
from .errors import ChecksumMismatch, FormatError, VersionMismatch

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1
_CACHE_MAGIC = b"SQRC"
_CACHE_VERSION = 1


def file_sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def config_hash(config_dict: dict) -> str:
    payload = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def save_row_cache(cache: RowAttributeCache, path, model_config_hash: str = ""):
    """Fixed-layout binary: JSON header block, then one float32 matrix."""
    entries = []
    vectors = []
    for (table, key), columns in cache.entries.items():
        for column, vector in columns.items():
            entries.append([table, key, column])
            vectors.append(np.asarray(vector, dtype="<f4"))
    header = json.dumps(
        {"dim": cache.dim, "entries": entries, "config_hash": model_config_hash},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(struct.pack("<H", _CACHE_VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        if vectors:
            fh.write(np.stack(vectors).tobytes())


def load_row_cache(path) -> RowAttributeCache:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _CACHE_MAGIC:
            raise FormatError(f"not a row cache file (magic {magic!r})", 0)
        raw = fh.read(2)
        if len(raw) != 2:
            raise FormatError("truncated cache header", fh.tell())
        (version,) = struct.unpack("<H", raw)
        if version != _CACHE_VERSION:
            raise VersionMismatch(f"row cache version {version} not supported")
        raw = fh.read(8)
        if len(raw) != 8:
            raise FormatError("truncated cache header", fh.tell())
        (header_len,) = struct.unpack("<Q", raw)
        header = json.loads(fh.read(header_len).decode("utf-8"))
        dim = header["dim"]
        entries = header["entries"]
        blob = fh.read(len(entries) * dim * 4)
        if len(blob) != len(entries) * dim * 4:
            raise FormatError("truncated cache vectors", fh.tell())
    matrix = np.frombuffer(blob, dtype="<f4").reshape(len(entries), dim) if entries else np.empty((0, dim), "<f4")
    cache = RowAttributeCache(dim=dim)
    bundles: dict = {}
    for (table, key, column), vector in zip(entries, matrix):
        bundles.setdefault((table, key), {})[column] = vector.copy()
    for (table, key), columns in bundles.items():
        cache.put(table, key, columns)
    cache.config_hash = header.get("config_hash", "")
    return cache


@dataclass
class StoreManifest:
    model_file: str
    model_format: str
    seed: int
    config_hash: str
    checksums: dict[str, str]
    caches: dict[str, str] = field(default_factory=dict)
    indexes: dict[str, str] = field(default_factory=dict)
    version: int = MANIFEST_VERSION

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "model_file": self.model_file,
            "model_format": self.model_format,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "caches": dict(sorted(self.caches.items())),
            "indexes": dict(sorted(self.indexes.items())),
            "checksums": dict(sorted(self.checksums.items())),
        }


class ModelStore:
    """Verified view over a store directory."""

    def __init__(self, directory, manifest: StoreManifest, warnings: list[str]):
        self.directory = Path(directory)
        self.manifest = manifest
        self.warnings = warnings
        self._model: EmbeddingModel | None = None
        self._caches: dict[str, RowAttributeCache] = {}
        self._indexes: dict = {}

    @property
    def model(self) -> EmbeddingModel:
        if self._model is None:
            self._model = load_model(
                self.directory / self.manifest.model_file, self.manifest.model_format
            )
        return self._model

    def vector(self, token: str):
        return self.model.vector(token)

    def cache(self, name: str) -> RowAttributeCache:
        if name not in self._caches:
            if name not in self.manifest.caches:
                raise FormatError(f"store has no cache named {name!r}")
            cache = load_row_cache(self.directory / self.manifest.caches[name])
            stored = getattr(cache, "config_hash", "")
            if stored and stored != self.manifest.config_hash:
                self.warnings.append(
                    f"cache {name!r} was built for config {stored},"
                    f" store is {self.manifest.config_hash}"
                )
            self._caches[name] = cache
        return self._caches[name]

    def index(self, name: str):
        if name not in self._indexes:
            if name not in self.manifest.indexes:
                raise FormatError(f"store has no index named {name!r}")
            self._indexes[name] = load_index(self.directory / self.manifest.indexes[name])
        return self._indexes[name]

    def cache_names(self) -> list[str]:
        return sorted(self.manifest.caches)

    def index_names(self) -> list[str]:
        return sorted(self.manifest.indexes)


def write_store(
    directory,
    model: EmbeddingModel,
    model_format: str,
    seed: int,
    cfg_hash: str,
    caches: dict[str, RowAttributeCache] | None = None,
    indexes: dict | None = None,
    model_file: str = "model.bin",
) -> Path:
    """Write/overwrite a store directory; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_model(model, directory / model_file, model_format)
    manifest = StoreManifest(
        model_file=model_file,
        model_format=model_format,
        seed=seed,
        config_hash=cfg_hash,
        checksums={model_file: file_sha256(directory / model_file)},
    )
    for name, cache in (caches or {}).items():
        filename = f"cache_{name}.bin"
        save_row_cache(cache, directory / filename, cfg_hash)
        manifest.caches[name] = filename
        manifest.checksums[filename] = file_sha256(directory / filename)
    for name, index in (indexes or {}).items():
        filename = f"index_{name}.bin"
        save_index(index, directory / filename)
        manifest.indexes[name] = filename
        manifest.checksums[filename] = file_sha256(directory / filename)
    manifest_path = directory / MANIFEST_NAME
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path


def amend_store(
    directory,
    caches: dict[str, RowAttributeCache] | None = None,
    indexes: dict | None = None,
) -> Path:
    """Add caches/indexes to an existing store, updating the manifest."""
    store = open_store(directory)
    manifest = store.manifest
    directory = Path(directory)
    for name, cache in (caches or {}).items():
        filename = f"cache_{name}.bin"
        save_row_cache(cache, directory / filename, manifest.config_hash)
        manifest.caches[name] = filename
        manifest.checksums[filename] = file_sha256(directory / filename)
    for name, index in (indexes or {}).items():
        filename = f"index_{name}.bin"
        save_index(index, directory / filename)
        manifest.indexes[name] = filename
        manifest.checksums[filename] = file_sha256(directory / filename)
    manifest_path = directory / MANIFEST_NAME
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path


def open_store(directory) -> ModelStore:
    """Load a manifest and verify every artifact's checksum."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.exists():
        raise FormatError(f"no {MANIFEST_NAME} in {directory}")
    with open(manifest_path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"manifest is not valid JSON: {exc}") from exc
    version = raw.get("version")
    if version != MANIFEST_VERSION:
        raise VersionMismatch(
            f"manifest version {version!r} not supported (want {MANIFEST_VERSION})"
        )
    manifest = StoreManifest(
        model_file=raw["model_file"],
        model_format=raw["model_format"],
        seed=raw["seed"],
        config_hash=raw["config_hash"],
        checksums=dict(raw.get("checksums", {})),
        caches=dict(raw.get("caches", {})),
        indexes=dict(raw.get("indexes", {})),
    )
    warnings: list[str] = []
    for filename, expected in manifest.checksums.items():
        path = directory / filename
        if not path.exists():
            raise FormatError(f"store file {filename!r} is missing")
        actual = file_sha256(path)
        if actual != expected:
            raise ChecksumMismatch(
                f"{filename}: stored sha256 {expected[:12]}..., found {actual[:12]}..."
            )
    return ModelStore(directory, manifest, warnings)
