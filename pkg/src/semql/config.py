"""Project configuration.

One JSON file ties a project together: the tables and their schemas,
the optional image table sources, the external knowledge lines, the
training setup (seed required), and where generated artifacts live.
Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .embedding.trainer import TrainingConfig
from .errors import ConfigError
from .tables import RelationalTable, load_schema, load_table_csv

_TOP_LEVEL_KEYS = {
    "workspace", "tables", "image_tables", "foreign_keys", "external_kb",
    "training", "model", "ext_model", "index", "oov_policy",
}


@dataclass
class TableSpec:
    name: str
    csv: Path
    schema: Path


@dataclass
class ImageTableSpec:
    name: str
    source: Path


@dataclass
class ProjectConfig:
    root: Path
    workspace: Path
    tables: list[TableSpec]
    image_tables: list[ImageTableSpec]
    foreign_keys: dict[str, dict[str, str]]
    external_kb_path: Path | None
    external_kb_repetitions: int
    training: TrainingConfig
    model_file: str
    model_format: str
    ext_model_path: Path | None
    ext_model_format: str
    index_lsh_bits: int
    index_kmeans_k: int | None
    index_seed: int
    oov_policy: str

    @property
    def store_dir(self) -> Path:
        return self.workspace / "store"

    @property
    def corpus_path(self) -> Path:
        return self.workspace / "corpus.txt"

    def load_tables(self) -> dict[str, tuple[RelationalTable, dict[str, str]]]:
        """name -> (table, fk links); image tables load from their fixtures."""
        from .textify.images import load_image_table

        loaded: dict[str, tuple[RelationalTable, dict[str, str]]] = {}
        for spec in self.tables:
            columns = load_schema(spec.schema)
            table = load_table_csv(spec.csv, spec.name, columns)
            loaded[spec.name] = (table, dict(self.foreign_keys.get(spec.name, {})))
        for spec in self.image_tables:
            table = load_image_table(spec.source, name=spec.name)
            loaded[spec.name] = (table, {})
        if not loaded:
            raise ConfigError("project declares no tables")
        return loaded

    def external_kb_lines(self) -> list[str]:
        if self.external_kb_path is None:
            return []
        with open(self.external_kb_path, encoding="utf-8") as fh:
            return [line.rstrip("\n") for line in fh]


def _require(spec: dict, key: str, where: str):
    if key not in spec:
        raise ConfigError(f"{where} is missing required key {key!r}")
    return spec[key]


def _existing(path: Path, what: str) -> Path:
    if not path.exists():
        raise ConfigError(f"{what} {path} does not exist")
    return path


def load_project_config(path) -> ProjectConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(raw) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    root = path.parent.resolve()

    def resolve(rel) -> Path:
        candidate = Path(rel)
        return candidate if candidate.is_absolute() else root / candidate

    tables = []
    for entry in raw.get("tables", []):
        tables.append(
            TableSpec(
                name=_require(entry, "name", "table entry"),
                csv=_existing(resolve(_require(entry, "csv", "table entry")), "table csv"),
                schema=_existing(
                    resolve(_require(entry, "schema", "table entry")), "table schema"
                ),
            )
        )
    image_tables = []
    for entry in raw.get("image_tables", []):
        image_tables.append(
            ImageTableSpec(
                name=_require(entry, "name", "image table entry"),
                source=_existing(
                    resolve(_require(entry, "source", "image table entry")),
                    "image fixture directory",
                ),
            )
        )
    if not tables and not image_tables:
        raise ConfigError("config declares no tables")

    names = [t.name for t in tables] + [t.name for t in image_tables]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate table names in config")

    foreign_keys = raw.get("foreign_keys", {})
    for table_name, links in foreign_keys.items():
        if table_name not in names:
            raise ConfigError(f"foreign_keys names unknown table {table_name!r}")
        for column, target in links.items():
            if target not in names:
                raise ConfigError(
                    f"foreign key {table_name}.{column} references unknown"
                    f" table {target!r}"
                )

    kb_path = None
    kb_reps = 1
    if "external_kb" in raw:
        kb_entry = raw["external_kb"]
        kb_path = _existing(
            resolve(_require(kb_entry, "path", "external_kb")), "external kb file"
        )
        kb_reps = int(kb_entry.get("repetitions", 1))
        if kb_reps < 1:
            raise ConfigError("external_kb.repetitions must be >= 1")

    training_spec = dict(raw.get("training", {}))
    if "seed" not in training_spec:
        raise ConfigError("training.seed is required for reproducible runs")
    training = TrainingConfig.from_dict(training_spec)

    model_entry = raw.get("model", {})
    model_file = model_entry.get("file", "model.bin")
    model_format = model_entry.get("format", "word2vec_binary")
    if model_format not in ("word2vec_binary", "word2vec_text"):
        raise ConfigError(f"unknown model format {model_format!r}")

    ext_path = None
    ext_format = "word2vec_text"
    if "ext_model" in raw:
        ext_entry = raw["ext_model"]
        ext_path = _existing(
            resolve(_require(ext_entry, "path", "ext_model")), "external model"
        )
        ext_format = ext_entry.get("format", "word2vec_text")

    index_entry = raw.get("index", {})
    lsh_bits = int(index_entry.get("lsh_bits", 16))
    kmeans_k = index_entry.get("kmeans_k")
    kmeans_k = int(kmeans_k) if kmeans_k is not None else None
    index_seed = int(index_entry.get("seed", training.seed))

    policy = raw.get("oov_policy", "skip_with_default")
    if policy not in ("error", "skip_with_default"):
        raise ConfigError(f"unknown oov_policy {policy!r}")

    workspace = resolve(raw.get("workspace", "out"))

    return ProjectConfig(
        root=root,
        workspace=workspace,
        tables=tables,
        image_tables=image_tables,
        foreign_keys={t: dict(v) for t, v in foreign_keys.items()},
        external_kb_path=kb_path,
        external_kb_repetitions=kb_reps,
        training=training,
        model_file=model_file,
        model_format=model_format,
        ext_model_path=ext_path,
        ext_model_format=ext_format,
        index_lsh_bits=lsh_bits,
        index_kmeans_k=kmeans_k,
        index_seed=index_seed,
        oov_policy=policy,
    )
