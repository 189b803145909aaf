"""Command-line interface.

Data goes to stdout, key=value progress lines go to stderr, and exit
codes tell failure classes apart:

  2  configuration problems
  3  data problems (schemas, corpora, stores)
  4  I/O problems
  5  query problems (syntax or evaluation)

Every run with the same inputs produces byte-identical outputs;
nothing here depends on wall-clock time or thread scheduling.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import __version__
from .ann import build_kmeans_index, build_lsh_index, parse_strategy_spec, top_k
from .config import ProjectConfig, load_project_config
from .embedding.cache import build_row_attribute_cache
from .embedding.model import load_model
from .embedding.trainer import train, train_incremental
from .errors import (
    ConfigError,
    DataError,
    DimensionMismatch,
    EmptyCorpus,
    QueryError,
    QuerySyntaxError,
    SemqlError,
)
from .query.executor import Catalog, QueryContext, TableHandle, execute
from .query.parser import parse_query
from .query.render import FORMATS, render_csv, render_json, render_table
from .store import amend_store, config_hash, open_store, write_store
from .tables import write_table_csv
from .textify.corpus import (
    append_external_kb,
    make_catalog,
    read_corpus,
    textify_catalog,
    write_corpus,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_IO = 4
EXIT_QUERY = 5


def _log(**fields):
    line = " ".join(f"{key}={value}" for key, value in fields.items())
    print(line, file=sys.stderr)


def _fail(message: str):
    print(f"error: {message}", file=sys.stderr)


def _fail_query(exc: QueryError):
    """Print a query error; syntax errors get a caret under the spot."""
    _fail(str(exc))
    if isinstance(exc, QuerySyntaxError) and exc.text:
        lines = exc.text.splitlines()
        if 1 <= exc.line <= len(lines):
            print(f"  {lines[exc.line - 1]}", file=sys.stderr)
            print("  " + " " * (exc.column - 1) + "^", file=sys.stderr)


# --- shared setup -----------------------------------------------------------


def _load_config(args) -> ProjectConfig:
    return load_project_config(args.config)


def _catalog_of(cfg: ProjectConfig) -> Catalog:
    catalog = Catalog()
    for name, (table, _links) in cfg.load_tables().items():
        catalog.add(TableHandle.of(table))
    return catalog


def _open_project_store(cfg: ProjectConfig):
    store = open_store(cfg.store_dir)
    for warning in store.warnings:
        _log(event="store_warning", detail=warning)
    return store


def _query_context(cfg: ProjectConfig, args) -> tuple[Catalog, QueryContext]:
    store = _open_project_store(cfg)
    model = store.model
    catalog = _catalog_of(cfg)
    ext_model = None
    if cfg.ext_model_path is not None:
        ext_model = load_model(cfg.ext_model_path, cfg.ext_model_format)
    spec = getattr(args, "strategy", "exact")
    lsh = kmeans = None
    if spec.startswith("lsh"):
        lsh = store.index("lsh")
    elif spec.startswith("kmeans"):
        kmeans = store.index("kmeans")
    strategy = parse_strategy_spec(spec, lsh=lsh, kmeans=kmeans)
    ctx = QueryContext(
        model=model,
        catalog=catalog,
        ext_model=ext_model,
        policy=cfg.oov_policy,
        strategy=strategy,
    )
    if "rows" in store.cache_names():
        ctx.use_cache(store.cache("rows"))
    return catalog, ctx


def _render(result, fmt: str) -> str:
    if fmt == "csv":
        return render_csv(result)
    if fmt == "json":
        return render_json(result)
    return render_table(result)


def _run_statement(sql: str, catalog: Catalog, ctx: QueryContext):
    query = parse_query(sql, registry=ctx.registry)
    try:
        return execute(query, catalog, ctx)
    except (ConfigError, DataError, OSError, QueryError):
        raise
    except SemqlError as exc:
        raise QueryError(str(exc)) from exc


# --- commands ---------------------------------------------------------------


def cmd_textify(args) -> int:
    cfg = _load_config(args)
    loaded = cfg.load_tables()
    for name, (table, _links) in loaded.items():
        if not table.rows:
            raise EmptyCorpus(f"table {name!r} has no rows to textify")
    catalog = make_catalog(
        (table, None, links) for table, links in loaded.values()
    )
    sentences = textify_catalog(catalog)
    kb_lines = cfg.external_kb_lines()
    if kb_lines:
        sentences = append_external_kb(sentences, kb_lines, cfg.external_kb_repetitions)
    cfg.workspace.mkdir(parents=True, exist_ok=True)
    output = Path(args.output) if args.output else cfg.corpus_path
    write_corpus(sentences, output)
    tables_dir = cfg.workspace / "tables"
    tables_dir.mkdir(parents=True, exist_ok=True)
    for name, (table, _links) in loaded.items():
        write_table_csv(table, tables_dir / f"{name}.csv")
    _log(
        event="textify",
        sentences=len(sentences),
        tables=len(loaded),
        output=output,
    )
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    corpus_path = Path(args.corpus) if args.corpus else cfg.corpus_path
    sentences = read_corpus(corpus_path)
    tcfg = cfg.training
    if args.base_model:
        base = load_model(args.base_model, args.base_format)
        model = train_incremental(base, sentences, tcfg)
    else:
        model = train(sentences, tcfg)
    cfg_hash = config_hash(tcfg.to_dict())
    manifest = write_store(
        cfg.store_dir,
        model,
        cfg.model_format,
        seed=tcfg.seed,
        cfg_hash=cfg_hash,
        model_file=cfg.model_file,
    )
    _log(
        event="train",
        sentences=len(sentences),
        vocabulary=len(model),
        dimension=tcfg.dimension,
        window=tcfg.window,
        negative=tcfg.negative,
        sample=tcfg.sample,
        min_count=tcfg.min_count,
        architecture=tcfg.architecture,
        epochs=tcfg.epochs,
        seed=tcfg.seed,
        store=manifest.parent,
    )
    return EXIT_OK


def cmd_index(args) -> int:
    cfg = _load_config(args)
    store = _open_project_store(cfg)
    model = store.model
    indexes = {"lsh": build_lsh_index(model, cfg.index_lsh_bits, cfg.index_seed)}
    if cfg.index_kmeans_k is not None:
        indexes["kmeans"] = build_kmeans_index(
            model, cfg.index_kmeans_k, cfg.index_seed
        )
    from .embedding.cache import RowAttributeCache

    merged = RowAttributeCache(dim=model.dim)
    for name, (table, _links) in cfg.load_tables().items():
        if table.primary_key is None:
            continue
        merged.merge(
            build_row_attribute_cache(table, model, policy=cfg.oov_policy)
        )
    amend_store(cfg.store_dir, caches={"rows": merged}, indexes=indexes)
    _log(
        event="index",
        lsh_bits=cfg.index_lsh_bits,
        kmeans_k=cfg.index_kmeans_k if cfg.index_kmeans_k is not None else "-",
        cached_rows=len(merged),
    )
    return EXIT_OK


def cmd_query(args) -> int:
    cfg = _load_config(args)
    if bool(args.execute) == bool(args.file):
        raise ConfigError("query needs exactly one of -e/--execute or --file")
    sql = args.execute if args.execute else Path(args.file).read_text(encoding="utf-8")
    catalog, ctx = _query_context(cfg, args)
    started = time.perf_counter()
    result = _run_statement(sql, catalog, ctx)
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    sys.stdout.write(_render(result, args.format))
    sys.stdout.flush()
    if args.timing:
        _log(event="query", rows=len(result.rows), elapsed_ms=f"{elapsed_ms:.1f}")
    return EXIT_OK


def cmd_repl(args) -> int:
    cfg = _load_config(args)
    catalog, ctx = _query_context(cfg, args)
    fmt = args.format
    timing = False
    buffer: list[str] = []
    interactive = sys.stdin.isatty()

    def prompt():
        if interactive:
            sys.stderr.write("...> " if buffer else "semql> ")
            sys.stderr.flush()

    prompt()
    for line in sys.stdin:
        stripped = line.strip()
        if not buffer and stripped.startswith("\\"):
            parts = stripped.split()
            command = parts[0]
            if command == "\\q":
                break
            if command == "\\timing":
                timing = not timing
                _log(event="repl", timing="on" if timing else "off")
            elif command == "\\format":
                if len(parts) == 2 and parts[1] in FORMATS:
                    fmt = parts[1]
                    _log(event="repl", format=fmt)
                else:
                    _fail(f"\\format takes one of {', '.join(FORMATS)}")
            else:
                _fail(f"unknown command {command}")
            prompt()
            continue
        if stripped:
            buffer.append(line.rstrip("\n"))
        if stripped.endswith(";"):
            sql = "\n".join(buffer)
            buffer = []
            started = time.perf_counter()
            try:
                result = _run_statement(sql, catalog, ctx)
            except QueryError as exc:
                _fail_query(exc)
            except SemqlError as exc:
                _fail(str(exc))
            else:
                elapsed_ms = (time.perf_counter() - started) * 1000.0
                sys.stdout.write(_render(result, fmt))
                sys.stdout.flush()
                if timing:
                    _log(event="repl", rows=len(result.rows), elapsed_ms=f"{elapsed_ms:.1f}")
        prompt()
    return EXIT_OK


def cmd_inspect_model(args) -> int:
    cfg = _load_config(args)
    store = _open_project_store(cfg)
    model = store.model
    spec = args.strategy
    lsh = kmeans = None
    if spec.startswith("lsh"):
        lsh = store.index("lsh")
    elif spec.startswith("kmeans"):
        kmeans = store.index("kmeans")
    strategy = parse_strategy_spec(spec, lsh=lsh, kmeans=kmeans)
    try:
        vector = model.require(args.token)
        neighbors = top_k(vector, args.k, model, strategy, exclude={args.token})
    except (ConfigError, DataError, OSError, QueryError):
        raise
    except SemqlError as exc:
        raise QueryError(str(exc)) from exc
    width = max([len(args.token)] + [len(token) for token, _ in neighbors.entries])
    sys.stdout.write(f"{'token'.ljust(width)}  cosine\n")
    sys.stdout.write(f"{'-' * width}  ------\n")
    for token, score in neighbors.entries:
        sys.stdout.write(f"{token.ljust(width)}  {score:.4f}\n")
    sys.stdout.flush()
    _log(event="inspect", token=args.token, neighbors=len(neighbors.entries), exact=neighbors.exact)
    return EXIT_OK


# --- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semql",
        description=(
            "Textify relational tables, train word embeddings over them, and"
            " query the result with SQL-style semantic predicates."
        ),
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "-c", "--config", required=True, metavar="FILE",
        help="project configuration JSON",
    )

    p = commands.add_parser(
        "textify", parents=[common],
        help="turn the project's tables into a token corpus",
        description=(
            "Load every configured table (CSV and image fixtures), turn each"
            " row into a token sentence, append external knowledge lines, and"
            " write the corpus plus its provenance sidecar."
        ),
    )
    p.add_argument(
        "-o", "--output", metavar="FILE",
        help="corpus file to write (default: <workspace>/corpus.txt)",
    )
    p.set_defaults(func=cmd_textify)

    p = commands.add_parser(
        "train", parents=[common],
        help="train word vectors over a corpus",
        description=(
            "Train embeddings over the corpus with the configured parameters"
            " and write the model into the project store. Single-threaded and"
            " deterministic: identical inputs give identical bytes."
        ),
    )
    p.add_argument(
        "--corpus", metavar="FILE",
        help="corpus to read (default: <workspace>/corpus.txt)",
    )
    p.add_argument(
        "--base-model", metavar="FILE",
        help="existing model to continue training from",
    )
    p.add_argument(
        "--base-format", choices=["word2vec_binary", "word2vec_text"],
        default="word2vec_binary",
        help="format of --base-model (default: word2vec_binary)",
    )
    p.set_defaults(func=cmd_train)

    p = commands.add_parser(
        "index", parents=[common],
        help="build approximate-neighbor indexes and row caches",
        description=(
            "Build the LSH (and, when configured, spherical k-means) index"
            " over the trained model, average per-row attribute vectors, and"
            " add everything to the project store."
        ),
    )
    p.set_defaults(func=cmd_index)

    p = commands.add_parser(
        "query", parents=[common],
        help="run one query and print its result",
        description="Parse and evaluate a single SELECT statement.",
    )
    p.add_argument("-e", "--execute", metavar="SQL", help="query text to run")
    p.add_argument("--file", metavar="FILE", help="file holding the query text")
    p.add_argument(
        "--format", choices=list(FORMATS), default="table",
        help="output format (default: table)",
    )
    p.add_argument(
        "--strategy", default="exact", metavar="SPEC",
        help="candidate strategy: exact, lsh:RADIUS, or kmeans:NPROBE"
        " (default: exact)",
    )
    p.add_argument(
        "--timing", action="store_true",
        help="report row count and elapsed time on stderr",
    )
    p.set_defaults(func=cmd_query)

    p = commands.add_parser(
        "repl", parents=[common],
        help="interactive query loop",
        description=(
            "Read statements terminated by ';' from stdin. Backslash commands:"
            " \\format table|csv|json, \\timing, \\q."
        ),
    )
    p.add_argument(
        "--format", choices=list(FORMATS), default="table",
        help="initial output format (default: table)",
    )
    p.add_argument(
        "--strategy", default="exact", metavar="SPEC",
        help="candidate strategy: exact, lsh:RADIUS, or kmeans:NPROBE"
        " (default: exact)",
    )
    p.set_defaults(func=cmd_repl)

    p = commands.add_parser(
        "inspect-model", parents=[common],
        help="show a token's nearest neighbors",
        description="Print the tokens closest to the given one by cosine.",
    )
    p.add_argument("token", help="vocabulary token to inspect")
    p.add_argument(
        "-k", type=int, default=10, metavar="N",
        help="how many neighbors to show (default: 10)",
    )
    p.add_argument(
        "--strategy", default="exact", metavar="SPEC",
        help="candidate strategy: exact, lsh:RADIUS, or kmeans:NPROBE"
        " (default: exact)",
    )
    p.set_defaults(func=cmd_inspect_model)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DimensionMismatch) as exc:
        _fail(str(exc))
        return EXIT_CONFIG
    except DataError as exc:
        _fail(str(exc))
        return EXIT_DATA
    except QueryError as exc:
        _fail_query(exc)
        return EXIT_QUERY
    except OSError as exc:
        _fail(str(exc))
        return EXIT_IO
    except SemqlError as exc:
        _fail(str(exc))
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
