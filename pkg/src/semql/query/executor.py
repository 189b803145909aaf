"""Query evaluation over a catalog of tables and an embedding model.

Comma joins enumerate the cross product in FROM order, row order
within each table preserved, so results are deterministic. Semantic
functions see textified tokens (a missing cell contributes its
column's empty marker), and their results are memoized per query on
the resolved argument values.

Token variables range over tokens named by contains() predicates;
relational variables ($R.X) expand into one concrete query per
(table, column) assignment whose columns all exist, and the union of
their results carries provenance columns naming the assignment.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

from ..ann import ExactStrategy, KMeansStrategy, LshStrategy, kmeans_candidates, lsh_candidates
from ..embedding.cache import RowAttributeCache, build_row_attribute_cache
from ..embedding.model import EmbeddingModel
from ..errors import (
    ConfigError,
    NoValidSubstitution,
    QueryError,
    SemqlError,
    UnconstrainedTokenVariable,
    UnknownColumn,
    UnknownTable,
)
from ..tables import RelationalTable
from ..textify.corpus import build_encoders, cell_tokens
from ..textify.text import normalize_free_text
from ..udf import DEFAULT_REGISTRY, INT, KEY, TOKENS, avg_vector
from .ast import (
    Aggregate,
    And,
    ColumnRef,
    Comparison,
    Contains,
    Literal,
    Or,
    Projection,
    Query,
    TableSource,
    UdfCall,
)

_SIMILARITY_UDFS = {"proximityavg", "similarityudf", "valuesimudf", "cosinedistance"}


@dataclass
class TableHandle:
    table: RelationalTable
    encoders: dict = field(default_factory=dict)

    @classmethod
    def of(cls, table: RelationalTable) -> "TableHandle":
        return cls(table=table, encoders=build_encoders(table))


class Catalog:
    """Named tables available to FROM clauses."""

    def __init__(self, handles=None):
        self._handles: dict[str, TableHandle] = {}
        for handle in handles or []:
            self.add(handle)

    def add(self, handle: TableHandle):
        self._handles[handle.table.name] = handle

    def add_table(self, table: RelationalTable):
        self.add(TableHandle.of(table))

    def resolve(self, name: str) -> TableHandle:
        handle = self._handles.get(name)
        if handle is None:
            lowered = name.lower()
            for known, candidate in self._handles.items():
                if known.lower() == lowered:
                    return candidate
            raise UnknownTable(f"unknown table {name!r}")
        return handle

    def __contains__(self, name: str) -> bool:
        try:
            self.resolve(name)
            return True
        except UnknownTable:
            return False

    def names(self) -> list[str]:
        return sorted(self._handles)

    def handles(self) -> list[TableHandle]:
        return [self._handles[name] for name in self._handles]


@dataclass
class QueryContext:
    model: EmbeddingModel
    catalog: Catalog
    ext_model: EmbeddingModel | None = None
    registry: object = None
    policy: str = "skip_with_default"
    strategy: object = None
    _cache: RowAttributeCache | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.registry is None:
            self.registry = DEFAULT_REGISTRY
        if self.strategy is None:
            self.strategy = ExactStrategy()

    @property
    def cache(self) -> RowAttributeCache:
        if self._cache is None:
            merged = RowAttributeCache(dim=self.model.dim)
            for handle in self.catalog.handles():
                if handle.table.primary_key is None:
                    continue
                merged.merge(
                    build_row_attribute_cache(
                        handle.table, self.model, handle.encoders, self.policy
                    )
                )
            self._cache = merged
        return self._cache

    def use_cache(self, cache: RowAttributeCache):
        self._cache = cache

    def require_ext_model(self) -> EmbeddingModel:
        if self.ext_model is None:
            raise ConfigError("query needs an external model and none is configured")
        return self.ext_model


@dataclass
class QueryResult:
    columns: list[str]
    rows: list[tuple]

    def __len__(self) -> int:
        return len(self.rows)


class _UdfContextView:
    """What registry entries see: model, ext model, cache, policy."""

    def __init__(self, ctx: QueryContext):
        self._ctx = ctx

    @property
    def model(self):
        return self._ctx.model

    @property
    def ext_model(self):
        return self._ctx.require_ext_model()

    @property
    def cache(self):
        return self._ctx.cache

    @property
    def policy(self):
        return self._ctx.policy


def _walk(node):
    yield node
    if isinstance(node, (And, Or)):
        for item in node.items:
            yield from _walk(item)
    elif isinstance(node, Comparison):
        yield from _walk(node.left)
        yield from _walk(node.right)
    elif isinstance(node, UdfCall):
        for arg in node.args:
            yield from _walk(arg)
    elif isinstance(node, Aggregate):
        yield node.ref
    elif isinstance(node, Projection):
        yield from _walk(node.expr)


def _query_nodes(query: Query):
    for projection in query.projections:
        yield from _walk(projection)
    if query.where is not None:
        yield from _walk(query.where)
    for ref in query.group_by:
        yield ref
    if isinstance(query.order_by, ColumnRef):
        yield query.order_by


# --- relational variable expansion -------------------------------------------


def _substitute(node, table_map: dict, column_map: dict):
    if isinstance(node, ColumnRef):
        if node.qualifier in table_map:
            return ColumnRef(
                qualifier=node.qualifier,
                column=column_map[(node.qualifier, node.column)],
            )
        return node
    if isinstance(node, UdfCall):
        return replace(
            node, args=tuple(_substitute(a, table_map, column_map) for a in node.args)
        )
    if isinstance(node, Comparison):
        return replace(
            node,
            left=_substitute(node.left, table_map, column_map),
            right=_substitute(node.right, table_map, column_map),
        )
    if isinstance(node, (And, Or)):
        return replace(
            node, items=tuple(_substitute(i, table_map, column_map) for i in node.items)
        )
    if isinstance(node, Aggregate):
        return replace(node, ref=_substitute(node.ref, table_map, column_map))
    if isinstance(node, Projection):
        return replace(node, expr=_substitute(node.expr, table_map, column_map))
    return node


def _expand_variables(query: Query, catalog: Catalog):
    """Concrete (query, provenance) pairs for every valid substitution."""
    variables = [s for s in query.sources if s.is_variable]
    if not variables:
        return None
    column_vars: dict[str, list[str]] = {}
    for node in _query_nodes(query):
        if isinstance(node, ColumnRef) and node.is_variable:
            names = column_vars.setdefault(node.qualifier, [])
            if node.column not in names:
                names.append(node.column)
    table_names = catalog.names()
    expansions = []
    var_bindings = [s.binding for s in variables]
    for assignment in itertools.product(table_names, repeat=len(variables)):
        table_map = dict(zip(var_bindings, assignment))
        handles = {b: catalog.resolve(t) for b, t in table_map.items()}
        column_options = []
        var_columns = []
        usable = True
        for binding in var_bindings:
            for var_column in column_vars.get(binding, []):
                var_columns.append((binding, var_column))
                names = [c.name for c in handles[binding].table.columns]
                if not names:
                    usable = False
                column_options.append(names)
        if not usable:
            continue
        for choice in itertools.product(*column_options):
            column_map = dict(zip(var_columns, choice))
            sources = [
                replace(s, table=table_map[s.binding], alias=s.binding)
                if s.is_variable
                else s
                for s in query.sources
            ]
            concrete = Query(
                projections=[
                    _substitute(p, table_map, column_map) for p in query.projections
                ],
                sources=sources,
                token_vars=list(query.token_vars),
                where=(
                    _substitute(query.where, table_map, column_map)
                    if query.where is not None
                    else None
                ),
                group_by=[_substitute(g, table_map, column_map) for g in query.group_by],
                order_by=(
                    _substitute(query.order_by, table_map, column_map)
                    if isinstance(query.order_by, ColumnRef)
                    else query.order_by
                ),
                order_desc=query.order_desc,
                limit=query.limit,
                text=query.text,
            )
            provenance = []
            for binding in var_bindings:
                provenance.append((binding.lstrip("$"), table_map[binding]))
            for (binding, var_column), column in column_map.items():
                provenance.append((var_column, column))
            expansions.append((concrete, provenance))
    return expansions


# --- concrete evaluation ------------------------------------------------------


class _Evaluator:
    def __init__(self, query: Query, catalog: Catalog, ctx: QueryContext):
        self.query = query
        self.ctx = ctx
        self.view = _UdfContextView(ctx)
        self.memo: dict = {}
        self.handles: dict[str, TableHandle] = {}
        self.source_order: list[str] = []
        for source in query.sources:
            handle = catalog.resolve(source.table)
            self.handles[source.binding] = handle
            self.source_order.append(source.binding)
        self.token_vars = set(query.token_vars)
        self._relation_tokens: dict[str, list[str]] = {}
        self._validate_token_vars()

    # --- static checks ---

    def _validate_token_vars(self):
        bound = set()
        nodes = list(_query_nodes(self.query))
        if self.query.where is not None:
            for node in _walk(self.query.where):
                if isinstance(node, Contains):
                    if node.var not in self.token_vars:
                        raise QueryError(
                            f"contains() binds undeclared variable {node.var!r}"
                        )
                    if node.scope_qualifier not in self.handles:
                        raise UnknownTable(
                            f"contains() names unknown table {node.scope_qualifier!r}"
                        )
                    if node.scope_column not in (None, "*"):
                        table = self.handles[node.scope_qualifier].table
                        if not table.has_column(node.scope_column):
                            raise UnknownColumn(
                                f"table {table.name!r} has no column"
                                f" {node.scope_column!r}"
                            )
                    bound.add(node.var)
        for var in self.query.token_vars:
            if var not in bound:
                raise UnconstrainedTokenVariable(
                    f"token variable {var!r} is never bound by contains()"
                )
        for node in nodes:
            if isinstance(node, ColumnRef):
                self._resolve_ref(node)  # raises early on unknown columns

    def _resolve_ref(self, ref: ColumnRef):
        """(binding, column schema) for a reference, or None for token vars."""
        if ref.qualifier is None:
            if ref.column in self.token_vars:
                return None
            matches = [
                binding
                for binding in self.source_order
                if self.handles[binding].table.has_column(ref.column)
            ]
            if not matches:
                raise UnknownColumn(f"unknown column {ref.column!r}")
            if len(matches) > 1:
                raise UnknownColumn(
                    f"column {ref.column!r} is ambiguous across {matches}"
                )
            binding = matches[0]
        else:
            binding = ref.qualifier
            if binding not in self.handles:
                raise UnknownTable(f"unknown table or alias {binding!r}")
            if not self.handles[binding].table.has_column(ref.column):
                raise UnknownColumn(
                    f"table {self.handles[binding].table.name!r} has no column"
                    f" {ref.column!r}"
                )
        handle = self.handles[binding]
        return binding, handle.table.column(ref.column)

    # --- token helpers ---

    def _cell_tokens(self, binding: str, column, combo) -> list[str]:
        handle = self.handles[binding]
        row = combo[binding]
        return cell_tokens(column, row.get(column.name), handle.encoders.get(column.name))

    def _row_tokens(self, binding: str, combo) -> list[str]:
        handle = self.handles[binding]
        out = []
        for column in handle.table.columns:
            out.extend(self._cell_tokens(binding, column, combo))
        return out

    def _relation_token_list(self, binding: str) -> list[str]:
        cached = self._relation_tokens.get(binding)
        if cached is None:
            handle = self.handles[binding]
            seen = []
            seen_set = set()
            for row in handle.table.rows:
                for column in handle.table.columns:
                    for token in cell_tokens(
                        column, row.get(column.name), handle.encoders.get(column.name)
                    ):
                        if token not in seen_set:
                            seen_set.add(token)
                            seen.append(token)
            self._relation_tokens[binding] = cached = seen
        return cached

    def _contains_tokens(self, node: Contains, combo) -> list[str]:
        if node.scope_column is None:
            return self._relation_token_list(node.scope_qualifier)
        if node.scope_column == "*":
            return self._row_tokens(node.scope_qualifier, combo)
        column = self.handles[node.scope_qualifier].table.column(node.scope_column)
        return self._cell_tokens(node.scope_qualifier, column, combo)

    # --- expression evaluation ---

    def _tokens_of(self, node, combo, binding_map) -> list[str]:
        if isinstance(node, Literal):
            if isinstance(node.value, str):
                return normalize_free_text(node.value)
            return [str(node.value).lower()]
        if isinstance(node, ColumnRef):
            resolved = self._resolve_ref(node)
            if resolved is None:
                token = binding_map.get(node.column)
                if token is None:
                    raise QueryError(
                        f"token variable {node.column!r} used outside its binding"
                    )
                return [token]
            binding, column = resolved
            return self._cell_tokens(binding, column, combo)
        raise QueryError(
            f"{type(node).__name__} cannot stand in a token argument"
        )

    def _call_udf(self, call: UdfCall, combo, binding_map) -> float:
        entry = self.ctx.registry.resolve(call.name)
        kinds = list(entry.params) + list(entry.optional)
        adapted = []
        for node, kind in zip(call.args, kinds):
            if kind == TOKENS:
                adapted.append(tuple(self._tokens_of(node, combo, binding_map)))
            elif kind == KEY:
                tokens = self._tokens_of(node, combo, binding_map)
                if not tokens:
                    raise QueryError(
                        f"{entry.name} got an empty entity argument"
                    )
                adapted.append(tokens[0])
            elif kind == INT:
                if not isinstance(node, Literal) or isinstance(node.value, str):
                    raise QueryError(
                        f"{entry.name} takes an integer literal here"
                    )
                adapted.append(int(node.value))
            else:
                raise QueryError(f"bad parameter kind {kind!r}")
        key = (entry.name, tuple(adapted))
        if key in self.memo:
            return self.memo[key]
        value = entry.call(self.view, [
            list(a) if isinstance(a, tuple) else a for a in adapted
        ])
        self.memo[key] = value
        return value

    def _value_of(self, node, combo, binding_map):
        if isinstance(node, Literal):
            return node.value
        if isinstance(node, UdfCall):
            return self._call_udf(node, combo, binding_map)
        if isinstance(node, ColumnRef):
            resolved = self._resolve_ref(node)
            if resolved is None:
                return binding_map.get(node.column)
            binding, column = resolved
            return combo[binding].get(column.name)
        raise QueryError(f"cannot evaluate {type(node).__name__} as a value")

    @staticmethod
    def _compare(left, op: str, right) -> bool:
        if left is None or right is None:
            return False
        if isinstance(left, bool) or isinstance(right, bool):
            left, right = str(left), str(right)
        if isinstance(left, str) and isinstance(right, (int, float)):
            try:
                left = float(left)
            except ValueError:
                right = str(right)
        elif isinstance(right, str) and isinstance(left, (int, float)):
            try:
                right = float(right)
            except ValueError:
                left = str(left)
        if op == "=":
            return left == right
        if op == "!=":
            return left != right
        if op == "<":
            return left < right
        if op == ">":
            return left > right
        if op == "<=":
            return left <= right
        return left >= right

    def _satisfies(self, node, combo, binding_map) -> bool:
        if node is None:
            return True
        if isinstance(node, And):
            return all(self._satisfies(i, combo, binding_map) for i in node.items)
        if isinstance(node, Or):
            return any(self._satisfies(i, combo, binding_map) for i in node.items)
        if isinstance(node, Contains):
            token = binding_map.get(node.var)
            return token is not None and token in self._contains_tokens(node, combo)
        if isinstance(node, Comparison):
            return self._compare(
                self._value_of(node.left, combo, binding_map),
                node.op,
                self._value_of(node.right, combo, binding_map),
            )
        raise QueryError(f"cannot evaluate {type(node).__name__} as a predicate")

    # --- bindings ---

    def _first_contains(self) -> dict[str, Contains]:
        first: dict[str, Contains] = {}
        if self.query.where is not None:
            for node in _walk(self.query.where):
                if isinstance(node, Contains) and node.var not in first:
                    first[node.var] = node
        return first

    def _binding_maps(self, combo, first_contains):
        if not self.query.token_vars:
            return [{}]
        candidate_lists = []
        for var in self.query.token_vars:
            tokens = self._contains_tokens(first_contains[var], combo)
            deduped = list(dict.fromkeys(tokens))
            candidate_lists.append(deduped)
        return [
            dict(zip(self.query.token_vars, choice))
            for choice in itertools.product(*candidate_lists)
        ]

    # --- strategy row pruning ---

    def _prune_rows(self, rows_by_binding):
        strategy = self.ctx.strategy
        if isinstance(strategy, ExactStrategy) or self.query.where is None:
            return rows_by_binding
        conjuncts = (
            list(self.query.where.items)
            if isinstance(self.query.where, And)
            else [self.query.where]
        )
        for node in conjuncts:
            if not (
                isinstance(node, Comparison)
                and isinstance(node.left, UdfCall)
                and node.op in (">", ">=")
                and isinstance(node.right, Literal)
                and not isinstance(node.right.value, str)
                and node.left.name.lower() in _SIMILARITY_UDFS
            ):
                continue
            refs = [a for a in node.left.args if isinstance(a, ColumnRef)]
            literals = [a for a in node.left.args if isinstance(a, Literal)]
            if len(refs) != 1 or len(refs) + len(literals) != len(node.left.args):
                continue
            resolved = self._resolve_ref(refs[0])
            if resolved is None:
                continue
            binding, column = resolved
            tokens = []
            for literal in literals:
                tokens.extend(self._tokens_of(literal, {}, {}))
            if not tokens:
                continue
            try:
                query_vector = avg_vector(tokens, self.ctx.model, self.ctx.policy)
                if isinstance(strategy, LshStrategy):
                    names = lsh_candidates(strategy.index, query_vector, strategy.radius)
                elif isinstance(strategy, KMeansStrategy):
                    names = kmeans_candidates(
                        strategy.index, query_vector, strategy.n_probe
                    )
                else:
                    continue
            except SemqlError:
                continue
            handle = self.handles[binding]
            kept = []
            for row in rows_by_binding[binding]:
                cell = cell_tokens(
                    column, row.get(column.name), handle.encoders.get(column.name)
                )
                if any(token in names for token in cell):
                    kept.append(row)
            rows_by_binding = dict(rows_by_binding)
            rows_by_binding[binding] = kept
        return rows_by_binding

    # --- driving loop ---

    def run(self) -> QueryResult:
        query = self.query
        projections = query.projections
        aggregates = [
            p for p in projections if isinstance(p.expr, Aggregate)
        ]
        grouped = bool(query.group_by) or bool(aggregates)

        projected_vars = [
            p.expr.column
            for p in projections
            if isinstance(p.expr, ColumnRef)
            and p.expr.qualifier is None
            and p.expr.column in self.token_vars
        ]
        first_contains = self._first_contains()

        rows_by_binding = {
            binding: self.handles[binding].table.rows for binding in self.source_order
        }
        rows_by_binding = self._prune_rows(rows_by_binding)

        order_plan = self._order_plan() if not grouped else None

        raw_rows: list[tuple] = []
        sort_keys: list = []
        group_rows: list[tuple[tuple, dict, dict]] = []

        for selection in itertools.product(
            *(rows_by_binding[b] for b in self.source_order)
        ):
            combo = dict(zip(self.source_order, selection))
            satisfied_maps = []
            for binding_map in self._binding_maps(combo, first_contains):
                if self._satisfies(query.where, combo, binding_map):
                    satisfied_maps.append(binding_map)
                    if not projected_vars and not grouped:
                        break  # existential: one witness is enough
            if not satisfied_maps:
                continue
            if grouped:
                for binding_map in satisfied_maps[:1] if not projected_vars else satisfied_maps:
                    group_rows.append((self._group_key(combo, binding_map), combo, binding_map))
                continue
            emit_maps = satisfied_maps if projected_vars else satisfied_maps[:1]
            for binding_map in emit_maps:
                row = tuple(
                    self._projection_value(p, combo, binding_map) for p in projections
                )
                if projected_vars and row in raw_rows:
                    continue  # identical bindings collapse
                raw_rows.append(row)
                if order_plan is not None:
                    sort_keys.append(order_plan(row, combo, binding_map))

        if grouped:
            result_rows = self._aggregate(group_rows)
            result_rows = self._order_grouped(result_rows)
        else:
            result_rows = self._order_flat(raw_rows, sort_keys)

        if query.limit is not None:
            result_rows = result_rows[: query.limit]
        return QueryResult(columns=[p.label for p in projections], rows=result_rows)

    # --- projection/aggregation helpers ---

    def _projection_value(self, projection: Projection, combo, binding_map):
        expr = projection.expr
        if isinstance(expr, Aggregate):
            raise QueryError("aggregate outside a grouped query")
        return self._value_of(expr, combo, binding_map)

    def _group_key(self, combo, binding_map) -> tuple:
        return tuple(
            self._value_of(ref, combo, binding_map) for ref in self.query.group_by
        )

    def _aggregate(self, group_rows) -> list[tuple]:
        query = self.query
        for projection in query.projections:
            expr = projection.expr
            if isinstance(expr, Aggregate):
                resolved = self._resolve_ref(expr.ref)
                if resolved is None:
                    raise QueryError("aggregates take a column, not a token variable")
                if expr.func == "AVG" and resolved[1].kind != "numeric":
                    raise QueryError("AVG needs a numeric column")
                continue
            if isinstance(expr, ColumnRef) and any(
                expr == ref for ref in query.group_by
            ):
                continue
            raise QueryError(
                f"projection {projection.label!r} is neither grouped nor aggregated"
            )

        groups: dict[tuple, list] = {}
        order: list[tuple] = []
        for key, combo, binding_map in group_rows:
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append((combo, binding_map))

        rows = []
        for key in order:
            members = groups[key]
            row = []
            for projection in self.query.projections:
                expr = projection.expr
                if isinstance(expr, ColumnRef):
                    row.append(key[self.query.group_by.index(expr)])
                    continue
                values = [
                    self._value_of(expr.ref, combo, binding_map)
                    for combo, binding_map in members
                ]
                values = [v for v in values if v is not None]
                if not values:
                    row.append(None)
                elif expr.func == "AVG":
                    row.append(sum(float(v) for v in values) / len(values))
                elif expr.func == "MAX":
                    row.append(max(values, key=_mixed_sort_key))
                else:
                    row.append(min(values, key=_mixed_sort_key))
            rows.append(tuple(row))
        return rows

    # --- ordering ---

    def _projection_index_for_order(self):
        query = self.query
        target = query.order_by
        if target is None:
            return None
        for i, projection in enumerate(query.projections):
            if isinstance(target, str):
                if projection.alias and projection.alias.lower() == target.lower():
                    return i
                if (
                    isinstance(projection.expr, ColumnRef)
                    and projection.expr.qualifier is None
                    and projection.expr.column.lower() == target.lower()
                ):
                    return i
            elif isinstance(target, ColumnRef) and projection.expr == target:
                return i
        return -1

    def _order_plan(self):
        """Row-level sort key; None when the query has no ORDER BY."""
        target = self.query.order_by
        if target is None:
            return None
        index = self._projection_index_for_order()
        if index is not None and index >= 0:
            return lambda row, combo, binding_map: row[index]
        ref = (
            ColumnRef(qualifier=None, column=target)
            if isinstance(target, str)
            else target
        )
        self._resolve_ref(ref)  # raises UnknownColumn when unresolvable
        return lambda row, combo, binding_map: self._value_of(ref, combo, binding_map)

    def _order_flat(self, rows, sort_keys) -> list[tuple]:
        if self.query.order_by is None or not rows:
            return rows
        paired = list(zip(rows, sort_keys))
        present = [(row, key) for row, key in paired if key is not None]
        absent = [row for row, key in paired if key is None]
        present.sort(key=lambda item: _mixed_sort_key(item[1]), reverse=self.query.order_desc)
        return [row for row, _ in present] + absent

    def _order_grouped(self, rows) -> list[tuple]:
        if self.query.order_by is None or not rows:
            return rows
        index = self._projection_index_for_order()
        if index is None or index < 0:
            raise UnknownColumn(
                "ORDER BY in a grouped query must name a projection or its alias"
            )
        present = [row for row in rows if row[index] is not None]
        absent = [row for row in rows if row[index] is None]
        present.sort(
            key=lambda row: _mixed_sort_key(row[index]), reverse=self.query.order_desc
        )
        return present + absent


def _mixed_sort_key(value):
    # numbers sort before strings; bools never reach here
    if isinstance(value, (int, float)):
        return (0, float(value), "")
    return (1, 0.0, str(value))


def execute(query: Query, catalog: Catalog, ctx: QueryContext) -> QueryResult:
    """Evaluate a parsed query; relational variables expand first."""
    expansions = _expand_variables(query, catalog)
    if expansions is None:
        return _Evaluator(query, catalog, ctx).run()
    results = []
    provenance_labels: list[str] | None = None
    for concrete, provenance in expansions:
        try:
            result = _Evaluator(concrete, catalog, ctx).run()
        except (UnknownColumn, UnknownTable):
            continue  # substitution does not type-check
        labels = [name for name, _ in provenance]
        if provenance_labels is None:
            provenance_labels = labels
        extras = tuple(value for _, value in provenance)
        results.append((result, extras))
    if provenance_labels is None or not results:
        raise NoValidSubstitution(
            "no table/column substitution satisfies the query's variables"
        )
    # header keeps the variable form; provenance columns carry the bindings
    columns = [p.label for p in query.projections] + provenance_labels
    seen = set()
    rows = []
    for result, extras in results:
        for row in result.rows:
            merged = row + extras
            if merged not in seen:
                seen.add(merged)
                rows.append(merged)
    return QueryResult(columns=columns, rows=rows)
