"""Query execution against independent brute-force evaluators."""

import numpy as np
import pytest

import oracles
from semql.ann import LshStrategy, build_lsh_index
from semql.errors import (
    NoValidSubstitution,
    QueryError,
    UnconstrainedTokenVariable,
    UnknownColumn,
)
from semql.query.executor import Catalog, QueryContext, TableHandle, execute
from semql.query.parser import parse_query
from semql.tables import ColumnSchema, RelationalTable
from semql.udf import TOKENS, RegistryEntry, UdfRegistry, proximity_avg
from support import hand_model

SALES_ROWS = [
    {"custID": "custA", "Items": "milk bread", "Merchant": "acme",
     "Category": "grocery", "Amount": 120.0},
    {"custID": "custB", "Items": "milk cheese", "Merchant": "bodega",
     "Category": "grocery", "Amount": 80.0},
    {"custID": "custC", "Items": "beer wine", "Merchant": "acme",
     "Category": "drinks", "Amount": 150.5},
    {"custID": "custD", "Items": "beer chips", "Merchant": "bodega",
     "Category": "drinks", "Amount": 95.0},
    {"custID": "custE", "Items": "bread cheese", "Merchant": "corner",
     "Category": "grocery", "Amount": None},
]

EMP_ROWS = [
    {"Name": "alice", "Address": "mission street", "Salary": 100.0,
     "Dept": "research"},
    {"Name": "bob", "Address": "market square", "Salary": 80.0,
     "Dept": "marketing"},
    {"Name": "carol", "Address": "mission plaza", "Salary": 90.0,
     "Dept": "research"},
]

DEPT_ROWS = [
    {"Name": "research", "Location": "mission street"},
    {"Name": "marketing", "Location": "market lane"},
]

VOCAB = [
    "custa", "custb", "custc", "custd", "custe",
    "milk", "bread", "beer", "wine", "cheese", "chips", "listeria",
    "acme", "bodega", "corner", "grocery", "drinks", "merchant_x",
    "alice", "bob", "carol", "research", "marketing",
    "mission", "street", "market", "square", "plaza", "lane",
]


def make_model(dim=16, seed=2024):
    rng = np.random.default_rng(seed)
    mapping = {}
    for token in VOCAB:
        vec = rng.standard_normal(dim)
        mapping[token] = vec / np.linalg.norm(vec)
    return hand_model(mapping, normalized=True)


def make_sales():
    return RelationalTable(
        name="sales",
        columns=[
            ColumnSchema(name="custID", kind="primary_key"),
            ColumnSchema(name="Items", kind="text"),
            ColumnSchema(name="Merchant", kind="text"),
            ColumnSchema(name="Category", kind="text"),
            ColumnSchema(name="Amount", kind="numeric", mode="literal"),
        ],
        rows=[dict(row) for row in SALES_ROWS],
    )


def make_emp():
    return RelationalTable(
        name="EMP",
        columns=[
            ColumnSchema(name="Name", kind="primary_key"),
            ColumnSchema(name="Address", kind="text"),
            ColumnSchema(name="Salary", kind="numeric", mode="literal"),
            ColumnSchema(name="Dept", kind="text"),
        ],
        rows=[dict(row) for row in EMP_ROWS],
    )


def make_dept():
    return RelationalTable(
        name="DEPT",
        columns=[
            ColumnSchema(name="Name", kind="primary_key"),
            ColumnSchema(name="Location", kind="text"),
        ],
        rows=[dict(row) for row in DEPT_ROWS],
    )


@pytest.fixture
def model():
    return make_model()


@pytest.fixture
def catalog():
    catalog = Catalog()
    for table in (make_sales(), make_emp(), make_dept()):
        catalog.add_table(table)
    return catalog


@pytest.fixture
def ctx(model, catalog):
    return QueryContext(model=model, catalog=catalog)


def run(text, catalog, ctx):
    return execute(parse_query(text, registry=ctx.registry), catalog, ctx)


def group_vector(model, text):
    return oracles.mean_loop([model.vector(t) for t in text.split()])


class TestSimilaritySelfJoin:
    QUERY = """
    SELECT X.custID, Y.custID, similarityUDF(X.Items, Y.Items) AS similarity
    FROM sales X, sales Y
    WHERE similarityUDF(X.Items, Y.Items) > 0.1 AND X.custID != Y.custID
    ORDER BY similarity DESC
    """

    def test_matches_nested_loop_oracle(self, model, catalog, ctx):
        def score_of(left, right):
            return oracles.cosine_loop(
                group_vector(model, left["Items"]),
                group_vector(model, right["Items"]),
            )

        want = oracles.sim_self_join_loop(
            SALES_ROWS, "custID", score_of, threshold=0.1, limit=None
        )
        got = run(self.QUERY, catalog, ctx)
        assert got.columns == ["X.custID", "Y.custID", "similarity"]
        assert len(got.rows) == len(want)
        for (ga, gb, gs), (wa, wb, ws) in zip(got.rows, want):
            assert (ga, gb) == (wa, wb)
            assert gs == pytest.approx(ws, abs=1e-6)

    def test_raising_threshold_never_adds_rows(self, catalog, ctx):
        def keys(threshold):
            text = self.QUERY.replace("> 0.1", f"> {threshold}")
            return {row[:2] for row in run(text, catalog, ctx).rows}

        loose, middle, tight = keys(0.0), keys(0.3), keys(0.6)
        assert tight <= middle <= loose

    def test_determinism(self, catalog, ctx):
        first = run(self.QUERY, catalog, ctx)
        second = run(self.QUERY, catalog, ctx)
        assert first.rows == second.rows
        assert first.columns == second.columns


class TestPredictionQuery:
    QUERY = """
    SELECT X.custID, similarityUDF(X.Items, 'listeria') AS similarity
    FROM sales X
    WHERE similarityUDF(X.Items, 'listeria') > {threshold}
    ORDER BY similarity DESC
    LIMIT {limit}
    """

    def render(self, threshold=0.1, limit=2):
        return self.QUERY.format(threshold=threshold, limit=limit)

    def test_matches_oracle_with_limit(self, model, catalog, ctx):
        def score_of(row):
            return oracles.cosine_loop(
                group_vector(model, row["Items"]), model.vector("listeria")
            )

        want = oracles.prediction_loop(
            SALES_ROWS, "custID", score_of, threshold=0.1, limit=2
        )
        # three rows beat the threshold, so LIMIT 2 truncates
        got = run(self.render(), catalog, ctx)
        assert len(got.rows) == len(want) == 2
        for (gk, gs), (wk, ws) in zip(got.rows, want):
            assert gk == wk
            assert gs == pytest.approx(ws, abs=1e-6)

    def test_limit_zero_keeps_header(self, catalog, ctx):
        got = run(self.render(limit=0), catalog, ctx)
        assert got.rows == []
        assert got.columns == ["X.custID", "similarity"]

    def test_strategy_swap_leaves_exact_mode_untouched(self, model, catalog, ctx):
        exact_before = run(self.render(), catalog, ctx)
        lsh = build_lsh_index(model, bits=8, seed=0)
        approx_ctx = QueryContext(
            model=model, catalog=catalog, strategy=LshStrategy(index=lsh, radius=2)
        )
        approx = run(self.render(), catalog, approx_ctx)
        exact_after = run(self.render(), catalog, ctx)
        assert exact_before.rows == exact_after.rows
        exact_by_key = dict(exact_before.rows)
        for key, score in approx.rows:
            assert key in exact_by_key
            assert score == pytest.approx(exact_by_key[key], abs=1e-12)


class TestOlapQuery:
    QUERY = """
    SELECT X.Category, MAX(X.Amount)
    FROM sales X
    WHERE similarityUDF('bodega', X.Merchant) > {threshold}
    GROUP BY X.Category
    """

    def test_matches_group_max_oracle(self, model, catalog, ctx):
        threshold = 0.2

        def passes(row):
            score = oracles.cosine_loop(
                model.vector("bodega"), group_vector(model, row["Merchant"])
            )
            return score > threshold

        # custB, custD, custE qualify; custE's missing Amount is skipped
        # inside its group rather than poisoning the MAX
        want = oracles.olap_group_max_loop(
            [r for r in SALES_ROWS if r["Amount"] is not None],
            passes, "Category", "Amount",
        )
        got = run(self.QUERY.format(threshold=threshold), catalog, ctx)
        assert got.columns[0] == "X.Category"
        assert len(got.rows) == len(want) == 2
        for (gg, gv), (wg, wv) in zip(got.rows, want):
            assert gg == wg
            assert float(gv) == pytest.approx(wv, abs=1e-9)

    def test_group_order_is_first_appearance(self, catalog, ctx):
        got = run(
            "SELECT X.Category, MAX(X.Amount) FROM sales X GROUP BY X.Category",
            catalog, ctx,
        )
        assert [row[0] for row in got.rows] == ["grocery", "drinks"]

    def test_avg_over_text_rejected(self, catalog, ctx):
        with pytest.raises(QueryError, match="numeric"):
            run(
                "SELECT X.Category, AVG(X.Merchant) FROM sales X "
                "GROUP BY X.Category",
                catalog, ctx,
            )

    def test_ungrouped_projection_rejected(self, catalog, ctx):
        with pytest.raises(QueryError, match="grouped nor aggregated"):
            run(
                "SELECT X.Merchant, MAX(X.Amount) FROM sales X "
                "GROUP BY X.Category",
                catalog, ctx,
            )

    def test_avg_skips_missing_cells(self, catalog, ctx):
        got = run(
            "SELECT X.Category, AVG(X.Amount) FROM sales X GROUP BY X.Category",
            catalog, ctx,
        )
        by_group = dict(got.rows)
        assert by_group["grocery"] == pytest.approx((120.0 + 80.0) / 2)
        assert by_group["drinks"] == pytest.approx((150.5 + 95.0) / 2)


class TestTokenVariableJoin:
    QUERY = """
    SELECT EMP.Name, EMP.Salary, DEPT.Name
    FROM EMP, DEPT, Token e1, e2
    WHERE contains(EMP.Address, e1) AND
    contains(DEPT.*, e2) AND
    cosineDistance(e1, e2) > 0.75
    """

    def test_matches_token_pair_oracle(self, model, catalog, ctx):
        def left_tokens(row):
            return row["Address"].split()

        def right_tokens(row):
            return [row["Name"]] + row["Location"].split()

        def pair_passes(a, b):
            return oracles.cosine_loop(model.vector(a), model.vector(b)) > 0.75

        def project(left, right):
            return (left["Name"], left["Salary"], right["Name"])

        want = oracles.token_pair_join_loop(
            EMP_ROWS, DEPT_ROWS, left_tokens, right_tokens, pair_passes, project
        )
        got = run(self.QUERY, catalog, ctx)
        assert got.rows == want

    def test_shared_address_tokens_qualify(self, catalog, ctx):
        got = run(self.QUERY, catalog, ctx)
        pairs = {(row[0], row[2]) for row in got.rows}
        # mission/street tie alice and carol to research; market ties
        # bob to marketing
        assert {("alice", "research"), ("carol", "research"),
                ("bob", "marketing")} <= pairs

    def test_projected_token_variable_emits_bindings(self, catalog, ctx):
        got = run(
            "SELECT e1 FROM EMP, Token e1 WHERE contains(EMP.Address, e1)",
            catalog, ctx,
        )
        tokens = [row[0] for row in got.rows]
        assert sorted(tokens) == sorted(
            {"mission", "street", "market", "square", "plaza"}
        )
        assert len(tokens) == len(set(tokens))  # identical bindings collapse

    def test_unconstrained_token_variable_rejected(self, catalog, ctx):
        with pytest.raises(UnconstrainedTokenVariable):
            run("SELECT e1 FROM EMP, Token e1 WHERE EMP.Name = 'alice'",
                catalog, ctx)

    def test_whole_relation_scope_ignores_current_row(self, catalog, ctx):
        # binding over DEPT (the relation) sees marketing's tokens even
        # when the current DEPT row is research
        got = run(
            "SELECT DEPT.Name, e2 FROM DEPT, Token e2 "
            "WHERE contains(DEPT, e2) AND DEPT.Name = 'research'",
            catalog, ctx,
        )
        bound = {row[1] for row in got.rows}
        assert "lane" in bound


class TestComparisonsAndOrdering:
    def test_missing_cells_fail_every_comparison(self, catalog, ctx):
        base = "SELECT X.custID FROM sales X WHERE X.Amount {op} 90"
        for op in ("=", "!=", "<", ">", "<=", ">="):
            keys = {row[0] for row in run(base.format(op=op), catalog, ctx).rows}
            assert "custE" not in keys, op

    def test_numeric_string_coercion(self, catalog, ctx):
        got = run("SELECT X.custID FROM sales X WHERE X.custID != 42",
                  catalog, ctx)
        assert len(got.rows) == 5  # text never equals the number

    def test_order_by_column_ascending_missing_last(self, catalog, ctx):
        got = run("SELECT X.custID, X.Amount FROM sales X ORDER BY Amount",
                  catalog, ctx)
        keys = [row[0] for row in got.rows]
        assert keys == ["custB", "custD", "custA", "custC", "custE"]

    def test_order_by_descending_missing_still_last(self, catalog, ctx):
        got = run(
            "SELECT X.custID, X.Amount FROM sales X ORDER BY Amount DESC",
            catalog, ctx,
        )
        keys = [row[0] for row in got.rows]
        assert keys == ["custC", "custA", "custD", "custB", "custE"]

    def test_order_by_ties_keep_row_order(self, catalog, ctx):
        got = run(
            "SELECT X.custID, X.Category FROM sales X ORDER BY Category",
            catalog, ctx,
        )
        keys = [row[0] for row in got.rows]
        # drinks rows first (C before D), grocery rows keep A, B, E order
        assert keys == ["custC", "custD", "custA", "custB", "custE"]

    def test_grouped_order_by_must_name_projection(self, catalog, ctx):
        with pytest.raises(UnknownColumn):
            run(
                "SELECT X.Category, MAX(X.Amount) FROM sales X "
                "GROUP BY X.Category ORDER BY X.Merchant",
                catalog, ctx,
            )

    def test_unknown_column_rejected(self, catalog, ctx):
        with pytest.raises(UnknownColumn):
            run("SELECT X.Ghost FROM sales X", catalog, ctx)


class TestRelationalVariables:
    def test_expansion_with_provenance(self, catalog, ctx):
        got = run(
            "SELECT $R.X FROM $R WHERE stringPresent($R.X, 'mission') = 1",
            catalog, ctx,
        )
        assert got.columns == ["$R.X", "R", "X"]
        assert set(got.rows) == {
            ("mission street", "EMP", "Address"),
            ("mission plaza", "EMP", "Address"),
            ("mission street", "DEPT", "Location"),
        }

    def test_duplicates_removed_across_expansions(self, catalog, ctx):
        got = run(
            "SELECT stringPresent($R.X, 'mission') FROM $R "
            "WHERE stringPresent($R.X, 'mission') = 1",
            catalog, ctx,
        )
        assert len(got.rows) == len(set(got.rows))

    def test_empty_expansions_are_not_an_error(self, catalog, ctx):
        got = run(
            "SELECT $R.X FROM $R WHERE stringPresent($R.X, 'xyzzy') = 1",
            catalog, ctx,
        )
        assert got.rows == []

    def test_no_valid_substitution(self, catalog, ctx):
        # a fixed column that no expansion can type-check fails the query
        with pytest.raises(NoValidSubstitution):
            run(
                "SELECT $R.X, S.Ghost FROM $R, sales S "
                "WHERE stringPresent($R.X, 'mission') = 1",
                catalog, ctx,
            )


class TestMemoization:
    def test_duplicate_calls_compute_once_per_argument_set(self, model, catalog):
        calls = []

        def counting(view, args):
            calls.append(tuple(args[0]))
            return proximity_avg(args[0], args[1], view.model, view.policy)

        registry = UdfRegistry()
        registry.register(
            RegistryEntry(name="countSim", params=(TOKENS, TOKENS), call=counting)
        )
        ctx = QueryContext(model=model, catalog=catalog, registry=registry)
        run(
            "SELECT X.custID, countSim(X.Items, 'milk') AS s FROM sales X "
            "WHERE countSim(X.Items, 'milk') <= 1.5",
            catalog, ctx,
        )
        # five rows, each scored once despite appearing in WHERE and SELECT
        assert len(calls) == 5
