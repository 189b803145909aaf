"""Cognitive UDFs: similarity, analogy, clustering, external-model variants."""

import numpy as np
import pytest

import oracles
from semql.embedding.cache import RowAttributeCache
from semql.embedding.vocab import SENTINEL
from semql.errors import (
    AllTokensUnknown,
    DegenerateDirection,
    InvalidFlag,
    UnknownConcept,
    UnknownFunction,
    UnknownKey,
    ZeroVector,
)
from semql.udf import (
    DEFAULT_REGISTRY,
    AnalogyMethod,
    analogy_query,
    analogy_score,
    analogy_sequence,
    attribute_sim_avg,
    avg_vector,
    clustered_analogies,
    combined_avg_sim,
    cosine,
    odd_man_out,
    proximity_avg,
    proximity_avg_adv_for_ext_kb,
    proximity_avg_for_ext_kb,
    rank_analogy_candidates,
    semantic_cluster_score,
    string_present,
)
from support import hand_model, unit


def random_unit_model(n_tokens: int, dim: int, seed: int):
    rng = np.random.default_rng(seed)
    mapping = {}
    for i in range(n_tokens):
        vec = rng.standard_normal(dim)
        mapping[f"tok{i:03d}"] = vec / np.linalg.norm(vec)
    return hand_model(mapping, normalized=True)


class TestCosine:
    def test_identical_vectors(self):
        assert cosine(unit(1, 2, 3), unit(1, 2, 3)) == pytest.approx(1.0, abs=1e-6)

    def test_orthogonal_vectors(self):
        assert cosine(unit(1, 0), unit(0, 1)) == pytest.approx(0.0, abs=1e-9)

    def test_forty_five_degrees(self):
        assert cosine(np.array([1.0, 1.0]), np.array([1.0, 0.0])) == pytest.approx(
            0.7071, abs=1e-4
        )

    def test_zero_vector_rejected(self):
        with pytest.raises(ZeroVector):
            cosine(np.zeros(3), unit(1, 0, 0))

    def test_symmetry_and_range(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            a, b = rng.standard_normal(6), rng.standard_normal(6)
            ab, ba = cosine(a, b), cosine(b, a)
            assert ab == pytest.approx(ba, abs=1e-12)
            assert -1.0 <= ab <= 1.0
            assert ab == pytest.approx(oracles.cosine_loop(a, b), abs=1e-9)


class TestAvgVector:
    def test_singleton_mean(self):
        model = hand_model({"a1": unit(1, 0), "b1": unit(0, 1)})
        assert np.allclose(avg_vector(["a1"], model), model.vector("a1"))

    def test_duplicate_mean(self):
        model = hand_model({"a1": unit(1, 0)})
        assert np.allclose(avg_vector(["a1", "a1"], model), model.vector("a1"))

    def test_two_basis_vectors(self):
        model = hand_model({"a1": np.array([1.0, 0.0]), "b1": np.array([0.0, 1.0])})
        assert np.allclose(avg_vector(["a1", "b1"], model), [0.5, 0.5])

    def test_error_policy_raises_on_unknown(self):
        model = hand_model({"a1": unit(1, 0)})
        with pytest.raises(Exception):
            avg_vector(["ghost"], model, policy="error")

    def test_default_policy_substitutes_sentinel(self):
        model = hand_model({"a1": unit(1, 0)})
        got = avg_vector(["ghost"], model, policy="skip_with_default")
        assert np.allclose(got, model.sentinel_vector)

    def test_empty_group_rejected(self):
        model = hand_model({"a1": unit(1, 0)})
        with pytest.raises(AllTokensUnknown):
            avg_vector([], model)


class TestStringPresent:
    def test_token_present(self):
        assert string_present("animal stable_gear", "animal") == 1

    def test_no_substring_matching(self):
        assert string_present("animal stable_gear", "stable") == 0

    def test_empty_haystack(self):
        assert string_present("", "anything") == 0

    def test_token_lists_accepted(self):
        assert string_present(["animal", "stable_gear"], ["stable_gear"]) == 1


class TestProximityAvg:
    def test_self_similarity(self):
        model = hand_model({"a1": unit(1, 2), "b1": unit(2, 1)})
        assert proximity_avg(["a1", "b1"], ["a1", "b1"], model) == pytest.approx(
            1.0, abs=1e-6
        )

    def test_matches_cosine_oracle(self):
        model = hand_model({"a1": unit(3, 1), "b1": unit(-1, 2)})
        want = oracles.cosine_loop(model.vector("a1"), model.vector("b1"))
        assert proximity_avg(["a1"], ["b1"], model) == pytest.approx(want, abs=1e-9)

    def test_range_on_random_groups(self):
        model = random_unit_model(20, 6, seed=3)
        rng = np.random.default_rng(4)
        tokens = [t for t in model.tokens if t != SENTINEL]
        for _ in range(25):
            a = list(rng.choice(tokens, size=3))
            b = list(rng.choice(tokens, size=2))
            got = proximity_avg(a, b, model)
            assert -1.0 <= got <= 1.0
            want = oracles.cosine_loop(
                oracles.mean_loop([model.vector(t) for t in a]),
                oracles.mean_loop([model.vector(t) for t in b]),
            )
            assert got == pytest.approx(want, abs=1e-6)


class TestCombinedAvgSim:
    def test_identity(self):
        model = hand_model({"k1": unit(1, 1, 0)})
        assert combined_avg_sim(["k1"], ["k1", "k1", "k1"], model) == pytest.approx(
            1.0, abs=1e-6
        )

    def test_triple_of_same_input_reduces_to_plain_cosine(self):
        model = hand_model({"c1": unit(1, 0, 1), "i1": unit(0, 1, 1)})
        want = cosine(model.vector("i1"), model.vector("c1"))
        got = combined_avg_sim(["c1"], ["i1", "i1", "i1"], model)
        assert got == pytest.approx(want, abs=1e-9)

    def test_matches_mean_cosine_oracle(self):
        model = random_unit_model(8, 5, seed=9)
        inputs = ["tok001", "tok002", "tok003"]
        want = oracles.cosine_loop(
            oracles.mean_loop([model.vector(t) for t in inputs]),
            model.vector("tok000"),
        )
        got = combined_avg_sim(["tok000"], inputs, model)
        assert got == pytest.approx(want, abs=1e-6)

    def test_unknown_key_rejected(self):
        model = hand_model({"k1": unit(1, 0)})
        with pytest.raises(UnknownKey):
            combined_avg_sim(["k1"], ["k1", "ghost", "k1"], model)


class TestSemanticClusterScore:
    def test_identical_inputs_and_candidate(self):
        model = hand_model({"k1": unit(2, 1)})
        got = semantic_cluster_score(["k1", "k1", "k1"], ["k1"], model)
        assert got == pytest.approx(1.0, abs=1e-6)

    def test_single_input_is_plain_cosine(self):
        model = hand_model({"a1": unit(1, 0, 1), "b1": unit(1, 1, 0)})
        want = cosine(model.vector("a1"), model.vector("b1"))
        assert semantic_cluster_score(["a1"], ["b1"], model) == pytest.approx(
            want, abs=1e-6
        )

    def test_trait_sharing_candidates_outrank_others(self):
        # meat eaters bunch along the first axis, plant eaters along
        # the second; a carnivore candidate must beat the herbivore
        model = hand_model(
            {
                "lion": unit(10, 1, 0),
                "vulture": unit(9, 0, 1),
                "shark": unit(10, 0, -1),
                "jackal": unit(8, 1, 1),
                "giraffe": unit(0, 10, 1),
            }
        )
        inputs = ["lion", "vulture", "shark"]
        carnivore = semantic_cluster_score(inputs, ["jackal"], model)
        herbivore = semantic_cluster_score(inputs, ["giraffe"], model)
        assert carnivore > herbivore


class TestAttributeSimAvg:
    def make_cache_and_model(self):
        rng = np.random.default_rng(12)
        keys = ["img1", "img2", "img3", "img4"]
        model = hand_model(
            {k: rng.standard_normal(5) / 3.0 for k in keys}, normalized=False
        )
        cache = RowAttributeCache(dim=5)
        vectors = {}
        for key in keys:
            columns = {
                col: rng.standard_normal(5).astype(np.float32)
                for col in ("imagename", "classB", "classC", "classD")
            }
            cache.put("images", key, columns)
            vectors[key] = columns
        return cache, model, vectors

    def test_flag3_identity(self):
        cache, model, _ = self.make_cache_and_model()
        got = attribute_sim_avg(
            ["img1", "img1", "img1"], "img1", 3, cache, model
        )
        assert got == pytest.approx(1.0, abs=1e-6)

    def test_vector_counts_per_flag(self):
        cache, model, _ = self.make_cache_and_model()
        seen = {}
        for flag in (1, 2, 3, 4):
            attribute_sim_avg(
                ["img1", "img2", "img3"], "img4", flag, cache, model,
                probe=lambda i, t, flag=flag: seen.__setitem__(flag, (i, t)),
            )
        assert seen == {1: (6, 2), 2: (6, 1), 3: (9, 3), 4: (9, 1)}

    def test_flag2_matches_arithmetic_oracle(self):
        cache, model, vectors = self.make_cache_and_model()
        inputs = ["img1", "img2", "img3"]
        input_vecs = [
            vectors[key][col] for key in inputs for col in ("classB", "classC")
        ]
        want = oracles.cosine_loop(
            oracles.mean_loop(input_vecs), vectors["img4"]["classD"]
        )
        got = attribute_sim_avg(inputs, "img4", 2, cache, model)
        assert got == pytest.approx(want, abs=1e-6)

    def test_flag4_compares_against_object_vector(self):
        cache, model, vectors = self.make_cache_and_model()
        inputs = ["img1", "img2", "img3"]
        input_vecs = [
            vectors[key][col]
            for key in inputs
            for col in ("classB", "classC", "classD")
        ]
        want = oracles.cosine_loop(
            oracles.mean_loop(input_vecs), model.vector("img4")
        )
        got = attribute_sim_avg(inputs, "img4", 4, cache, model)
        assert got == pytest.approx(want, abs=1e-6)

    def test_invalid_flag(self):
        cache, model, _ = self.make_cache_and_model()
        with pytest.raises(InvalidFlag):
            attribute_sim_avg(["img1", "img2", "img3"], "img4", 5, cache, model)

    def test_needs_exactly_three_inputs(self):
        cache, model, _ = self.make_cache_and_model()
        with pytest.raises(UnknownKey):
            attribute_sim_avg(["img1", "img2"], "img4", 1, cache, model)


class TestAnalogyScore:
    def test_additive_collapses_when_x_equals_y(self):
        rng = np.random.default_rng(20)
        vx, vq, vw = (rng.standard_normal(5) for _ in range(3))
        got = analogy_score(vx, vx, vq, vw, method=AnalogyMethod.COSADD)
        assert got == pytest.approx(cosine(vw, vq), abs=1e-9)

    def test_multiplicative_closed_form(self):
        vx = np.array([1.0, 0.0])
        vy = np.array([0.6, 0.8])
        s = (cosine(vy, vx) + 1.0) / 2.0
        want = s * 1.0 / (s + 1e-3)
        got = analogy_score(vx, vy, vx, vy, method=AnalogyMethod.COSMUL)
        assert got == pytest.approx(want, abs=1e-9)

    def test_multiplicative_nonnegative_and_finite(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            vecs = [rng.standard_normal(4) for _ in range(4)]
            score = analogy_score(*vecs, method=AnalogyMethod.COSMUL)
            assert np.isfinite(score)
            assert score >= 0.0

    def test_direction_method_rejects_degenerate_pairs(self):
        vx = unit(1, 0)
        vw = unit(0, 1)
        with pytest.raises(DegenerateDirection):
            analogy_score(vx, vx, unit(1, 1), vw, method=AnalogyMethod.PAIRDIRECTION)
        with pytest.raises(DegenerateDirection):
            analogy_score(vx, unit(0, 1), vw, vw, method=AnalogyMethod.PAIRDIRECTION)

    def test_all_methods_match_oracle_on_random_vectors(self):
        rng = np.random.default_rng(33)
        for _ in range(50):
            vx, vy, vq, vw = (rng.standard_normal(6) for _ in range(4))
            for method in (1, 2, 3):
                want = oracles.analogy_score_loop(vw, vx, vy, vq, method)
                got = analogy_score(vx, vy, vq, vw, method=AnalogyMethod(method))
                assert got == pytest.approx(want, abs=1e-9), method


class TestAnalogyRanking:
    def test_full_ranking_matches_loop_oracle(self):
        model = random_unit_model(50, 8, seed=44)
        rng = np.random.default_rng(45)
        tokens = [t for t in model.tokens if t != SENTINEL]
        for trial in range(10):
            x, y, q = rng.choice(tokens, size=3, replace=False)
            exclude = {x, y, q}
            candidates = [
                (t, model.vector(t)) for t in tokens if t not in exclude
            ]
            vx, vy, vq = model.vector(x), model.vector(y), model.vector(q)
            for method in (1, 2, 3):
                want = oracles.rank_candidates_loop(
                    candidates, vx, vy, vq, method
                )
                got = rank_analogy_candidates(
                    model, vx, vy, vq, k=len(candidates),
                    method=AnalogyMethod(method), exclude=exclude,
                )
                assert [t for t, _ in got] == [t for t, _ in want]
                for (_, gs), (_, ws) in zip(got, want):
                    assert gs == pytest.approx(ws, abs=1e-6)

    def test_ties_break_lexicographically(self):
        model = hand_model(
            {"bb": unit(1, 0), "aa": unit(1, 0), "qq": unit(0, 1)},
            normalized=True,
        )
        got = rank_analogy_candidates(
            model, unit(0, 1), unit(0, 1), unit(1, 0), k=2,
            method=AnalogyMethod.COSADD, exclude={"qq"},
        )
        assert [t for t, _ in got] == ["aa", "bb"]

    def test_sentinel_never_ranks(self):
        model = random_unit_model(5, 4, seed=7)
        got = rank_analogy_candidates(
            model, model.vector("tok000"), model.vector("tok001"),
            model.vector("tok002"), k=len(model),
        )
        assert SENTINEL not in [t for t, _ in got]

    def test_scale_invariance_of_ranking(self):
        model = random_unit_model(20, 6, seed=50)
        scaled = hand_model(
            {t: model.vector(t) * 7.5 for t in model.tokens if t != SENTINEL},
            normalized=False,
        )
        vx, vy, vq = (model.vector(f"tok00{i}") for i in range(3))
        base = rank_analogy_candidates(
            model, vx, vy, vq, k=10, method=AnalogyMethod.COSADD
        )
        # same query against uniformly scaled vocabulary vectors
        rescaled = rank_analogy_candidates(
            scaled, vx, vy, vq, k=10, method=AnalogyMethod.COSADD
        )
        assert [t for t, _ in base] == [t for t, _ in rescaled]


class TestAnalogyGroups:
    def test_single_token_groups_equal_raw_score(self):
        model = random_unit_model(6, 5, seed=61)
        want = analogy_score(
            model.vector("tok000"), model.vector("tok002"),
            model.vector("tok001"), model.vector("tok003"),
            method=AnalogyMethod.COSMUL,
        )
        got = analogy_query(
            ["tok000"], ["tok001"], ["tok002"], ["tok003"], model
        )
        assert got == pytest.approx(want, abs=1e-9)

    def test_methods_disagree_on_generic_inputs(self):
        model = random_unit_model(6, 5, seed=62)
        args = (["tok000"], ["tok001"], ["tok002"], ["tok003"])
        add = analogy_query(*args, model, method=AnalogyMethod.COSADD)
        mul = analogy_query(*args, model, method=AnalogyMethod.COSMUL)
        assert add != pytest.approx(mul, abs=1e-9)

    def test_sequence_collapses_to_query_on_duplicate_pairs(self):
        model = random_unit_model(8, 5, seed=63)
        want = analogy_query(
            ["tok000"], ["tok001"], ["tok004"], ["tok005", "tok006"], model
        )
        got = analogy_sequence(
            "tok000", "tok001", "tok000", "tok001", "tok004",
            ["tok005", "tok006"], model,
        )
        assert got == pytest.approx(want, abs=1e-9)

    def test_sequence_matches_arithmetic_oracle(self):
        model = random_unit_model(8, 5, seed=64)
        v = model.vector
        vx = oracles.mean_loop([v("tok000"), v("tok002")])
        vy = oracles.mean_loop([v("tok001"), v("tok003")])
        vw = oracles.mean_loop([v("tok005"), v("tok006")])
        want = oracles.analogy_score_loop(vw, vx, vy, v("tok004"), method=3)
        got = analogy_sequence(
            "tok000", "tok001", "tok002", "tok003", "tok004",
            ["tok005", "tok006"], model,
        )
        assert got == pytest.approx(want, abs=1e-6)


class TestOddManOut:
    def test_forced_geometry(self):
        model = hand_model(
            {
                "hippo": unit(1, 0.1, 0),
                "giraffe": unit(1, -0.1, 0),
                "elephant": unit(1, 0, 0.1),
                "lion": unit(0, 0, 1),
            }
        )
        assert odd_man_out(["hippo", "giraffe", "elephant", "lion"], model) == "lion"

    def test_permutation_invariance(self):
        model = random_unit_model(6, 5, seed=71)
        items = ["tok000", "tok001", "tok002", "tok003"]
        want = odd_man_out(items, model)
        assert odd_man_out(list(reversed(items)), model) == want

    def test_lexicographic_tie_break(self):
        model = hand_model(
            {"aa": unit(1, 0), "bb": unit(-1, 0), "cc": unit(0, 1)},
        )
        # aa-bb are opposite, cc orthogonal to both: aa and bb tie for
        # least mean similarity, aa wins by name
        assert odd_man_out(["bb", "cc", "aa"], model) == "aa"

    def test_needs_three_items(self):
        model = random_unit_model(4, 3, seed=72)
        with pytest.raises(Exception):
            odd_man_out(["tok000", "tok001"], model)


class TestClusteredAnalogies:
    def test_cardinality_contract(self):
        model = random_unit_model(20, 6, seed=81)
        result = clustered_analogies(
            [("tok000", "tok001"), ("tok002", "tok003")], 4, 2, model
        )
        assert len(result) <= 4
        for _, targets in result:
            assert len(targets) <= 2

    def test_single_pair_degenerates_to_top_analogy(self):
        model = random_unit_model(12, 6, seed=82)
        result = clustered_analogies([("tok000", "tok001")], 1, 1, model)
        assert len(result) == 1
        source, targets = result[0]
        want = rank_analogy_candidates(
            model,
            model.vector("tok000"),
            model.vector("tok001"),
            model.vector(source),
            k=1,
            exclude={"tok000", "tok001", source},
        )
        assert targets == [want[0][0]]

    def test_sources_exclude_the_examples(self):
        model = random_unit_model(10, 5, seed=83)
        result = clustered_analogies([("tok000", "tok001")], 3, 1, model)
        for source, _ in result:
            assert source not in {"tok000", "tok001"}


class TestExternalKbVariants:
    def ext_model(self):
        return hand_model(
            {
                "hypercarnivore": unit(1, 0, 0),
                "CONCEPT_Hyena": unit(0.9, 0.1, 0),
                "hyena": unit(0, 0, 1),
                "CONCEPT_Lion": unit(0.8, 0.2, 0),
                "lion": unit(0.5, 0.5, 0),
            }
        )

    def test_tokens_resolve_via_concept_prefix(self):
        model = self.ext_model()
        want = cosine(model.vector("hypercarnivore"), model.vector("CONCEPT_Hyena"))
        got = proximity_avg_for_ext_kb(["hypercarnivore"], ["hyena"], model)
        assert got == pytest.approx(want, abs=1e-9)

    def test_unknown_tokens_fall_back_to_sentinel(self):
        model = self.ext_model()
        want = cosine(model.vector("hypercarnivore"), model.sentinel_vector)
        got = proximity_avg_for_ext_kb(["hypercarnivore"], ["zebra", "okapi"], model)
        assert got == pytest.approx(want, abs=1e-9)

    def test_mixed_resolution_matches_oracle(self):
        model = self.ext_model()
        resolved = [model.vector("CONCEPT_Hyena"), model.sentinel_vector]
        want = oracles.cosine_loop(
            model.vector("hypercarnivore"), oracles.mean_loop(resolved)
        )
        got = proximity_avg_for_ext_kb(
            ["hypercarnivore"], ["hyena", "zebra"], model
        )
        assert got == pytest.approx(want, abs=1e-6)

    def test_missing_concept_rejected(self):
        with pytest.raises(UnknownConcept):
            proximity_avg_for_ext_kb(["ghost"], ["hyena"], self.ext_model())

    def test_adv_averages_both_forms(self):
        model = self.ext_model()
        both = oracles.mean_loop(
            [model.vector("CONCEPT_Lion"), model.vector("lion")]
        )
        want = oracles.cosine_loop(model.vector("hypercarnivore"), both)
        got = proximity_avg_adv_for_ext_kb(["hypercarnivore"], ["lion"], model)
        assert got == pytest.approx(want, abs=1e-6)

    def test_adv_concept_only_form_matches_plain_variant(self):
        # okapi has CONCEPT_Okapi but no bare form: the adv variant has
        # nothing extra to blend in and must agree with the plain one
        model = hand_model(
            {
                "hypercarnivore": unit(1, 0, 0),
                "CONCEPT_Okapi": unit(0.3, 0.7, 0),
            }
        )
        plain = proximity_avg_for_ext_kb(["hypercarnivore"], ["okapi"], model)
        adv = proximity_avg_adv_for_ext_kb(["hypercarnivore"], ["okapi"], model)
        assert adv == pytest.approx(plain, abs=1e-9)

    def test_adv_plain_only_token_falls_back_to_sentinel(self):
        model = hand_model(
            {
                "hypercarnivore": unit(1, 0, 0),
                "zebra": unit(0, 1, 0),  # plain form only, no CONCEPT_Zebra
            }
        )
        want = cosine(model.vector("hypercarnivore"), model.sentinel_vector)
        got = proximity_avg_adv_for_ext_kb(["hypercarnivore"], ["zebra"], model)
        assert got == pytest.approx(want, abs=1e-9)


class TestRegistry:
    EXPECTED = [
        "stringPresent", "proximityAvg", "combinedAvgSim", "attributeSimAvg",
        "analogyQuery", "analogyQueryOfImageSequenceUsingAttributeVector",
        "proximityAvgForExtKB", "proximityAvgAdvForExtKB", "similarityUDF",
        "semclusterUDF", "analogySequence", "cosineDistance",
    ]

    def test_reference_names_registered(self):
        for name in self.EXPECTED:
            assert name in DEFAULT_REGISTRY, name

    def test_lookup_is_case_insensitive(self):
        entry = DEFAULT_REGISTRY.resolve("PROXIMITYAVG")
        assert entry.name == "proximityAvg"

    def test_unknown_function(self):
        with pytest.raises(UnknownFunction):
            DEFAULT_REGISTRY.resolve("noSuchUDF")

    def test_analogy_arity_allows_optional_method(self):
        entry = DEFAULT_REGISTRY.resolve("analogyQuery")
        assert entry.min_arity == 4
        assert entry.max_arity == 5

    def test_attribute_sim_avg_arity(self):
        entry = DEFAULT_REGISTRY.resolve("attributeSimAvg")
        assert entry.min_arity == entry.max_arity == 5
