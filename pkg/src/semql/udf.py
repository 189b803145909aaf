"""Vector-valued functions exposed to the query dialect.

Every function works on token groups: a cell's tokens, a literal's
tokens, or a single bound token variable. Groups resolve to vectors
under the model's out-of-vocabulary policy and collapse by averaging,
so multi-token cells compare as their centroid.

Analogy scoring supports three methods for "x is to y as q is to w":

  COSADD         cos(w, q + y - x)
  PAIRDIRECTION  cos(w - q, y - x)
  COSMUL         cos'(w,q) * cos'(w,y) / (cos'(w,x) + eps),
                 with every cosine shifted via c -> (c + 1) / 2
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .embedding.cache import RowAttributeCache
from .embedding.model import EmbeddingModel, resolve_vectors
from .embedding.vocab import SENTINEL
from .errors import (
    AllTokensUnknown,
    DegenerateDirection,
    DimensionMismatch,
    InvalidFlag,
    InvalidK,
    UnknownConcept,
    UnknownFunction,
    UnknownKey,
    ZeroVector,
)

_NORM_EPS = 1e-12
COSMUL_EPSILON = 1e-3


class AnalogyMethod(enum.IntEnum):
    COSADD = 1
    PAIRDIRECTION = 2
    COSMUL = 3


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"cosine over shapes {a.shape} and {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < _NORM_EPS or nb < _NORM_EPS:
        raise ZeroVector("cosine of a (near) zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def avg_vector(tokens, model: EmbeddingModel, policy: str = "error") -> np.ndarray:
    """Mean of the member vectors; deliberately not re-normalized."""
    return resolve_vectors(tokens, model, policy).mean(axis=0)


def string_present(haystack, needle: str) -> int:
    tokens = haystack.split() if isinstance(haystack, str) else list(haystack)
    wanted = needle.split() if isinstance(needle, str) else list(needle)
    return 1 if wanted and all(token in tokens for token in wanted) else 0


def proximity_avg(tokens_a, tokens_b, model: EmbeddingModel, policy: str = "error") -> float:
    """Cosine of the two groups' average vectors."""
    return cosine(avg_vector(tokens_a, model, policy), avg_vector(tokens_b, model, policy))


def combined_avg_sim(candidate, inputs, model: EmbeddingModel, policy: str = "error") -> float:
    """Candidate against the centroid of the input entities."""
    keys = list(inputs)
    if not keys:
        raise UnknownKey("combined_avg_sim needs at least one input key")
    for key in keys:
        if key not in model:
            raise UnknownKey(f"input key {key!r} is not in the vocabulary")
    centroid = np.stack([model.require(k) for k in keys]).mean(axis=0)
    return cosine(avg_vector(candidate, model, policy), centroid)


def semantic_cluster_score(inputs, candidate, model: EmbeddingModel, policy: str = "error") -> float:
    """How well the candidate fits the cluster the inputs define."""
    keys = list(inputs)
    if not keys:
        raise UnknownKey("semantic_cluster_score needs at least one input key")
    for key in keys:
        if key not in model:
            raise UnknownKey(f"input key {key!r} is not in the vocabulary")
    centroid = np.stack([model.require(k) for k in keys]).mean(axis=0)
    return cosine(centroid, avg_vector(candidate, model, policy))


# flag -> (input columns, target columns); None target = whole-entity vector
_ATTRIBUTE_FLAGS = {
    1: (("classB", "classC"), ("classB", "classC")),
    2: (("classB", "classC"), ("classD",)),
    3: (("classB", "classC", "classD"), ("classB", "classC", "classD")),
    4: (("classB", "classC", "classD"), None),
}


def attribute_flag_columns(flag: int):
    try:
        return _ATTRIBUTE_FLAGS[int(flag)]
    except (KeyError, ValueError):
        raise InvalidFlag(
            f"flag must be one of {sorted(_ATTRIBUTE_FLAGS)}, got {flag!r}"
        ) from None


def attribute_sim_avg(
    inputs,
    candidate: str,
    flag: int,
    cache: RowAttributeCache,
    model: EmbeddingModel,
    probe=None,
) -> float:
    """Attribute-level similarity between three inputs and a candidate.

    The flag picks which cached column vectors participate; flag 4
    compares against the candidate's own token vector instead of its
    attributes. probe, when given, receives (input vector count,
    target vector count) for instrumentation.
    """
    keys = list(inputs)
    if len(keys) != 3:
        raise UnknownKey(f"attribute_sim_avg needs exactly 3 input keys, got {len(keys)}")
    input_columns, target_columns = attribute_flag_columns(flag)
    input_vectors = [
        cache.column_vector(key, column)
        for key in keys
        for column in input_columns
    ]
    if target_columns is None:
        target_vectors = [model.require(candidate)]
    else:
        target_vectors = [
            cache.column_vector(candidate, column) for column in target_columns
        ]
    if probe is not None:
        probe(len(input_vectors), len(target_vectors))
    return cosine(
        np.stack(input_vectors).mean(axis=0),
        np.stack(target_vectors).mean(axis=0),
    )


def _shifted(c: float) -> float:
    return (c + 1.0) / 2.0


def analogy_score(
    vx: np.ndarray,
    vy: np.ndarray,
    vq: np.ndarray,
    vw: np.ndarray,
    method: AnalogyMethod = AnalogyMethod.COSMUL,
    epsilon: float = COSMUL_EPSILON,
) -> float:
    method = AnalogyMethod(method)
    if method is AnalogyMethod.COSADD:
        return cosine(vw, vq + vy - vx)
    if method is AnalogyMethod.PAIRDIRECTION:
        direction = np.asarray(vy, dtype=np.float64) - np.asarray(vx, dtype=np.float64)
        offset = np.asarray(vw, dtype=np.float64) - np.asarray(vq, dtype=np.float64)
        if np.linalg.norm(direction) < _NORM_EPS or np.linalg.norm(offset) < _NORM_EPS:
            raise DegenerateDirection("analogy pair difference has zero norm")
        return cosine(offset, direction)
    return (
        _shifted(cosine(vw, vq))
        * _shifted(cosine(vw, vy))
        / (_shifted(cosine(vw, vx)) + epsilon)
    )


def analogy_query(
    x_tokens,
    q_tokens,
    y_tokens,
    w_tokens,
    model: EmbeddingModel,
    method: AnalogyMethod = AnalogyMethod.COSMUL,
    policy: str = "error",
) -> float:
    """Score "x is to q as y is to w" over token groups."""
    return analogy_score(
        avg_vector(x_tokens, model, policy),
        avg_vector(y_tokens, model, policy),
        avg_vector(q_tokens, model, policy),
        avg_vector(w_tokens, model, policy),
        method=method,
    )


def analogy_sequence(
    a: str,
    b: str,
    c: str,
    d: str,
    e: str,
    w_tokens,
    model: EmbeddingModel,
    method: AnalogyMethod = AnalogyMethod.COSMUL,
    policy: str = "error",
) -> float:
    """Sequence analogy: (a,b) and (c,d) define the relation, e queries it.

    The source side averages a and c, the target side averages b and d;
    e stands in the source role and the candidate group answers it.
    """
    for key in (a, b, c, d, e):
        if key not in model:
            raise UnknownKey(f"key {key!r} is not in the vocabulary")
    vx = np.stack([model.require(a), model.require(c)]).mean(axis=0)
    vy = np.stack([model.require(b), model.require(d)]).mean(axis=0)
    vq = model.require(e)
    vw = avg_vector(w_tokens, model, policy)
    return analogy_score(vx, vy, vq, vw, method=method)


def rank_analogy_candidates(
    model: EmbeddingModel,
    vx: np.ndarray,
    vy: np.ndarray,
    vq: np.ndarray,
    k: int = 1,
    method: AnalogyMethod = AnalogyMethod.COSMUL,
    epsilon: float = COSMUL_EPSILON,
    exclude=(),
) -> list[tuple[str, float]]:
    """Top-k vocabulary answers to an analogy, scored in one pass.

    Vectorized over the whole (unit-row) vocabulary matrix; ties break
    lexicographically. The sentinel and excluded tokens never rank.
    """
    if k < 1:
        raise InvalidK(f"k must be >= 1, got {k}")
    method = AnalogyMethod(method)
    rows = model.vectors.astype(np.float64)

    def unit(v):
        v = np.asarray(v, dtype=np.float64)
        norm = np.linalg.norm(v)
        if norm < _NORM_EPS:
            raise ZeroVector("analogy over a zero vector")
        return v / norm

    if method is AnalogyMethod.COSADD:
        scores = rows @ unit(vq + vy - vx)
    elif method is AnalogyMethod.PAIRDIRECTION:
        direction = np.asarray(vy, np.float64) - np.asarray(vx, np.float64)
        if np.linalg.norm(direction) < _NORM_EPS:
            raise DegenerateDirection("analogy pair difference has zero norm")
        offsets = rows - np.asarray(vq, np.float64)
        norms = np.linalg.norm(offsets, axis=1)
        norms[norms < _NORM_EPS] = np.inf
        scores = (offsets @ (direction / np.linalg.norm(direction))) / norms
    else:
        cos_q = (rows @ unit(vq) + 1.0) / 2.0
        cos_y = (rows @ unit(vy) + 1.0) / 2.0
        cos_x = (rows @ unit(vx) + 1.0) / 2.0
        scores = cos_q * cos_y / (cos_x + epsilon)

    banned = set(exclude) | {SENTINEL}
    order = sorted(
        (i for i, token in enumerate(model.tokens) if token not in banned),
        key=lambda i: (-scores[i], model.tokens[i]),
    )
    return [(model.tokens[i], float(scores[i])) for i in order[:k]]


def odd_man_out(items, model: EmbeddingModel) -> str:
    """The item least like the rest; ties favor the earlier name."""
    names = list(items)
    if len(names) < 3:
        raise InvalidK(f"odd_man_out needs at least 3 items, got {len(names)}")
    vectors = [model.require(name) for name in names]
    means = []
    for i in range(len(names)):
        sims = [cosine(vectors[i], vectors[j]) for j in range(len(names)) if j != i]
        means.append(sum(sims) / len(sims))
    best = min(range(len(names)), key=lambda i: (means[i], names[i]))
    return names[best]


def clustered_analogies(
    pairs,
    k_sources: int,
    k_targets: int,
    model: EmbeddingModel,
    method: AnalogyMethod = AnalogyMethod.COSMUL,
) -> list[tuple[str, list[str]]]:
    """Extend example (source, target) pairs to similar source entities.

    New sources are the k_sources vocabulary tokens closest to the
    example sources' centroid; each then answers the analogy built
    from the example pairs with its k_targets best targets.
    """
    pairs = [(s, t) for s, t in pairs]
    if not pairs:
        raise UnknownKey("clustered_analogies needs at least one example pair")
    if k_sources < 1 or k_targets < 1:
        raise InvalidK("k_sources and k_targets must be >= 1")
    sources = [s for s, _ in pairs]
    targets = [t for _, t in pairs]
    for key in sources + targets:
        if key not in model:
            raise UnknownKey(f"key {key!r} is not in the vocabulary")
    centroid = np.stack([model.require(s) for s in sources]).mean(axis=0)
    centroid_unit = centroid / max(np.linalg.norm(centroid), _NORM_EPS)
    fit = model.vectors.astype(np.float64) @ centroid_unit
    known = set(sources) | set(targets) | {SENTINEL}
    ranked = sorted(
        (i for i, token in enumerate(model.tokens) if token not in known),
        key=lambda i: (-fit[i], model.tokens[i]),
    )
    vx = centroid
    vy = np.stack([model.require(t) for t in targets]).mean(axis=0)
    results = []
    for i in ranked[:k_sources]:
        source = model.tokens[i]
        answers = rank_analogy_candidates(
            model,
            vx,
            vy,
            model.require(source),
            k=k_targets,
            method=method,
            exclude=set(sources) | set(targets) | {source},
        )
        results.append((source, [token for token, _ in answers]))
    return results


def _concept_form(token: str) -> str:
    """Curated-entity form of one token: CONCEPT_ prefix, first byte
    uppercased (non-alphabetic first characters pass through)."""
    if not token:
        return "CONCEPT_"
    return "CONCEPT_" + token[0].upper() + token[1:]


def _require_concept(concept_tokens, ext_model: EmbeddingModel) -> np.ndarray:
    concept = "_".join(concept_tokens)
    vec = ext_model.vector(concept)
    if vec is None:
        raise UnknownConcept(
            f"concept {concept!r} is not in the external model's vocabulary"
        )
    return vec


def proximity_avg_for_ext_kb(
    concept_tokens,
    tokens_b,
    ext_model: EmbeddingModel,
) -> float:
    """Similarity of an external concept to a group of database tokens.

    Each database token resolves through its CONCEPT_ entity form in
    the external model; tokens without one fall back to the sentinel
    vector so the group average stays defined.
    """
    concept_vec = _require_concept(concept_tokens, ext_model)
    tokens_b = list(tokens_b)
    if not tokens_b:
        raise AllTokensUnknown("cannot score an empty token group")
    resolved = []
    for token in tokens_b:
        vec = ext_model.vector(_concept_form(token))
        resolved.append(ext_model.sentinel_vector if vec is None else vec)
    return cosine(concept_vec, np.stack(resolved).mean(axis=0))


def proximity_avg_adv_for_ext_kb(
    concept_tokens,
    tokens_b,
    ext_model: EmbeddingModel,
) -> float:
    """Like proximity_avg_for_ext_kb but blends both token forms.

    A token with both its CONCEPT_ form and its plain form in the
    external model contributes the mean of the two vectors; CONCEPT_
    form alone contributes just that vector; a token whose CONCEPT_
    form is absent falls back to the sentinel (a plain form alone does
    not qualify).
    """
    concept_vec = _require_concept(concept_tokens, ext_model)
    tokens_b = list(tokens_b)
    if not tokens_b:
        raise AllTokensUnknown("cannot score an empty token group")
    resolved = []
    for token in tokens_b:
        entity = ext_model.vector(_concept_form(token))
        plain = ext_model.vector(token)
        if entity is None:
            resolved.append(ext_model.sentinel_vector)
        elif plain is None:
            resolved.append(entity)
        else:
            resolved.append((entity + plain) / 2.0)
    return cosine(concept_vec, np.stack(resolved).mean(axis=0))


# --- registry ---------------------------------------------------------------

# argument kinds the query engine can hand to a UDF
#   tokens  token group (cell, literal, or bound variable)
#   key     single entity token (first token of the group)
#   int     integer literal
TOKENS, KEY, INT = "tokens", "key", "int"


@dataclass
class RegistryEntry:
    name: str
    params: tuple
    call: object  # (ctx, args) -> float | int
    optional: tuple = ()

    @property
    def min_arity(self) -> int:
        return len(self.params)

    @property
    def max_arity(self) -> int:
        return len(self.params) + len(self.optional)


class UdfRegistry:
    def __init__(self):
        self._entries: dict[str, RegistryEntry] = {}
        self._by_lower: dict[str, str] = {}

    def register(self, entry: RegistryEntry):
        self._entries[entry.name] = entry
        self._by_lower[entry.name.lower()] = entry.name

    def resolve(self, name: str) -> RegistryEntry:
        canonical = self._by_lower.get(name.lower())
        if canonical is None:
            raise UnknownFunction(f"unknown function {name!r}")
        return self._entries[canonical]

    def __contains__(self, name: str) -> bool:
        return name.lower() in self._by_lower

    def names(self) -> list[str]:
        return sorted(self._entries)


def _first_token(tokens) -> str:
    tokens = list(tokens)
    if not tokens:
        raise UnknownKey("expected an entity key, got an empty token group")
    return tokens[0]


def _method_arg(args, at: int, default=AnalogyMethod.COSMUL) -> AnalogyMethod:
    if len(args) > at:
        try:
            return AnalogyMethod(int(args[at]))
        except ValueError:
            raise InvalidFlag(f"analogy method must be 1, 2, or 3, got {args[at]!r}") from None
    return default


def build_default_registry() -> UdfRegistry:
    registry = UdfRegistry()

    def add(name, params, call, optional=()):
        registry.register(RegistryEntry(name=name, params=params, call=call, optional=optional))

    def proximity(ctx, args):
        return proximity_avg(args[0], args[1], ctx.model, ctx.policy)

    add("proximityAvg", (TOKENS, TOKENS), proximity)
    add("similarityUDF", (TOKENS, TOKENS), proximity)
    add("valueSimUDF", (TOKENS, TOKENS), proximity)

    add(
        "cosineDistance",
        (TOKENS, TOKENS),
        lambda ctx, args: proximity_avg(args[0], args[1], ctx.model, ctx.policy),
    )

    add(
        "stringPresent",
        (TOKENS, TOKENS),
        lambda ctx, args: string_present(args[0], args[1]),
    )

    add(
        "combinedAvgSim",
        (TOKENS, KEY, KEY, KEY),
        lambda ctx, args: combined_avg_sim(args[0], args[1:4], ctx.model, ctx.policy),
    )

    add(
        "semclusterUDF",
        (KEY, KEY, KEY, TOKENS),
        lambda ctx, args: semantic_cluster_score(args[0:3], args[3], ctx.model, ctx.policy),
    )

    add(
        "attributeSimAvg",
        (KEY, KEY, KEY, KEY, INT),
        lambda ctx, args: attribute_sim_avg(
            args[0:3], args[3], args[4], ctx.cache, ctx.model
        ),
    )

    def analogy(ctx, args):
        return analogy_query(
            args[0], args[1], args[2], args[3], ctx.model,
            method=_method_arg(args, 4), policy=ctx.policy,
        )

    add("analogyQuery", (TOKENS, TOKENS, TOKENS, TOKENS), analogy, optional=(INT,))
    add("analogyUDF", (TOKENS, TOKENS, TOKENS, TOKENS), analogy, optional=(INT,))

    def sequence(ctx, args):
        return analogy_sequence(
            args[0], args[1], args[2], args[3], args[4], args[5], ctx.model,
            method=_method_arg(args, 6), policy=ctx.policy,
        )

    add(
        "analogySequence",
        (KEY, KEY, KEY, KEY, KEY, TOKENS),
        sequence,
        optional=(INT,),
    )
    add(
        "analogyQueryOfImageSequenceUsingAttributeVector",
        (KEY, KEY, KEY, KEY, KEY, TOKENS),
        sequence,
        optional=(INT,),
    )

    add(
        "proximityAvgForExtKB",
        (TOKENS, TOKENS),
        lambda ctx, args: proximity_avg_for_ext_kb(args[0], args[1], ctx.ext_model),
    )
    add(
        "proximityAvgAdvForExtKB",
        (TOKENS, TOKENS),
        lambda ctx, args: proximity_avg_adv_for_ext_kb(args[0], args[1], ctx.ext_model),
    )

    return registry


DEFAULT_REGISTRY = build_default_registry()
