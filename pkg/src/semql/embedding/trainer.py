"""Word-vector training over token sentences.

Negative-sampling CBOW and skip-gram with three departures from the
classic scheme, all aimed at short database sentences:

  circular window     the window wraps around the sentence, so column
                      order stops mattering for short rows
  uniform influence   the window span is not randomly shrunk; every
                      neighbor inside it counts fully
  pk always neighbor  the row's key token joins every context set of
                      its sentence, binding attributes to their entity

Column weights scale a context token's gradient contribution, letting
a schema emphasize or mute columns. Training is single-threaded and
fully deterministic given (corpus, config).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DimensionMismatch, EmptyCorpus
from .model import EmbeddingModel, normalize_vectors
from .vocab import SENTINEL, Vocabulary, build_vocabulary

ARCHITECTURES = ("cbow", "skipgram")
_MIN_ALPHA_FACTOR = 1e-4


@dataclass
class TrainingConfig:
    dimension: int = 300
    window: int = 12
    negative: int = 16
    sample: float = 1e-4
    min_count: int = 0
    epochs: int = 17
    architecture: str = "cbow"
    learning_rate: float | None = None
    circular_window: bool = True
    uniform_influence: bool = True
    pk_always_neighbor: bool = False
    column_weights: dict[str, float] = field(default_factory=dict)
    seed: int = 1

    def validate(self):
        if self.dimension < 1:
            raise ConfigError(f"dimension must be >= 1, got {self.dimension}")
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")
        if self.negative < 0:
            raise ConfigError(f"negative must be >= 0, got {self.negative}")
        if self.sample < 0:
            raise ConfigError(f"sample must be >= 0, got {self.sample}")
        if self.min_count < 0:
            raise ConfigError(f"min_count must be >= 0, got {self.min_count}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"architecture must be one of {ARCHITECTURES}")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        for name, weight in self.column_weights.items():
            if weight < 0:
                raise ConfigError(f"column weight for {name!r} must be >= 0")

    @property
    def start_alpha(self) -> float:
        if self.learning_rate is not None:
            return self.learning_rate
        return 0.05 if self.architecture == "cbow" else 0.025

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "window": self.window,
            "negative": self.negative,
            "sample": self.sample,
            "min_count": self.min_count,
            "epochs": self.epochs,
            "architecture": self.architecture,
            "learning_rate": self.learning_rate,
            "circular_window": self.circular_window,
            "uniform_influence": self.uniform_influence,
            "pk_always_neighbor": self.pk_always_neighbor,
            "column_weights": dict(sorted(self.column_weights.items())),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, spec: dict) -> "TrainingConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(spec) - known
        if unknown:
            raise ConfigError(f"unknown training options: {sorted(unknown)}")
        cfg = cls(**spec)
        cfg.validate()
        return cfg


def context_window(length: int, center: int, span: int, circular: bool = True) -> list[int]:
    """Positions inside the window around center, center excluded.

    Circular windows wrap past the sentence ends; positions the wrap
    revisits appear once.
    """
    if not circular:
        lo = max(0, center - span)
        hi = min(length, center + span + 1)
        return [j for j in range(lo, hi) if j != center]
    positions = []
    seen = set()
    for offset in range(-span, span + 1):
        if offset == 0:
            continue
        j = (center + offset) % length
        if j == center or j in seen:
            continue
        seen.add(j)
        positions.append(j)
    return positions


def enumerate_context_sets(tokens, window: int, circular: bool = True, row_key: str | None = None):
    """(center token, context tokens) pairs as the trainer sees them.

    Mirrors the uniform-influence path: full span every time. When
    row_key is set it joins the context of every center that is not
    the key itself.
    """
    tokens = list(tokens)
    pairs = []
    for center in range(len(tokens)):
        context = [tokens[j] for j in context_window(len(tokens), center, window, circular)]
        if row_key is not None and tokens[center] != row_key and row_key not in context:
            context.append(row_key)
        pairs.append((tokens[center], context))
    return pairs


class _NoiseTable:
    """Unigram^0.75 sampling table; the sentinel carries no mass."""

    def __init__(self, counts: np.ndarray, sentinel_index: int = 0):
        weights = counts.astype(np.float64) ** 0.75
        weights[sentinel_index] = 0.0
        self.cumulative = np.cumsum(weights)
        self.total = float(self.cumulative[-1]) if len(weights) else 0.0
        self.positive = int(np.count_nonzero(weights))

    def draw(self, rng, how_many: int, exclude: int) -> list[int]:
        if how_many == 0 or self.total <= 0.0:
            return []
        if self.positive == 1 and self.cumulative[exclude] > (
            self.cumulative[exclude - 1] if exclude > 0 else 0.0
        ):
            # the excluded token holds all the mass, nothing to draw
            return []
        out = []
        while len(out) < how_many:
            r = rng.random() * self.total
            w = int(np.searchsorted(self.cumulative, r, side="right"))
            if w != exclude:
                out.append(w)
        return out


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # clip keeps exp() quiet; the sigmoid is saturated out there anyway
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


def _prepare_sentences(sentences, vocab: Vocabulary, cfg: TrainingConfig):
    """Resolve tokens to indices with per-position weights and keys."""
    prepared = []
    for sentence in sentences:
        indices, weights = [], []
        columns = sentence.columns
        for pos, token in enumerate(sentence.tokens):
            idx = vocab.index.get(token)
            if idx is None:
                continue
            weight = 1.0
            if columns is not None and cfg.column_weights:
                weight = float(cfg.column_weights.get(columns[pos], 1.0))
            indices.append(idx)
            weights.append(weight)
        key_index = None
        key_weight = 1.0
        if cfg.pk_always_neighbor:
            if sentence.row_key is None:
                raise ConfigError(
                    "pk_always_neighbor needs sentences with row keys"
                )
            key_index = vocab.index.get(sentence.row_key)
            if key_index is not None and key_index in indices:
                key_weight = weights[indices.index(key_index)]
        prepared.append((indices, weights, key_index, key_weight))
    return prepared


def _keep_scores(vocab: Vocabulary, sample: float) -> np.ndarray | None:
    """Classic subsampling keep probabilities; None disables the draw."""
    if sample <= 0.0:
        return None
    counts = vocab.counts.astype(np.float64)
    threshold = sample * float(counts.sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        keep = (np.sqrt(counts / threshold) + 1.0) * (threshold / counts)
    keep[~np.isfinite(keep)] = 1.0
    return np.minimum(keep, 1.0)


def _train_pair(syn0, syn1neg, l1, center, noise, cfg, alpha, rng):
    """One positive + negatives update; returns the input-side gradient."""
    targets = [center] + noise.draw(rng, cfg.negative, center)
    labels = np.zeros(len(targets), dtype=np.float32)
    labels[0] = 1.0
    l2 = syn1neg[targets]
    gradient = (labels - _sigmoid(l2 @ l1)) * np.float32(alpha)
    np.add.at(syn1neg, targets, gradient[:, None] * l1[None, :])
    return gradient @ l2


def _run_epochs(syn0, syn1neg, prepared, vocab, cfg, rng):
    noise = _NoiseTable(vocab.counts, sentinel_index=vocab.index[SENTINEL])
    keep = _keep_scores(vocab, cfg.sample)
    start_alpha = cfg.start_alpha
    min_alpha = start_alpha * _MIN_ALPHA_FACTOR
    words_per_epoch = sum(len(indices) for indices, _, _, _ in prepared)
    total_words = max(cfg.epochs * words_per_epoch, 1)
    processed = 0
    cbow = cfg.architecture == "cbow"

    for _ in range(cfg.epochs):
        for indices, weights, key_index, key_weight in prepared:
            alpha = max(
                start_alpha * (1.0 - processed / (total_words + 1)), min_alpha
            )
            processed += len(indices)
            if keep is None:
                words, wts = indices, weights
            else:
                words, wts = [], []
                for idx, weight in zip(indices, weights):
                    if keep[idx] >= 1.0 or rng.random() < keep[idx]:
                        words.append(idx)
                        wts.append(weight)
            length = len(words)
            if length == 0:
                continue
            for pos in range(length):
                if cfg.uniform_influence:
                    span = cfg.window
                else:
                    span = cfg.window - int(rng.integers(cfg.window))
                positions = context_window(length, pos, span, cfg.circular_window)
                context = [words[j] for j in positions]
                cweights = [wts[j] for j in positions]
                center = words[pos]
                if (
                    key_index is not None
                    and center != key_index
                    and key_index not in context
                ):
                    context.append(key_index)
                    cweights.append(key_weight)
                if not context:
                    continue
                if cbow:
                    l1 = syn0[context].mean(axis=0)
                    neu1e = _train_pair(
                        syn0, syn1neg, l1, center, noise, cfg, alpha, rng
                    )
                    for idx, weight in zip(context, cweights):
                        if weight != 0.0:
                            syn0[idx] += neu1e * np.float32(weight)
                else:
                    for idx, weight in zip(context, cweights):
                        if weight == 0.0:
                            continue
                        neu1e = _train_pair(
                            syn0,
                            syn1neg,
                            syn0[idx].copy(),
                            center,
                            noise,
                            cfg,
                            alpha * weight,
                            rng,
                        )
                        syn0[idx] += neu1e


def _initial_rows(rng, rows: int, dim: int) -> np.ndarray:
    return ((rng.random((rows, dim), dtype=np.float32)) - 0.5) / dim


def train(sentences, cfg: TrainingConfig) -> EmbeddingModel:
    """Train a fresh model; bit-identical for identical inputs."""
    cfg.validate()
    vocab = build_vocabulary(sentences, cfg.min_count)
    rng = np.random.default_rng(cfg.seed)
    syn0 = _initial_rows(rng, len(vocab), cfg.dimension)
    syn1neg = np.zeros((len(vocab), cfg.dimension), dtype=np.float32)
    prepared = _prepare_sentences(sentences, vocab, cfg)
    _run_epochs(syn0, syn1neg, prepared, vocab, cfg, rng)
    model = EmbeddingModel(
        tokens=list(vocab.tokens), vectors=syn0, counts=vocab.counts, normalized=False
    )
    model.output_weights = syn1neg
    return normalize_vectors(model)


def train_incremental(
    model: EmbeddingModel, sentences, cfg: TrainingConfig
) -> EmbeddingModel:
    """Continue a model on new sentences.

    Existing tokens keep their indices and continue from their current
    vectors; unseen tokens join the vocabulary with fresh random rows.
    An empty corpus returns the model unchanged up to re-normalization.
    """
    cfg.validate()
    if model.dim != cfg.dimension:
        raise DimensionMismatch(
            f"model dimension {model.dim} != configured {cfg.dimension}"
        )
    sentences = list(sentences)
    if not sentences:
        fresh = EmbeddingModel(
            tokens=list(model.tokens),
            vectors=model.vectors.copy(),
            counts=None if model.counts is None else model.counts.copy(),
        )
        return normalize_vectors(fresh)

    try:
        new_vocab = build_vocabulary(sentences, cfg.min_count)
    except EmptyCorpus:
        fresh = EmbeddingModel(
            tokens=list(model.tokens), vectors=model.vectors.copy()
        )
        return normalize_vectors(fresh)

    tokens = list(model.tokens)
    additions = [t for t in new_vocab.tokens if t != SENTINEL and t not in model.index]
    tokens.extend(additions)
    position = dict(model.index)
    for offset, token in enumerate(additions):
        position[token] = len(model.tokens) + offset
    counts = np.zeros(len(tokens), dtype=np.int64)
    for token, i in new_vocab.index.items():
        counts[position[token]] = new_vocab.counts[i]
    counts[position[SENTINEL]] = len(sentences)

    vocab = Vocabulary(tokens=tokens, counts=counts)
    rng = np.random.default_rng(cfg.seed)
    fresh_rows = _initial_rows(rng, len(additions), cfg.dimension)
    syn0 = np.vstack([model.vectors.astype(np.float32), fresh_rows])
    if model.output_weights is not None and model.output_weights.shape == model.vectors.shape:
        syn1neg = np.vstack(
            [
                model.output_weights.astype(np.float32),
                np.zeros((len(additions), cfg.dimension), dtype=np.float32),
            ]
        )
    else:
        syn1neg = np.zeros((len(tokens), cfg.dimension), dtype=np.float32)
    prepared = _prepare_sentences(sentences, vocab, cfg)
    _run_epochs(syn0, syn1neg, prepared, vocab, cfg, rng)
    updated = EmbeddingModel(
        tokens=tokens, vectors=syn0, counts=counts, normalized=False
    )
    updated.output_weights = syn1neg
    return normalize_vectors(updated)
