"""Builders shared across test modules."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from semql.embedding.model import EmbeddingModel
from semql.embedding.vocab import SENTINEL

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES = REPO_ROOT / "fixtures"


def hand_model(mapping: dict, normalized: bool = False) -> EmbeddingModel:
    """Model with fixed vectors; adds the sentinel when absent."""
    mapping = dict(mapping)
    dim = len(next(iter(mapping.values())))
    if SENTINEL not in mapping:
        mapping = {SENTINEL: np.full(dim, 1.0 / np.sqrt(dim)), **mapping}
    tokens = list(mapping)
    vectors = np.array([mapping[t] for t in tokens], dtype=np.float32)
    return EmbeddingModel(tokens=tokens, vectors=vectors, normalized=normalized)


def unit(*components) -> np.ndarray:
    vec = np.asarray(components, dtype=np.float64)
    return (vec / np.linalg.norm(vec)).astype(np.float32)
