"""Word embeddings over token sentences."""

from .vocab import SENTINEL, Vocabulary, build_vocabulary
from .model import (
    EmbeddingModel,
    load_model,
    normalize_vectors,
    resolve_vectors,
    save_model,
)
from .trainer import TrainingConfig, context_window, enumerate_context_sets, train, train_incremental
from .cache import RowAttributeCache, build_row_attribute_cache

__all__ = [
    "SENTINEL",
    "Vocabulary",
    "build_vocabulary",
    "EmbeddingModel",
    "save_model",
    "load_model",
    "normalize_vectors",
    "resolve_vectors",
    "TrainingConfig",
    "train",
    "train_incremental",
    "context_window",
    "enumerate_context_sets",
    "RowAttributeCache",
    "build_row_attribute_cache",
]
