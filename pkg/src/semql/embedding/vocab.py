"""Vocabulary over a token corpus.

The sentence sentinel "</s>" always occupies index 0 and counts one
occurrence per sentence. It is exempt from min_count, never drawn as a
negative sample, and never trained; it exists so every model has a
well-defined default vector.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyCorpus

SENTINEL = "</s>"


@dataclass
class Vocabulary:
    tokens: list[str]
    counts: np.ndarray
    index: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.index = {token: i for i, token in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index


def build_vocabulary(sentences, min_count: int = 0) -> Vocabulary:
    """Count tokens and order them sentinel-first, then by (-count, token)."""
    sentences = list(sentences)
    counter = Counter()
    for sentence in sentences:
        counter.update(sentence.tokens)
    if not sentences or not counter:
        raise EmptyCorpus("training needs at least one non-empty sentence")
    counter.pop(SENTINEL, None)
    if not counter:
        raise EmptyCorpus("corpus holds no tokens besides the sentinel")
    floor = max(min_count, 1)
    kept = [(token, count) for token, count in counter.items() if count >= floor]
    if not kept:
        raise EmptyCorpus(f"no token reaches min_count={min_count}")
    kept.sort(key=lambda item: (-item[1], item[0]))
    tokens = [SENTINEL] + [token for token, _ in kept]
    counts = np.array([len(sentences)] + [count for _, count in kept], dtype=np.int64)
    return Vocabulary(tokens=tokens, counts=counts)
