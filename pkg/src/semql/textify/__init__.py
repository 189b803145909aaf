"""Turn relational data into token sentences for embedding training."""

from .text import STOP_WORDS, normalize_free_text, normalize_text_token
from .numeric import encode_numeric, fit_numeric_encoder, fit_kmeans_centroids
from .images import (
    FixtureTransport,
    ImageTagRecord,
    build_image_table,
    parse_type_hierarchy,
    textify_image_response,
)
from .corpus import (
    TokenSentence,
    append_external_kb,
    build_encoders,
    cell_tokens,
    read_corpus,
    textify_table,
    write_corpus,
)

__all__ = [
    "STOP_WORDS",
    "normalize_text_token",
    "normalize_free_text",
    "encode_numeric",
    "fit_numeric_encoder",
    "fit_kmeans_centroids",
    "parse_type_hierarchy",
    "textify_image_response",
    "ImageTagRecord",
    "FixtureTransport",
    "build_image_table",
    "TokenSentence",
    "textify_table",
    "build_encoders",
    "cell_tokens",
    "append_external_kb",
    "write_corpus",
    "read_corpus",
]
