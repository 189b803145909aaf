"""Text cell normalization.

Cells become lowercase tokens drawn from [a-z0-9_</>.]. Comma groups
form multi-part tokens (blanks turn into underscores) so that phrases
like "Mastiff Dog" survive as one unit, while input that already looks
tokenized is split on whitespace and passed through unchanged.
"""

from __future__ import annotations

import re

from ..tables import ColumnSchema, canonical_column_name

# Small closed-class list. Standalone stop words are dropped; words
# inside a multi-part token are kept (bank_of_america stays intact).
STOP_WORDS = frozenset(
    """
    a an and are as at be been but by for from had has have he her his
    i if in into is it its of on or she that the their them they this
    those to was were will with
    """.split()
)

_TOKEN_RE = re.compile(r"^[a-z0-9_</>.]+$")
_KEEP_CHARS = frozenset("abcdefghijklmnopqrstuvwxyz0123456789_</>. ")


def _clean_fragment(text: str) -> str:
    """Lowercase ASCII with separators unified to single spaces.

    Hyphens separate words; every other disallowed character simply
    disappears.
    """
    text = text.lower().replace("-", " ")
    text = text.encode("ascii", "ignore").decode("ascii")
    text = "".join(ch for ch in text if ch in _KEEP_CHARS)
    return " ".join(text.split())


def _empty_marker(column) -> list[str]:
    if column is None:
        return []
    if isinstance(column, ColumnSchema):
        return [column.empty_marker]
    return [f"{canonical_column_name(str(column))}_empty"]


def normalize_text_token(raw, column=None) -> list[str]:
    """Normalize one text cell into tokens.

    column provides the name used for the <column>_empty marker; it may
    be a ColumnSchema, a plain string, or None (no marker, used for
    free-standing literals).
    """
    if raw is None:
        return _empty_marker(column)
    text = str(raw)
    chunks = text.split()
    if not chunks:
        return _empty_marker(column)

    if all(_TOKEN_RE.match(chunk) for chunk in chunks):
        # already-normalized token stream: keep tokens as they are
        kept = [chunk for chunk in chunks if chunk not in STOP_WORDS]
        return kept if kept else _empty_marker(column)

    tokens = []
    for segment in text.split(","):
        fragment = _clean_fragment(segment)
        if not fragment:
            continue
        if " " not in fragment:
            if fragment in STOP_WORDS:
                continue
            tokens.append(fragment)
        else:
            tokens.append(fragment.replace(" ", "_"))
    return tokens if tokens else _empty_marker(column)


def normalize_free_text(raw) -> list[str]:
    """Tokens for text with no column context; empty input yields []."""
    return normalize_text_token(raw, column=None)
