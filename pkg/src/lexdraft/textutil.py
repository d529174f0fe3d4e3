"""Deterministic text primitives: tokenization, normalization, digests.

One whitespace tokenizer is shared by chunking, prompt budgeting and the
metrics so that every token count in the system agrees.
"""

from __future__ import annotations

import hashlib
import json
import re
from typing import Any

_SENTENCE_END = re.compile(r"(?<=[.!?])\s+")
_EDGE_PUNCT = re.compile(r"^[\W_]+|[\W_]+$", re.UNICODE)


def tokens(text: str) -> list[str]:
    """Split on Unicode whitespace. The system-wide token unit."""
    return text.split()


def count_tokens(text: str) -> int:
    return len(text.split())


def normalize_tokens(text: str) -> list[str]:
    """Lowercase, strip punctuation from token edges, drop empties.

    Used by the metrics so scores are invariant under case and
    surrounding whitespace/punctuation.
    """
    out = []
    for tok in text.casefold().split():
        tok = _EDGE_PUNCT.sub("", tok)
        if tok:
            out.append(tok)
    return out


def sentences(text: str) -> list[str]:
    """Naive sentence split on terminal punctuation; keeps the terminator."""
    parts = [p.strip() for p in _SENTENCE_END.split(text.strip())]
    return [p for p in parts if p]


def sha256_hex(data: bytes | str) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def canonical_json(obj: Any) -> str:
    """Stable JSON encoding used for digests and chain hashes."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
