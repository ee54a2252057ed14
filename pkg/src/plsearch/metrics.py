"""Text normalization and token-overlap metrics.

Shared measurement kernel for answer rewards, correctness filters, and
evaluation: token-level F1, exact match, cover exact match, and bigram
Jaccard distance, all computed over the same normalized token stream
(lowercase, punctuation stripped, English articles dropped).
"""

from __future__ import annotations

import string
from collections import Counter
from dataclasses import dataclass

_ARTICLES = frozenset({"a", "an", "the"})
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


@dataclass(frozen=True)
class NormalizedText:
    """Normalized token view of a string, keeping the original around."""

    tokens: tuple[str, ...]
    source: str


def _tokens(s: str) -> list[str]:
    lowered = s.lower().translate(_PUNCT_TABLE)
    return [t for t in lowered.split() if t not in _ARTICLES]


def normalize(s: str) -> NormalizedText:
    """Lowercase, strip punctuation, drop articles, split on whitespace."""
    return NormalizedText(tokens=tuple(_tokens(s)), source=s)


def token_f1(pred: str, gold: str) -> float:
    """Token-level F1 over normalized token multisets.

    Equals 2*overlap / (len(pred) + len(gold)) where overlap counts each
    token at its minimum multiplicity on the two sides.  When both sides
    normalize to nothing the score is 1 only if both originals were empty.
    """
    pred_toks = _tokens(pred)
    gold_toks = _tokens(gold)
    if not pred_toks and not gold_toks:
        return 1.0 if pred == "" and gold == "" else 0.0
    if not pred_toks or not gold_toks:
        return 0.0
    overlap = sum((Counter(pred_toks) & Counter(gold_toks)).values())
    if overlap == 0:
        return 0.0
    return 2.0 * overlap / (len(pred_toks) + len(gold_toks))


def exact_match(pred: str, gold_set: list[str]) -> int:
    """1 iff the normalized token sequence of pred equals that of any gold."""
    if not gold_set:
        raise ValueError("gold_set must be non-empty")
    pred_toks = _tokens(pred)
    return int(any(pred_toks == _tokens(g) for g in gold_set))


def _contains_contiguous(haystack: list[str], needle: list[str]) -> bool:
    if not needle:
        return True
    n = len(needle)
    return any(haystack[i : i + n] == needle for i in range(len(haystack) - n + 1))


def cover_exact_match(pred: str, gold_set: list[str]) -> int:
    """1 iff some gold's normalized tokens occur contiguously inside pred's."""
    if not gold_set:
        raise ValueError("gold_set must be non-empty")
    pred_toks = _tokens(pred)
    return int(any(_contains_contiguous(pred_toks, _tokens(g)) for g in gold_set))


def _ngram_set(tokens: list[str]) -> set[tuple[str, ...]]:
    # Queries shorter than two tokens fall back to their unigram set so the
    # Jaccard ratio stays defined on short real-world queries.
    if len(tokens) < 2:
        return {(t,) for t in tokens}
    return {(tokens[i], tokens[i + 1]) for i in range(len(tokens) - 1)}


def bigram_jaccard_distance(q1: str, q2: str) -> float:
    """1 - Jaccard similarity of the adjacent-token bigram sets of two queries."""
    b1 = _ngram_set(_tokens(q1))
    b2 = _ngram_set(_tokens(q2))
    if not b1 and not b2:
        return 0.0
    union = b1 | b2
    inter = b1 & b2
    return 1.0 - len(inter) / len(union)
