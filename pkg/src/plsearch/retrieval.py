"""BM25 lexical retrieval over a small in-memory corpus.

Desk-scale stand-in for a production dense retriever: scores documents with
the classic BM25 weighting (k1=1.2, b=0.75) over the shared normalized token
stream and returns the top-k, ties broken by ascending doc_id.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .metrics import normalize

DEFAULT_TOP_K = 3
DEFAULT_K1 = 1.2
DEFAULT_B = 0.75


@dataclass(frozen=True)
class CorpusDoc:
    doc_id: str
    title: str
    text: str

    def __post_init__(self):
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if not self.text:
            raise ValueError(f"document {self.doc_id!r} has empty text")

    @classmethod
    def from_dict(cls, data: dict) -> "CorpusDoc":
        return cls(doc_id=str(data["doc_id"]), title=str(data["title"]), text=str(data["text"]))

    def to_dict(self) -> dict:
        return {"doc_id": self.doc_id, "title": self.title, "text": self.text}


class Bm25Index:
    """Immutable-after-build BM25 index over title + body tokens."""

    def __init__(self, docs: list[CorpusDoc], k1: float = DEFAULT_K1, b: float = DEFAULT_B):
        if not docs:
            raise ValueError("empty corpus")
        ids = [d.doc_id for d in docs]
        if len(set(ids)) != len(ids):
            raise ValueError("corpus doc_ids must be unique")
        self.docs = list(docs)
        self.k1 = k1
        self.b = b
        self._term_freqs = [
            Counter(normalize(f"{d.title} {d.text}").tokens) for d in self.docs
        ]
        self._doc_lens = [sum(tf.values()) for tf in self._term_freqs]
        self._avg_len = sum(self._doc_lens) / len(self.docs)
        doc_freq: Counter = Counter()
        for tf in self._term_freqs:
            doc_freq.update(tf.keys())
        n = len(self.docs)
        self._idf = {
            term: math.log(1.0 + (n - df + 0.5) / (df + 0.5)) for term, df in doc_freq.items()
        }

    def __len__(self) -> int:
        return len(self.docs)

    def score(self, query: str) -> list[float]:
        """BM25 score of the query against every document, in corpus order."""
        terms = normalize(query).tokens
        scores = []
        for tf, doc_len in zip(self._term_freqs, self._doc_lens):
            norm = self.k1 * (1.0 - self.b + self.b * doc_len / self._avg_len)
            s = 0.0
            for term in terms:
                f = tf.get(term)
                if not f:
                    continue
                s += self._idf[term] * f * (self.k1 + 1.0) / (f + norm)
            scores.append(s)
        return scores

    def retrieve(self, query: str, k: int = DEFAULT_TOP_K) -> list[CorpusDoc]:
        """Top-k documents by score, ties broken by doc_id ascending."""
        if k < 1:
            raise ValueError("k must be >= 1")
        scores = self.score(query)
        ranked = sorted(
            range(len(self.docs)), key=lambda i: (-scores[i], self.docs[i].doc_id)
        )
        return [self.docs[i] for i in ranked[: min(k, len(self.docs))]]


def retrieve(index: Bm25Index, query: str, k: int = DEFAULT_TOP_K) -> list[CorpusDoc]:
    return index.retrieve(query, k)
