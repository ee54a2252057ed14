import math
from collections import Counter

import pytest

from plsearch.metrics import normalize
from plsearch.retrieval import DEFAULT_B, DEFAULT_K1, DEFAULT_TOP_K, Bm25Index, CorpusDoc
from plsearch.simulate import build_fixture, reference_item


def _docs():
    return [
        CorpusDoc("d01", "Harbor charts", "Charts of the harbor soundings and buoy positions."),
        CorpusDoc("d02", "Polar voyage", "An account of a polar voyage across drifting ice."),
        CorpusDoc("d03", "Shipwright manual", "A manual for shipwrights on hull framing and keels."),
    ]


def test_defaults():
    assert DEFAULT_TOP_K == 3
    assert DEFAULT_K1 == 1.2
    assert DEFAULT_B == 0.75


def test_unique_title_ranks_first():
    index = Bm25Index(_docs())
    top = index.retrieve("shipwright manual", k=1)
    assert top[0].doc_id == "d03"


def test_retrieve_returns_exactly_k():
    corpus, _ = build_fixture(seed=3, n_items=2, corpus_size=20)
    index = Bm25Index(corpus)
    assert len(index.retrieve("ledger the archive", k=3)) == 3
    assert len(corpus) == 20


def test_retrieve_caps_at_corpus_size():
    index = Bm25Index(_docs())
    assert len(index.retrieve("polar", k=10)) == 3


def test_empty_corpus_rejected():
    with pytest.raises(ValueError, match="empty corpus"):
        Bm25Index([])


def test_duplicate_ids_rejected():
    docs = [_docs()[0], CorpusDoc("d01", "Other", "Other text entirely.")]
    with pytest.raises(ValueError):
        Bm25Index(docs)


def test_tie_break_by_doc_id():
    docs = [
        CorpusDoc("b", "same words here", "same words here"),
        CorpusDoc("a", "same words here", "same words here"),
    ]
    index = Bm25Index(docs)
    assert [d.doc_id for d in index.retrieve("same words", k=2)] == ["a", "b"]


def _brute_force_scores(docs: list[CorpusDoc], query: str, k1: float, b: float) -> list[float]:
    """Straight transcription of the BM25 formula, independent of the index."""
    token_lists = [list(normalize(f"{d.title} {d.text}").tokens) for d in docs]
    lengths = [len(t) for t in token_lists]
    avg = sum(lengths) / len(lengths)
    n = len(docs)
    scores = []
    for tokens, length in zip(token_lists, lengths):
        tf = Counter(tokens)
        s = 0.0
        for term in normalize(query).tokens:
            f = tf.get(term, 0)
            if f == 0:
                continue
            df = sum(1 for other in token_lists if term in other)
            idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
            s += idf * f * (k1 + 1.0) / (f + k1 * (1.0 - b + b * length / avg))
        scores.append(s)
    return scores


def test_planted_query_hits_supporting_doc_by_brute_force():
    corpus, _ = build_fixture(seed=5, n_items=4, corpus_size=24)
    index = Bm25Index(corpus)
    query = "who designed and built the ship Fram"
    expected = _brute_force_scores(corpus, query, DEFAULT_K1, DEFAULT_B)
    got = index.score(query)
    assert got == pytest.approx(expected, abs=1e-9)
    top3 = {d.doc_id for d in index.retrieve(query, 3)}
    brute_top3 = {
        corpus[i].doc_id
        for i in sorted(range(len(corpus)), key=lambda i: (-expected[i], corpus[i].doc_id))[:3]
    }
    assert top3 == brute_top3
    assert "ref-archer" in top3


def test_reference_item_answerable_via_retrieval():
    corpus, _ = build_fixture(seed=11, n_items=6, corpus_size=40)
    index = Bm25Index(corpus)
    item, _ = reference_item()
    for hop in item.hop_chain:
        hits = [d.doc_id for d in index.retrieve(hop.sub_question, 3)]
        assert hop.doc_id in hits
