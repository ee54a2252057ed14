import random

import pytest

from plsearch.metrics import (
    bigram_jaccard_distance,
    cover_exact_match,
    exact_match,
    normalize,
    token_f1,
)


def test_normalize_drops_articles_and_punctuation():
    assert list(normalize("The Fram.").tokens) == ["fram"]
    assert list(normalize("Colin Archer").tokens) == ["colin", "archer"]
    assert list(normalize("he played for Real Madrid in 2012").tokens) == [
        "he", "played", "for", "real", "madrid", "in", "2012",
    ]


def test_normalize_keeps_source():
    assert normalize("The Fram.").source == "The Fram."


def test_token_f1_identity():
    assert token_f1("Colin Archer", "Colin Archer") == 1.0


def test_token_f1_partial():
    assert token_f1("Archer", "Colin Archer") == pytest.approx(2 / 3, abs=1e-6)


def test_token_f1_disjoint():
    assert token_f1("Guy Sebastian", "Chris Young") == 0.0


def test_token_f1_empty_conventions():
    assert token_f1("", "") == 1.0
    assert token_f1("", "x") == 0.0
    assert token_f1("x", "") == 0.0
    # both normalize to empty but the originals are not empty
    assert token_f1("the", "a") == 0.0


def test_token_f1_symmetry_and_range():
    rng = random.Random(5)
    words = ["red", "blue", "green", "apple", "tree", "stone"]
    for _ in range(300):
        a = " ".join(rng.choices(words, k=rng.randint(0, 6)))
        b = " ".join(rng.choices(words, k=rng.randint(0, 6)))
        f_ab, f_ba = token_f1(a, b), token_f1(b, a)
        assert f_ab == f_ba
        assert 0.0 <= f_ab <= 1.0


def brute_force_f1(a_tokens: list[str], b_tokens: list[str]) -> float:
    """Independent oracle: sort both lists and count matches two-pointer style."""
    a, b = sorted(a_tokens), sorted(b_tokens)
    i = j = matches = 0
    while i < len(a) and j < len(b):
        if a[i] == b[j]:
            matches += 1
            i += 1
            j += 1
        elif a[i] < b[j]:
            i += 1
        else:
            j += 1
    if not a and not b:
        return 1.0
    if not a or not b or matches == 0:
        return 0.0
    return 2.0 * matches / (len(a) + len(b))


def test_token_f1_matches_brute_force_oracle():
    rng = random.Random(99)
    vocab = ["red", "blue", "green", "apple", "tree", "7", "stone", "river", "wind", "lamp"]
    checked = 0
    for _ in range(1000):
        a = rng.choices(vocab, k=rng.randint(0, 8))
        b = rng.choices(vocab, k=rng.randint(0, 8))
        expected = brute_force_f1(a, b)
        got = token_f1(" ".join(a), " ".join(b))
        assert got == expected, (a, b)
        checked += 1
    assert checked == 1000


def test_exact_match_normalized():
    assert exact_match("real madrid", ["Real Madrid"]) == 1
    assert exact_match("Madrid", ["Real Madrid"]) == 0
    assert exact_match("The Colin Archer", ["Colin Archer"]) == 1


def test_exact_match_requires_golds():
    with pytest.raises(ValueError):
        exact_match("x", [])


def test_cover_exact_match_contiguous():
    assert cover_exact_match("he played for Real Madrid in 2012", ["Real Madrid"]) == 1
    assert cover_exact_match("Real Madrid", ["Real Madrid"]) == 1
    assert cover_exact_match("Madrid Real", ["Real Madrid"]) == 0


def test_em_implies_cover_em():
    rng = random.Random(17)
    words = ["alpha", "beta", "gamma", "delta", "five"]
    for _ in range(500):
        pred = " ".join(rng.choices(words, k=rng.randint(0, 5)))
        golds = [" ".join(rng.choices(words, k=rng.randint(0, 4))) for _ in range(rng.randint(1, 3))]
        if exact_match(pred, golds) == 1:
            assert cover_exact_match(pred, golds) == 1


def test_bigram_distance_identical():
    assert bigram_jaccard_distance("who won the cup", "who won the cup") == 0.0


def test_bigram_distance_disjoint():
    q1 = "who won the 2007 ballon d'or"
    q2 = "which club did kaka play for"
    assert bigram_jaccard_distance(q1, q2) == 1.0


def test_bigram_distance_partial_overlap():
    q = "who designed the polar ship"
    d = bigram_jaccard_distance(q, q + " fram")
    assert 0.0 < d < 1.0


def test_bigram_distance_short_queries_use_unigrams():
    assert bigram_jaccard_distance("fram", "fram") == 0.0
    assert bigram_jaccard_distance("fram", "nansen") == 1.0
    assert bigram_jaccard_distance("", "") == 0.0
    assert bigram_jaccard_distance("", "fram") == 1.0


def test_bigram_distance_symmetry_and_range():
    rng = random.Random(31)
    words = ["sail", "north", "pole", "crew", "ice", "drift"]
    for _ in range(300):
        a = " ".join(rng.choices(words, k=rng.randint(0, 5)))
        b = " ".join(rng.choices(words, k=rng.randint(0, 5)))
        d_ab, d_ba = bigram_jaccard_distance(a, b), bigram_jaccard_distance(b, a)
        assert d_ab == d_ba
        assert 0.0 <= d_ab <= 1.0
