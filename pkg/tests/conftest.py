"""Shared fixture builders for the test suite."""

from __future__ import annotations

import random

from plsearch.trajectory import RawRollout


def canonical_text(
    subqs: list[str],
    steps: list[tuple[str, str, str, str]],
    answer: str | None = None,
) -> str:
    """Build canonical tagged text from (think, search, documents, refine) steps."""
    parts = ["<plan>\n" + "\n".join(f"- {q}" for q in subqs) + "\n</plan>"]
    for think, search, docs, refine in steps:
        parts.append(f"<think>{think}</think>")
        parts.append(f"<search>{search}</search>")
        parts.append(f"<documents>{docs}</documents>")
        parts.append(f"<refine>{refine}</refine>")
    if answer is not None:
        parts.append(f"<answer>{answer}</answer>")
    return "\n".join(parts)


def simple_rollout(
    rid: str,
    n_steps: int = 2,
    answer: str = "target entity",
    gold: str = "target entity",
    question: str = "what is the target?",
) -> RawRollout:
    subqs = [f"resolve part {k} of the question" for k in range(1, n_steps + 1)]
    steps = [
        (
            f"working on part {k} of the question now",
            f"lookup part {k} details variant {rid}",
            f"passage {k}: the records describe part {k} at length with several names",
            f"part {k} resolved",
        )
        for k in range(1, n_steps + 1)
    ]
    return RawRollout(
        id=rid,
        question=question,
        golden_answers=[gold],
        output_text=canonical_text(subqs, steps, answer),
    )


def planted_corpus() -> tuple[list[RawRollout], set[str]]:
    """100 rollouts, exactly 40 of them structurally valid and cover-EM correct."""
    rollouts: list[RawRollout] = []
    planted: set[str] = set()
    for i in range(40):
        rid = f"ok-{i:03d}"
        rollouts.append(simple_rollout(rid, n_steps=1 + i % 4, answer=f"entity {i}", gold=f"entity {i}"))
        planted.add(rid)
    for i in range(20):  # valid format, wrong answer
        rollouts.append(
            simple_rollout(f"bad-answer-{i:03d}", n_steps=1 + i % 3, answer="mistaken value", gold=f"entity {i}")
        )
    for i in range(20):  # think blocks stripped: strict failure
        base = simple_rollout(f"bad-think-{i:03d}", n_steps=2, answer=f"entity {i}", gold=f"entity {i}")
        text = "\n".join(
            line for line in base.output_text.splitlines() if not line.startswith("<think>")
        )
        rollouts.append(
            RawRollout(base.id, base.question, base.golden_answers, text)
        )
    for i in range(10):  # dangling closer: strict failure
        base = simple_rollout(f"bad-dangling-{i:03d}", answer=f"entity {i}", gold=f"entity {i}")
        rollouts.append(
            RawRollout(
                base.id,
                base.question,
                base.golden_answers,
                base.output_text.replace("</plan>", "</plan>\n</think>", 1),
            )
        )
    for i in range(10):  # no answer block: strict failure
        base = simple_rollout(f"bad-noanswer-{i:03d}", gold=f"entity {i}")
        text = base.output_text.rsplit("<answer>", 1)[0]
        rollouts.append(RawRollout(base.id, base.question, base.golden_answers, text))
    assert len(rollouts) == 100
    return rollouts, planted


_WORDS = (
    "river", "stone", "lamp", "orchard", "signal", "harbor", "copper",
    "meadow", "falcon", "ledger", "violet", "marble", "thicket", "beacon",
)


def random_valid_rollout(rng: random.Random, rid: str) -> RawRollout:
    """A random strictly-valid rollout; half the time the answer overlaps gold."""
    gold = " ".join(rng.sample(_WORDS, rng.randint(1, 3)))
    n = rng.randint(1, 4)
    subqs = [" ".join(rng.sample(_WORDS, rng.randint(2, 5))) for _ in range(n)]
    steps = [
        (
            " ".join(rng.sample(_WORDS, rng.randint(1, 6))),
            " ".join(rng.sample(_WORDS, rng.randint(1, 4))),
            " ".join(rng.choices(_WORDS, k=rng.randint(3, 12))),
            " ".join(rng.sample(_WORDS, rng.randint(1, 4))),
        )
        for _ in range(n)
    ]
    if rng.random() < 0.5:
        answer = gold if rng.random() < 0.6 else gold + " " + rng.choice(_WORDS)
    else:
        answer = "zzz" + str(rng.randint(0, 9))  # disjoint from the vocabulary
    return RawRollout(
        id=rid,
        question="q",
        golden_answers=[gold],
        output_text=canonical_text(subqs, steps, answer),
    )
