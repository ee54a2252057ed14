"""Scripted-policy simulation harness over a toy multi-hop corpus.

Generates plan-structured rollouts without any model in the loop, so the
full score -> filter -> sample pipeline can be exercised end to end and the
anti-copy property of the thresholded plan reward can be demonstrated:

- ``faithful``     valid structure, think paraphrases each sub-question
                   (optionally padded to hit an exact alignment target),
                   queries from sub-questions, correct answer with
                   probability ``p_correct``.
- ``copy_hacker``  think blocks copy the sub-questions verbatim (alignment
                   exactly 1.0) and the answer is wrong.
- ``drifter``      each query drags along tokens sampled from previously
                   retrieved documents, so queries grow repetitive.
- ``malformed``    structural tag corruption (dangling closer, bracket-broken
                   opener, or unclosed answer); never passes the hard filter.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from itertools import cycle, islice

from .metrics import _tokens, token_f1
from .retrieval import DEFAULT_TOP_K, Bm25Index, CorpusDoc
from .rewards import (
    DEFAULT_ADVANTAGE_EPS,
    RewardConfig,
    composite_reward,
    group_advantages,
)
from .trajectory import RawRollout, parse_text

POLICY_TEMPLATES = ("faithful", "copy_hacker", "drifter", "malformed")

_FILLERS = (
    "meanwhile", "throughout", "records", "archive", "context", "review",
    "notes", "moreover", "likewise", "further", "overall", "summary",
    "evidence", "details", "specifics", "background", "history", "sources",
    "material", "aspects",
)

_GIVEN_NAMES = (
    "Varno", "Selda", "Tormund", "Quilla", "Brasco", "Yenna",
    "Oskil", "Marvett", "Dulcen", "Harlow", "Fenwick", "Zorina",
)
_SURNAMES = (
    "Kettridge", "Malvorn", "Ostrander", "Quenby", "Thessaly",
    "Vandrel", "Bramwell", "Corvale", "Dunmore", "Ellsworth",
)
_RELATIONS = (
    "mentor", "patron", "successor", "biographer",
    "cartographer", "navigator", "archivist", "translator",
)
_HOP_DEPTHS = (1, 2, 3, 4)


@dataclass(frozen=True)
class HopStep:
    sub_question: str
    doc_id: str
    answer: str

    def to_dict(self) -> dict:
        return {"sub_question": self.sub_question, "doc_id": self.doc_id, "answer": self.answer}

    @classmethod
    def from_dict(cls, data: dict) -> "HopStep":
        return cls(str(data["sub_question"]), str(data["doc_id"]), str(data["answer"]))


@dataclass(frozen=True)
class QAItem:
    id: str
    question: str
    golden_answers: tuple[str, ...]
    hop_chain: tuple[HopStep, ...]

    def __post_init__(self):
        if not 1 <= len(self.hop_chain) <= 4:
            raise ValueError(f"item {self.id!r}: hop_chain length must be in [1, 4]")
        if not self.golden_answers:
            raise ValueError(f"item {self.id!r}: golden_answers must be non-empty")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "question": self.question,
            "golden_answers": list(self.golden_answers),
            "hop_chain": [h.to_dict() for h in self.hop_chain],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QAItem":
        return cls(
            id=str(data["id"]),
            question=str(data["question"]),
            golden_answers=tuple(str(g) for g in data["golden_answers"]),
            hop_chain=tuple(HopStep.from_dict(h) for h in data["hop_chain"]),
        )


@dataclass(frozen=True)
class SimPolicy:
    """A named rollout template plus its determinism seed and knobs."""

    template: str
    noise_seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.template not in POLICY_TEMPLATES:
            raise ValueError(f"unknown policy template {self.template!r}")


def _rng_for(policy: SimPolicy, item: QAItem) -> random.Random:
    return random.Random(f"{policy.noise_seed}:{policy.template}:{item.id}")


def _wrong_answer(golds: tuple[str, ...] | list[str]) -> str:
    """A deterministic answer with zero token overlap against every gold."""
    i = 0
    while True:
        candidate = "unresolved" if i == 0 else f"unresolved case {i}"
        if all(token_f1(candidate, g) == 0.0 for g in golds):
            return candidate
        i += 1


def _padded_think(sub_question: str, target_align: float) -> str:
    """Sub-question text padded with filler tokens to a target pair F1.

    Keeping every sub-question token and appending m disjoint fillers gives
    F1 = 2n / (2n + m); m is chosen so the ratio lands on the target.
    """
    sq_tokens = set(_tokens(sub_question))
    n = len(_tokens(sub_question))
    if n == 0 or not 0.0 < target_align <= 1.0:
        raise ValueError("target_align must be in (0, 1] and the sub-question non-empty")
    m = round(2 * n * (1.0 - target_align) / target_align)
    pool = [w for w in _FILLERS if w not in sq_tokens] or ["padword"]
    fillers = list(islice(cycle(pool), m))
    return f"{sub_question} {' '.join(fillers)}".strip()


def _document_block(docs: list[CorpusDoc]) -> str:
    return "\n".join(f"{d.title}: {d.text}" for d in docs)


def rollout(policy: SimPolicy, item: QAItem, index: Bm25Index) -> RawRollout:
    """Generate one scripted rollout for the item; byte-identical per seed."""
    rng = _rng_for(policy, item)
    params = policy.params
    top_k = int(params.get("top_k", DEFAULT_TOP_K))
    target_align = params.get("target_align")

    plan_lines = "\n".join(f"- {hop.sub_question}" for hop in item.hop_chain)
    parts = [f"<plan>\n{plan_lines}\n</plan>"]

    prev_query: str | None = None
    drift_pool: list[str] = []
    for hop in item.hop_chain:
        if policy.template == "copy_hacker":
            think = hop.sub_question
        elif target_align is not None:
            think = _padded_think(hop.sub_question, float(target_align))
        else:
            think = f"Now I need to work out: {hop.sub_question}"

        # The drifter never re-anchors to the next sub-question: each query is
        # the previous one plus a token dragged in from the prior documents.
        if policy.template == "drifter" and prev_query is not None and drift_pool:
            query = f"{prev_query} {rng.choice(drift_pool)}"
        else:
            query = hop.sub_question

        docs = index.retrieve(query, top_k)
        docs_text = _document_block(docs)

        if policy.template == "drifter":
            drift_pool = _tokens(docs_text)
        prev_query = query

        if policy.template == "copy_hacker":
            refine = "From the documents, the answer is clear."
        else:
            refine = f"The answer to this step is {hop.answer}."

        parts.append(f"<think>{think}</think>")
        parts.append(f"<search>{query}</search>")
        parts.append(f"<documents>{docs_text}</documents>")
        parts.append(f"<refine>{refine}</refine>")

    if policy.template == "faithful":
        p_correct = float(params.get("p_correct", 1.0))
        answer = item.golden_answers[0] if rng.random() < p_correct else _wrong_answer(item.golden_answers)
    else:
        answer = _wrong_answer(item.golden_answers)
    parts.append(f"<answer>{answer}</answer>")

    text = "\n".join(parts)
    if policy.template == "malformed":
        text = _corrupt(text, rng)

    return RawRollout(
        id=f"{item.id}:{policy.template}:{policy.noise_seed}",
        question=item.question,
        golden_answers=list(item.golden_answers),
        output_text=text,
    )


def _corrupt(text: str, rng: random.Random) -> str:
    """Inject tag corruption that always voids the format conditions."""
    mode = rng.choice(("dangling_close", "broken_refine", "unclosed_answer"))
    if mode == "dangling_close":
        return text.replace("</plan>", "</plan>\n</think>", 1)
    if mode == "broken_refine":
        return text.replace("<refine>", "<think]", 1)
    return text.replace("</answer>", "", 1)


# ---------------------------------------------------------------------------
# Fixture construction


_REFERENCE_DOCS = (
    CorpusDoc(
        "ref-nansen",
        "Fridtjof Nansen",
        "Fridtjof Nansen led the team that made the first crossing of the "
        "Greenland interior in 1888 and went on to explore the Arctic and "
        "Antarctic regions.",
    ),
    CorpusDoc(
        "ref-fram",
        "Fram",
        "The ship Fram was used in expeditions of the Arctic and Antarctic "
        "regions by the Norwegian team leader Fridtjof Nansen.",
    ),
    CorpusDoc(
        "ref-archer",
        "Colin Archer",
        "The Fram was designed and built by the shipwright Colin Archer for "
        "the 1893 Arctic expedition of Fridtjof Nansen.",
    ),
)

_REFERENCE_ITEM = QAItem(
    id="ref-ship-designer",
    question=(
        "Who designed and built the ship that was used by the team leader "
        "that first crossed the Greenland interior to explore the Arctic and Antarctic?"
    ),
    golden_answers=("Colin Archer",),
    hop_chain=(
        HopStep(
            "Identify the team leader who first crossed the Greenland interior "
            "to explore the Arctic and Antarctic.",
            "ref-nansen",
            "Fridtjof Nansen",
        ),
        HopStep("Determine the name of the ship used by this team leader.", "ref-fram", "Fram"),
        HopStep("Find out who designed and built this ship.", "ref-archer", "Colin Archer"),
    ),
)


def reference_item() -> tuple[QAItem, tuple[CorpusDoc, ...]]:
    """The hand-authored three-hop item and its supporting documents."""
    return _REFERENCE_ITEM, _REFERENCE_DOCS


class _NamePool:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.used: set[str] = set()

    def fresh(self) -> str:
        for _ in range(64):
            name = f"{self.rng.choice(_GIVEN_NAMES)} {self.rng.choice(_SURNAMES)}"
            if name not in self.used:
                self.used.add(name)
                return name
        name = f"{self.rng.choice(_GIVEN_NAMES)} {self.rng.choice(_SURNAMES)} {len(self.used)}"
        self.used.add(name)
        return name


def build_fixture(
    seed: int, n_items: int, corpus_size: int
) -> tuple[list[CorpusDoc], list[QAItem]]:
    """Deterministic toy corpus and QA items with hop depths cycling 1-4.

    ``items[0]`` is always the hand-authored reference item; the corpus is
    padded with filler documents up to ``corpus_size`` (or the number of
    supporting documents, whichever is larger).
    """
    if n_items < 1 or corpus_size < 1:
        raise ValueError("n_items and corpus_size must be >= 1")
    rng = random.Random(seed)
    names = _NamePool(rng)
    docs: list[CorpusDoc] = list(_REFERENCE_DOCS)
    items: list[QAItem] = [_REFERENCE_ITEM]

    doc_counter = 0
    for i in range(n_items - 1):
        depth = _HOP_DEPTHS[i % len(_HOP_DEPTHS)]
        chain_entities = [names.fresh() for _ in range(depth + 1)]
        relations = [rng.choice(_RELATIONS) for _ in range(depth)]
        hops = []
        for k in range(depth):
            subject, obj = chain_entities[k], chain_entities[k + 1]
            doc_id = f"doc-{doc_counter:04d}"
            doc_counter += 1
            docs.append(
                CorpusDoc(
                    doc_id,
                    subject,
                    f"{subject} appears throughout the provincial archive with a "
                    f"well documented circle. The {relations[k]} of {subject} is "
                    f"{obj}. Chroniclers noted that {subject} kept extensive "
                    f"correspondence, and several letters survive in the regional "
                    f"collection.",
                )
            )
            hops.append(
                HopStep(f"Identify the {relations[k]} of {subject}.", doc_id, obj)
            )
        question = chain_entities[0]
        phrase = f"{question}"
        for rel in relations:
            phrase = f"the {rel} of {phrase}"
        items.append(
            QAItem(
                id=f"item-{i:04d}",
                question=f"Who is {phrase}?",
                golden_answers=(chain_entities[-1],),
                hop_chain=tuple(hops),
            )
        )

    filler_needed = max(corpus_size - len(docs), 0)
    for i in range(filler_needed):
        docs.append(
            CorpusDoc(
                f"fill-{i:04d}",
                f"Provincial ledger volume {i + 1}",
                f"Provincial ledger volume {i + 1} lists deliveries of grain and "
                f"timber along the river routes, with tolls, tonnage, and seasonal "
                f"water levels noted for every landing stage.",
            )
        )
    return docs, items


# ---------------------------------------------------------------------------
# Reward-hacking demonstration


def hacking_demo(
    items: list[QAItem],
    index: Bm25Index,
    cfg: RewardConfig | None = None,
    seed: int = 0,
    eps: float = DEFAULT_ADVANTAGE_EPS,
) -> dict:
    """Compare thresholded vs raw plan rewards on copy-hacker rollouts.

    For every item, a verbatim-copy rollout (alignment 1.0) and a faithful
    but wrong-answer rollout (alignment ~0.4) are scored twice: with the
    thresholded plan reward and with the raw alignment used directly.  The
    raw variant pays the copy hacker a strictly larger auxiliary reward; the
    thresholded variant ties them.  A mixed five-rollout group shows the
    advantage argmax landing on the answer-correct rollout.
    """
    if not items:
        raise ValueError("need at least one item")
    cfg = cfg or RewardConfig()

    per_item = []
    for item in items:
        variants = [
            SimPolicy("faithful", noise_seed=seed),
            SimPolicy("copy_hacker", noise_seed=seed),
            SimPolicy("faithful", noise_seed=seed + 1, params={"target_align": 0.4, "p_correct": 0.0}),
            SimPolicy("drifter", noise_seed=seed),
            SimPolicy("malformed", noise_seed=seed),
        ]
        rollouts = [rollout(p, item, index) for p in variants]
        breakdowns = [
            composite_reward(parse_text(r.output_text, "lenient"), list(item.golden_answers), cfg)
            for r in rollouts
        ]
        copy_bd, faithful_bd = breakdowns[1], breakdowns[2]

        def raw_aux(bd):
            return cfg.lambda_fmt * bd.r_fmt + cfg.lambda_plan * bd.s_align

        thresholded = {
            "copy_hacker": copy_bd.r_aux,
            "faithful": faithful_bd.r_aux,
            "gap": copy_bd.r_aux - faithful_bd.r_aux,
        }
        raw = {
            "copy_hacker": raw_aux(copy_bd),
            "faithful": raw_aux(faithful_bd),
            "gap": raw_aux(copy_bd) - raw_aux(faithful_bd),
        }
        rewards = [bd.r_total for bd in breakdowns]
        advantages = group_advantages(rewards, eps)
        argmax_index = max(range(len(advantages)), key=advantages.__getitem__)
        per_item.append(
            {
                "id": item.id,
                "s_align": {"copy_hacker": copy_bd.s_align, "faithful": faithful_bd.s_align},
                "aux_thresholded": thresholded,
                "aux_raw": raw,
                "group": {
                    "templates": [p.template for p in variants],
                    "rewards": rewards,
                    "advantages": advantages,
                    "argmax_index": argmax_index,
                    "answer_correct_index": 0,
                },
            }
        )

    n = len(per_item)
    summary = {
        "mean_thresholded_gap": sum(e["aux_thresholded"]["gap"] for e in per_item) / n,
        "mean_raw_gap": sum(e["aux_raw"]["gap"] for e in per_item) / n,
        "argmax_on_correct_rate": sum(
            1 for e in per_item if e["group"]["argmax_index"] == e["group"]["answer_correct_index"]
        )
        / n,
    }
    return {
        "config": cfg.to_dict(),
        "seed": seed,
        "n_items": n,
        "items": per_item,
        "summary": summary,
    }
