"""Tagged-rollout data model: parsing, serialization, spans, and stats.

A rollout is plain text structured as::

    <plan> ordered sub-questions </plan>
    ( <think>..</think> <search>..</search> <documents>..</documents> <refine>..</refine> )+
    <answer> final answer </answer>

``parse_text``/``parse_trajectory`` turn such text into a ``Trajectory``.
Strict mode accepts exactly the grammar above (whitespace only between
blocks) and raises ``StructuralError`` at the first violation; lenient mode
never fails and instead records a ``Diagnostic`` for every deviation it can
recover from (missing think blocks, duplicated queries, dangling or
corrupted tags, stray content, ...).

The module also extracts loss-mask spans over injected document blocks,
computes per-component token-budget statistics, renders the plan prompt
template, and serializes trajectories back to canonical tagged text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources

TAG_NAMES = ("plan", "think", "search", "documents", "refine", "answer")
STEP_TAG_NAMES = ("think", "search", "documents", "refine")
# Tags the policy itself must emit; document blocks are injected by the
# retrieval environment and are exempt from the format conditions.
REQUIRED_TAG_NAMES = ("plan", "think", "search", "refine", "answer")

DEFAULT_PROMPT_VERSION = "v1"

_TOKEN_RE = re.compile(r"<(/?)(plan|think|search|documents|refine|answer)>")
# A tag name followed by something other than '>' or a letter, e.g. "<think]".
_MALFORMED_TAG_RE = re.compile(r"</?(?:plan|think|search|documents|refine|answer)(?=[^a-zA-Z>]|$)")
_PLAN_ITEM_RE = re.compile(r"^\s*(?:-\s*)?(?:[Ss]tep\s+\d+\s*:\s*)?(.*?)\s*$")

_STEP_RANK = {name: i for i, name in enumerate(STEP_TAG_NAMES)}


class StructuralError(ValueError):
    """Strict-mode parse failure, carrying the first violated rule and offset."""

    def __init__(self, rule: str, offset: int, message: str):
        super().__init__(f"{message} (rule={rule}, offset={offset})")
        self.rule = rule
        self.offset = offset
        self.message = message


class ConfigError(ValueError):
    """Missing or invalid configuration (e.g. an absent template asset)."""


@dataclass(frozen=True)
class BlockSpan:
    """Character interval of one tagged block; outer includes the tag markers."""

    start: int
    end: int
    inner_start: int
    inner_end: int

    @property
    def length(self) -> int:
        return self.end - self.start

    @property
    def inner_length(self) -> int:
        return self.inner_end - self.inner_start


@dataclass(frozen=True)
class TagBlock:
    """A well-formed (opener/closer paired) block found in the raw text."""

    name: str
    span: BlockSpan


@dataclass(frozen=True)
class Diagnostic:
    """One recoverable deviation found by the lenient parser."""

    rule: str
    offset: int
    excerpt: str
    tag: str | None = None

    def to_dict(self) -> dict:
        return {"rule": self.rule, "offset": self.offset, "excerpt": self.excerpt}


@dataclass(frozen=True)
class RawRollout:
    """One model generation for one question, as read from a dataset."""

    id: str
    question: str
    golden_answers: list[str]
    output_text: str

    def __post_init__(self):
        if not self.id:
            raise ValueError("rollout id must be non-empty")
        if not self.golden_answers:
            raise ValueError(f"rollout {self.id!r}: golden_answers must be non-empty")

    @classmethod
    def from_dict(cls, data: dict) -> "RawRollout":
        try:
            return cls(
                id=str(data["id"]),
                question=str(data.get("question", "")),
                golden_answers=[str(g) for g in data["golden_answers"]],
                output_text=str(data["output_text"]),
            )
        except KeyError as exc:
            raise ValueError(f"rollout record missing field {exc.args[0]!r}") from exc

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "question": self.question,
            "golden_answers": list(self.golden_answers),
            "output_text": self.output_text,
        }


@dataclass(frozen=True)
class PlanBlock:
    """The upfront decomposition: ordered sub-questions plus its raw span."""

    sub_questions: tuple[str, ...]
    raw_span: BlockSpan


@dataclass(frozen=True)
class StepSpans:
    think: BlockSpan | None = None
    search: BlockSpan | None = None
    documents: BlockSpan | None = None
    refine: BlockSpan | None = None


@dataclass(frozen=True)
class ExecutionStep:
    """One think -> search -> documents -> refine cycle.

    Content fields are ``None`` when the corresponding block is absent
    (possible only in lenient mode) and trimmed strings otherwise.
    """

    index: int
    think: str | None = None
    search_query: str | None = None
    documents: tuple[str, ...] = ()
    refine: str | None = None
    spans: StepSpans = field(default_factory=StepSpans)


@dataclass(frozen=True)
class Trajectory:
    """Parsed structured rollout plus its raw-text span map."""

    plan: PlanBlock | None
    steps: tuple[ExecutionStep, ...]
    answer: str | None
    answer_span: BlockSpan | None
    parse_diagnostics: tuple[Diagnostic, ...]
    source_text: str
    tag_blocks: tuple[TagBlock, ...] = ()

    @property
    def plan_length(self) -> int:
        return len(self.plan.sub_questions) if self.plan is not None else 0

    @property
    def num_steps(self) -> int:
        return len(self.steps)

    @property
    def search_call_count(self) -> int:
        return sum(1 for b in self.tag_blocks if b.name == "search")

    def search_queries(self) -> list[str]:
        return [s.search_query for s in self.steps if s.search_query is not None]

    def structure(self) -> dict:
        """Span-free structural view used for round-trip equality checks."""
        return {
            "plan": list(self.plan.sub_questions) if self.plan is not None else None,
            "steps": [
                (
                    s.think or "",
                    s.search_query or "",
                    "\n".join(s.documents),
                    s.refine or "",
                )
                for s in self.steps
            ],
            "answer": self.answer,
        }


@dataclass(frozen=True)
class MaskSpans:
    """Partition of the raw text into document spans and generated spans."""

    document_spans: tuple[tuple[int, int], ...]
    generated_spans: tuple[tuple[int, int], ...]

    def validate(self, text_length: int) -> None:
        """Check the two span lists partition [0, text_length) exactly."""
        merged = sorted(
            [(s, e, "doc") for s, e in self.document_spans]
            + [(s, e, "gen") for s, e in self.generated_spans]
        )
        cursor = 0
        for s, e, _ in merged:
            if s != cursor:
                raise ValueError(f"mask spans overlap or leave a gap at offset {cursor}")
            if e < s:
                raise ValueError(f"negative-length span ({s}, {e})")
            cursor = e
        if cursor != text_length:
            raise ValueError(f"mask spans cover {cursor} of {text_length} characters")


@dataclass(frozen=True)
class _Token:
    kind: str  # "open" | "close"
    name: str
    start: int
    end: int


def _scan_tokens(text: str) -> list[_Token]:
    return [
        _Token("close" if m.group(1) else "open", m.group(2), m.start(), m.end())
        for m in _TOKEN_RE.finditer(text)
    ]


def _excerpt(text: str, offset: int, width: int = 40) -> str:
    return text[offset : offset + width].replace("\n", " ")


def _first_non_ws(text: str, start: int, end: int) -> int | None:
    for i in range(start, end):
        if not text[i].isspace():
            return i
    return None


def parse_plan_items(plan_text: str) -> list[str]:
    """Split a plan block's interior into ordered sub-question strings.

    Accepts "- item", "Step k: item", and "- Step k: item" line forms; the
    markers are stripped and empty lines dropped.
    """
    items = []
    for line in plan_text.splitlines():
        m = _PLAN_ITEM_RE.match(line)
        item = m.group(1) if m else line.strip()
        if item:
            items.append(item)
    return items


# ---------------------------------------------------------------------------
# Lenient parsing


def _pair_blocks(
    text: str, tokens: list[_Token]
) -> tuple[list[TagBlock], list[Diagnostic], list[tuple[int, int]]]:
    """Pair openers with closers left to right, diagnosing unmatched tags.

    Also returns the spans of dangling closers so the gap scanner does not
    re-flag them as stray content.
    """
    blocks: list[TagBlock] = []
    diags: list[Diagnostic] = []
    dangling: list[tuple[int, int]] = []
    open_tok: _Token | None = None

    def close_implicitly(at: int) -> None:
        nonlocal open_tok
        diags.append(
            Diagnostic("unclosed_tag", open_tok.start, f"<{open_tok.name}>", tag=open_tok.name)
        )
        blocks.append(
            TagBlock(open_tok.name, BlockSpan(open_tok.start, at, open_tok.end, at))
        )
        open_tok = None

    def mark_dangling(tok: _Token) -> None:
        diags.append(Diagnostic("dangling_close_tag", tok.start, f"</{tok.name}>", tag=tok.name))
        dangling.append((tok.start, tok.end))

    for tok in tokens:
        if tok.kind == "open":
            if open_tok is not None:
                close_implicitly(tok.start)
            open_tok = tok
        elif open_tok is None:
            mark_dangling(tok)
        elif open_tok.name == tok.name:
            blocks.append(
                TagBlock(tok.name, BlockSpan(open_tok.start, tok.end, open_tok.end, tok.start))
            )
            open_tok = None
        else:
            close_implicitly(tok.start)
            mark_dangling(tok)
    if open_tok is not None:
        close_implicitly(len(text))
    return blocks, diags, dangling


def _scan_gaps(
    text: str, blocks: list[TagBlock], consumed: list[tuple[int, int]]
) -> list[Diagnostic]:
    """Diagnose structure-level content that is not inside any block."""
    diags = []
    covered = sorted(
        [(b.span.start, b.span.end) for b in blocks] + list(consumed)
    )
    cursor = 0
    gaps = []
    for start, end in covered:
        if start > cursor:
            gaps.append((cursor, start))
        cursor = max(cursor, end)
    if cursor < len(text):
        gaps.append((cursor, len(text)))
    for start, end in gaps:
        gap_text = text[start:end]
        malformed = list(_MALFORMED_TAG_RE.finditer(gap_text))
        if malformed:
            for m in malformed:
                diags.append(
                    Diagnostic("malformed_tag", start + m.start(), _excerpt(text, start + m.start()))
                )
        elif _first_non_ws(text, start, end) is not None:
            at = _first_non_ws(text, start, end)
            diags.append(Diagnostic("stray_content", at, _excerpt(text, at)))
    return diags


def _block_content(text: str, block: TagBlock) -> str:
    return text[block.span.inner_start : block.span.inner_end].strip()


def _assemble_steps(
    text: str, exec_blocks: list[TagBlock]
) -> list[ExecutionStep]:
    grouped: list[dict[str, TagBlock]] = []
    current: dict[str, TagBlock] = {}
    last_rank = -1
    for b in exec_blocks:
        rank = _STEP_RANK[b.name]
        if b.name in current or rank < last_rank:
            grouped.append(current)
            current = {}
        current[b.name] = b
        last_rank = rank
    if current:
        grouped.append(current)

    steps = []
    for i, parts in enumerate(grouped, start=1):
        think = parts.get("think")
        search = parts.get("search")
        documents = parts.get("documents")
        refine = parts.get("refine")
        docs_text = _block_content(text, documents) if documents else ""
        steps.append(
            ExecutionStep(
                index=i,
                think=_block_content(text, think) if think else None,
                search_query=_block_content(text, search) if search else None,
                documents=(docs_text,) if docs_text else (),
                refine=_block_content(text, refine) if refine else None,
                spans=StepSpans(
                    think=think.span if think else None,
                    search=search.span if search else None,
                    documents=documents.span if documents else None,
                    refine=refine.span if refine else None,
                ),
            )
        )
    return steps


def _parse_lenient(text: str) -> Trajectory:
    tokens = _scan_tokens(text)
    blocks, diags, dangling = _pair_blocks(text, tokens)
    diags.extend(_scan_gaps(text, blocks, dangling))

    plan_indices = [i for i, b in enumerate(blocks) if b.name == "plan"]
    answer_indices = [i for i, b in enumerate(blocks) if b.name == "answer"]
    plan_i = plan_indices[0] if plan_indices else None
    answer_i = answer_indices[0] if answer_indices else None

    plan = None
    if plan_i is not None:
        block = blocks[plan_i]
        items = parse_plan_items(text[block.span.inner_start : block.span.inner_end])
        plan = PlanBlock(sub_questions=tuple(items), raw_span=block.span)
        if not items:
            diags.append(Diagnostic("empty_plan", block.span.start, _excerpt(text, block.span.start)))
        for i in plan_indices[1:]:
            diags.append(
                Diagnostic("multiple_plan", blocks[i].span.start, _excerpt(text, blocks[i].span.start))
            )
    else:
        diags.append(Diagnostic("no_plan", 0, _excerpt(text, 0)))

    answer = None
    answer_span = None
    if answer_i is not None:
        answer = _block_content(text, blocks[answer_i])
        answer_span = blocks[answer_i].span
        for i in answer_indices[1:]:
            diags.append(
                Diagnostic("multiple_answer", blocks[i].span.start, _excerpt(text, blocks[i].span.start))
            )
    else:
        diags.append(Diagnostic("no_answer", len(text), ""))

    exec_blocks = []
    for i, b in enumerate(blocks):
        if b.name not in _STEP_RANK:
            continue
        if plan_i is not None and i < plan_i:
            diags.append(Diagnostic("block_before_plan", b.span.start, f"<{b.name}>", tag=b.name))
            continue
        if answer_i is not None and i > answer_i:
            diags.append(Diagnostic("content_after_answer", b.span.start, f"<{b.name}>", tag=b.name))
            continue
        exec_blocks.append(b)

    # Condition checks shared with the format reward: every search must sit
    # directly (whitespace apart) after a think block, and repeated queries
    # are flagged.
    seen_queries: set[str] = set()
    for i, b in enumerate(blocks):
        if b.name != "search":
            continue
        prev = blocks[i - 1] if i > 0 else None
        preceded = (
            prev is not None
            and prev.name == "think"
            and _first_non_ws(text, prev.span.end, b.span.start) is None
        )
        if not preceded:
            diags.append(Diagnostic("missing_think", b.span.start, _excerpt(text, b.span.start)))
        query = _block_content(text, b)
        if query in seen_queries:
            diags.append(Diagnostic("duplicate_query", b.span.start, _excerpt(text, b.span.start)))
        seen_queries.add(query)

    steps = _assemble_steps(text, exec_blocks)

    if plan is not None and plan.sub_questions and len(steps) != len(plan.sub_questions):
        diags.append(
            Diagnostic(
                "step_count_mismatch",
                plan.raw_span.start,
                f"plan lists {len(plan.sub_questions)} sub-questions, found {len(steps)} steps",
            )
        )

    diags.sort(key=lambda d: d.offset)
    return Trajectory(
        plan=plan,
        steps=tuple(steps),
        answer=answer,
        answer_span=answer_span,
        parse_diagnostics=tuple(diags),
        source_text=text,
        tag_blocks=tuple(blocks),
    )


# ---------------------------------------------------------------------------
# Strict parsing


def _parse_strict(text: str) -> Trajectory:
    tokens = _scan_tokens(text)
    cursor = 0
    ti = 0

    def check_gap(until: int) -> None:
        at = _first_non_ws(text, cursor, until)
        if at is not None:
            raise StructuralError(
                "stray_content", at, f"non-whitespace content between blocks: {_excerpt(text, at)!r}"
            )

    def peek() -> _Token | None:
        return tokens[ti] if ti < len(tokens) else None

    def expect_open(name: str, rule: str, message: str) -> _Token:
        nonlocal cursor, ti
        tok = peek()
        if tok is None:
            check_gap(len(text))
            raise StructuralError(rule, len(text), message)
        check_gap(tok.start)
        if tok.kind != "open" or tok.name != name:
            raise StructuralError(rule, tok.start, message)
        ti += 1
        cursor = tok.end
        return tok

    def expect_close(name: str, opener: _Token) -> _Token:
        nonlocal cursor, ti
        tok = peek()
        if tok is None or tok.kind != "close" or tok.name != name:
            offset = opener.start if tok is None else tok.start
            raise StructuralError("unclosed_tag", offset, f"unclosed <{name}> block")
        ti += 1
        cursor = tok.end
        return tok

    def read_block(name: str, rule: str, message: str) -> TagBlock:
        opener = expect_open(name, rule, message)
        closer = expect_close(name, opener)
        return TagBlock(name, BlockSpan(opener.start, closer.end, opener.end, closer.start))

    if not any(t.kind == "open" and t.name == "plan" for t in tokens):
        raise StructuralError("no_plan", 0, "no <plan> block")
    plan_block = read_block("plan", "plan_not_first", "content before <plan> block")
    items = parse_plan_items(text[plan_block.span.inner_start : plan_block.span.inner_end])
    if not items:
        raise StructuralError("empty_plan", plan_block.span.start, "plan block lists no sub-questions")
    plan = PlanBlock(sub_questions=tuple(items), raw_span=plan_block.span)

    steps: list[ExecutionStep] = []
    blocks: list[TagBlock] = [plan_block]
    while True:
        tok = peek()
        if tok is None:
            check_gap(len(text))
            raise StructuralError("no_answer", len(text), "no <answer> block")
        check_gap(tok.start)
        if tok.kind == "open" and tok.name == "answer":
            if not steps:
                raise StructuralError(
                    "no_execution_steps", tok.start, "no execution cycle before <answer>"
                )
            break
        think = read_block("think", "broken_cycle", "expected <think> to start an execution cycle")
        search = read_block("search", "broken_cycle", "expected <search> after </think>")
        documents = read_block("documents", "broken_cycle", "expected <documents> after </search>")
        if _first_non_ws(text, documents.span.inner_start, documents.span.inner_end) is None:
            raise StructuralError("empty_documents", documents.span.start, "empty <documents> block")
        refine = read_block("refine", "broken_cycle", "expected <refine> after </documents>")
        blocks.extend([think, search, documents, refine])
        steps.append(
            ExecutionStep(
                index=len(steps) + 1,
                think=_block_content(text, think),
                search_query=_block_content(text, search),
                documents=(_block_content(text, documents),),
                refine=_block_content(text, refine),
                spans=StepSpans(
                    think=think.span,
                    search=search.span,
                    documents=documents.span,
                    refine=refine.span,
                ),
            )
        )

    answer_block = read_block("answer", "no_answer", "no <answer> block")
    blocks.append(answer_block)
    tok = peek()
    if tok is not None:
        raise StructuralError("content_after_answer", tok.start, "content after </answer>")
    at = _first_non_ws(text, cursor, len(text))
    if at is not None:
        raise StructuralError("content_after_answer", at, "content after </answer>")

    return Trajectory(
        plan=plan,
        steps=tuple(steps),
        answer=_block_content(text, answer_block),
        answer_span=answer_block.span,
        parse_diagnostics=(),
        source_text=text,
        tag_blocks=tuple(blocks),
    )


def parse_text(text: str, mode: str = "strict") -> Trajectory:
    """Parse raw tagged text into a Trajectory; see module docstring."""
    if mode == "strict":
        return _parse_strict(text)
    if mode == "lenient":
        return _parse_lenient(text)
    raise ValueError(f"unknown parse mode {mode!r}")


def parse_trajectory(raw: RawRollout, mode: str = "strict") -> Trajectory:
    return parse_text(raw.output_text, mode=mode)


# ---------------------------------------------------------------------------
# Serialization


def serialize_trajectory(traj: Trajectory) -> str:
    """Emit canonical tagged text; re-parsing yields an equal structure."""
    parts = []
    if traj.plan is not None:
        lines = "\n".join(f"- {q}" for q in traj.plan.sub_questions)
        parts.append(f"<plan>\n{lines}\n</plan>" if lines else "<plan>\n</plan>")
    for step in traj.steps:
        if step.think is not None:
            parts.append(f"<think>{step.think}</think>")
        if step.search_query is not None:
            parts.append(f"<search>{step.search_query}</search>")
        if step.documents:
            parts.append(f"<documents>{chr(10).join(step.documents)}</documents>")
        if step.refine is not None:
            parts.append(f"<refine>{step.refine}</refine>")
    if traj.answer is not None:
        parts.append(f"<answer>{traj.answer}</answer>")
    return "\n".join(parts)


# ---------------------------------------------------------------------------
# Mask spans and token budget


def extract_mask_spans(traj: Trajectory, raw: RawRollout | None = None) -> MaskSpans:
    """Partition the raw text into document spans (tags included) and the rest."""
    text = raw.output_text if raw is not None else traj.source_text
    if text != traj.source_text:
        raise ValueError("trajectory was not parsed from the given rollout")
    doc_spans = sorted(
        (b.span.start, b.span.end) for b in traj.tag_blocks if b.name == "documents"
    )
    generated = []
    cursor = 0
    for start, end in doc_spans:
        if start > cursor:
            generated.append((cursor, start))
        cursor = end
    if cursor < len(text):
        generated.append((cursor, len(text)))
    spans = MaskSpans(document_spans=tuple(doc_spans), generated_spans=tuple(generated))
    spans.validate(len(text))
    return spans


_BUDGET_COMPONENTS = ("plan", "think", "search", "documents", "refine", "answer", "other")


def token_budget_stats(trajs) -> dict[str, dict[str, float]]:
    """Fraction of whitespace-token mass per component, over two views.

    ``full`` covers the entire raw text; ``generated`` excludes the injected
    document blocks.  Within each view the fractions sum to one.  Accepts any
    iterable of trajectories and aggregates in a single streaming pass.
    """
    counts = {name: 0 for name in _BUDGET_COMPONENTS}
    n_seen = 0
    for traj in trajs:
        n_seen += 1
        text = traj.source_text
        cursor = 0
        for block in traj.tag_blocks:
            if block.span.start > cursor:
                counts["other"] += len(text[cursor : block.span.start].split())
            counts[block.name] += len(text[block.span.start : block.span.end].split())
            cursor = block.span.end
        if cursor < len(text):
            counts["other"] += len(text[cursor:].split())
    if n_seen == 0:
        raise ValueError("empty corpus")

    total = sum(counts.values())
    if total == 0:
        raise ValueError("empty corpus")
    generated_total = total - counts["documents"]
    full = {name: counts[name] / total for name in _BUDGET_COMPONENTS}
    generated = {
        name: (counts[name] / generated_total if name != "documents" and generated_total else 0.0)
        for name in _BUDGET_COMPONENTS
    }
    return {"full": full, "generated": generated}


# ---------------------------------------------------------------------------
# Prompt template


def render_prompt(question: str, version: str = DEFAULT_PROMPT_VERSION) -> str:
    """Instantiate the shipped plan prompt template with the question."""
    if not question:
        raise ValueError("question must be non-empty")
    asset = resources.files("plsearch").joinpath("assets", f"plan_prompt_{version}.txt")
    try:
        template = asset.read_text(encoding="utf-8")
    except (FileNotFoundError, OSError) as exc:
        raise ConfigError(f"prompt template asset for version {version!r} not found") from exc
    return template.replace("{question}", question)
