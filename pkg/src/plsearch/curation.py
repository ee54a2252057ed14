"""Quality-aware filtering pipeline: hard filters, soft scores, bucket sampling.

Stages: (i) hard filter on strict structural validity, (ii) hard filter on
answer correctness via cover exact match, (iii) soft quality score combining
log-saturated search rounds, mean pairwise query diversity, and refine
density, (iv) deterministic bucket sampling over search-step counts, then
SFT export with document loss-mask spans.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

from .metrics import bigram_jaccard_distance, cover_exact_match
from .trajectory import (
    RawRollout,
    StructuralError,
    Trajectory,
    extract_mask_spans,
    parse_text,
    render_prompt,
    serialize_trajectory,
)

BUCKET_ORDER = ("1", "2", "3", "4+")
DEFAULT_BUCKET_RATIOS = {"1": 0.20, "2": 0.50, "3": 0.20, "4+": 0.10}
_RATIO_TOLERANCE = 1e-9


@dataclass(frozen=True)
class QualityWeights:
    """Weights of the three soft quality signals; must sum to one."""

    w_rounds: float = 0.40
    w_diversity: float = 0.35
    w_refine: float = 0.25
    rounds_saturation: int = 4

    def __post_init__(self):
        for name in ("w_rounds", "w_diversity", "w_refine"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        total = self.w_rounds + self.w_diversity + self.w_refine
        if abs(total - 1.0) > _RATIO_TOLERANCE:
            raise ValueError(f"quality weights must sum to 1, got {total}")
        if self.rounds_saturation < 1:
            raise ValueError("rounds_saturation must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "QualityWeights":
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "w_rounds": self.w_rounds,
            "w_diversity": self.w_diversity,
            "w_refine": self.w_refine,
            "rounds_saturation": self.rounds_saturation,
        }


@dataclass(frozen=True)
class QualityScore:
    s_rounds: float
    s_diversity: float
    s_refine: float
    total: float

    def to_dict(self) -> dict:
        return {
            "s_rounds": self.s_rounds,
            "s_diversity": self.s_diversity,
            "s_refine": self.s_refine,
            "total": self.total,
        }


@dataclass(frozen=True)
class SamplerConfig:
    """Bucket sampling targets; ratios are keyed by search-step count."""

    target_count: int
    bucket_ratios: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_BUCKET_RATIOS))
    seed: int = 0

    def __post_init__(self):
        if self.target_count <= 0:
            raise ValueError("target_count must be positive")
        normalized = {str(k): float(v) for k, v in self.bucket_ratios.items()}
        if set(normalized) != set(BUCKET_ORDER):
            raise ValueError(f"bucket_ratios must have exactly the keys {BUCKET_ORDER}")
        if any(v < 0 for v in normalized.values()):
            raise ValueError("bucket ratios must be non-negative")
        total = sum(normalized.values())
        if abs(total - 1.0) > _RATIO_TOLERANCE:
            raise ValueError(f"bucket ratios must sum to 1, got {total}")
        object.__setattr__(self, "bucket_ratios", normalized)

    @classmethod
    def from_dict(cls, data: dict) -> "SamplerConfig":
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "target_count": self.target_count,
            "bucket_ratios": dict(self.bucket_ratios),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class HardVerdict:
    format_ok: bool
    cover_em_ok: bool


@dataclass
class CurationRecord:
    """One rollout moving through the pipeline."""

    raw: RawRollout
    traj: Trajectory
    hard_verdict: HardVerdict
    quality: QualityScore | None = None
    bucket: str | None = None
    selected: bool = False


def bucket_key(n_search: int) -> str:
    if n_search >= 4:
        return "4+"
    return str(max(n_search, 1))


def hard_filter(raw: RawRollout) -> HardVerdict:
    """Strict grammar validity and cover-EM correctness of the answer."""
    try:
        traj = parse_text(raw.output_text, "strict")
    except StructuralError:
        return HardVerdict(format_ok=False, cover_em_ok=False)
    cover = cover_exact_match(traj.answer or "", raw.golden_answers) == 1
    return HardVerdict(format_ok=True, cover_em_ok=cover)


def quality_score(traj: Trajectory, weights: QualityWeights | None = None) -> QualityScore:
    """Weighted combination of search rounds, query diversity, refine density."""
    weights = weights or QualityWeights()
    queries = traj.search_queries()
    n_search = len(queries)

    sat = weights.rounds_saturation
    s_rounds = math.log1p(min(n_search, sat)) / math.log1p(sat)

    if len(queries) < 2:
        s_diversity = 0.0
    else:
        distances = [
            bigram_jaccard_distance(queries[i], queries[j])
            for i in range(len(queries))
            for j in range(i + 1, len(queries))
        ]
        s_diversity = sum(distances) / len(distances)

    refine_chars = sum(
        s.spans.refine.inner_length for s in traj.steps if s.spans.refine is not None
    )
    document_chars = sum(
        b.span.length for b in traj.tag_blocks if b.name == "documents"
    )
    generated_chars = len(traj.source_text) - document_chars
    s_refine = refine_chars / generated_chars if generated_chars > 0 else 0.0

    total = (
        weights.w_rounds * s_rounds
        + weights.w_diversity * s_diversity
        + weights.w_refine * s_refine
    )
    return QualityScore(s_rounds=s_rounds, s_diversity=s_diversity, s_refine=s_refine, total=total)


def evaluate_rollout(raw: RawRollout, weights: QualityWeights | None = None) -> CurationRecord:
    """Run hard filters and, for survivors, the soft quality score."""
    weights = weights or QualityWeights()
    try:
        traj = parse_text(raw.output_text, "strict")
        format_ok = True
    except StructuralError:
        traj = parse_text(raw.output_text, "lenient")
        format_ok = False
    cover_ok = format_ok and cover_exact_match(traj.answer or "", raw.golden_answers) == 1
    record = CurationRecord(
        raw=raw, traj=traj, hard_verdict=HardVerdict(format_ok=format_ok, cover_em_ok=cover_ok)
    )
    if format_ok and cover_ok:
        record.quality = quality_score(traj, weights)
        record.bucket = bucket_key(len(traj.search_queries()))
    return record


# ---------------------------------------------------------------------------
# Bucket sampling


def compute_quotas(target_count: int, ratios: dict[str, float]) -> dict[str, int]:
    """Largest-remainder rounding of target_count * ratio per bucket."""
    order = [b for b in BUCKET_ORDER if b in ratios]
    shares = {b: target_count * ratios[b] for b in order}
    quotas = {b: int(math.floor(shares[b])) for b in order}
    leftover = target_count - sum(quotas.values())
    by_remainder = sorted(order, key=lambda b: (-(shares[b] - quotas[b]), order.index(b)))
    for b in by_remainder[:leftover]:
        quotas[b] += 1
    return quotas


def _allocate_proportional(amount: int, supply: dict[str, int]) -> dict[str, int]:
    """Distribute amount over buckets proportionally to supply, capped by it."""
    order = [b for b in BUCKET_ORDER if b in supply]
    total = sum(supply.values())
    if amount >= total:
        return {b: supply[b] for b in order}
    shares = {b: amount * supply[b] / total for b in order}
    alloc = {b: int(math.floor(shares[b])) for b in order}
    leftover = amount - sum(alloc.values())
    by_remainder = sorted(order, key=lambda b: (-(shares[b] - alloc[b]), order.index(b)))
    for b in by_remainder:
        if leftover == 0:
            break
        if alloc[b] < supply[b]:
            alloc[b] += 1
            leftover -= 1
    return alloc


def bucket_sample(records: list[CurationRecord], cfg: SamplerConfig) -> list[CurationRecord]:
    """Deterministic quality-ranked stratified selection.

    Per-bucket quotas come from largest-remainder rounding of the target
    ratios; under-populated buckets hand their unfilled slots to the others
    proportionally to leftover supply until the target is met or supply runs
    out (then everything is returned and a warning is emitted).
    """
    eligible = [r for r in records if r.quality is not None]
    ranked: dict[str, list[CurationRecord]] = {b: [] for b in BUCKET_ORDER}
    for record in eligible:
        ranked.setdefault(record.bucket or bucket_key(0), []).append(record)
    for bucket in ranked:
        ranked[bucket].sort(key=lambda r: (-r.quality.total, r.raw.id))

    quotas = compute_quotas(cfg.target_count, cfg.bucket_ratios)
    take = {b: min(quotas.get(b, 0), len(ranked[b])) for b in ranked}
    remaining = cfg.target_count - sum(take.values())
    while remaining > 0:
        leftovers = {b: len(ranked[b]) - take[b] for b in ranked if len(ranked[b]) > take[b]}
        if not leftovers:
            warnings.warn(
                f"bucket supply exhausted: selected {sum(take.values())} of "
                f"target {cfg.target_count}",
                stacklevel=2,
            )
            break
        extra = _allocate_proportional(remaining, leftovers)
        for b, n in extra.items():
            take[b] += n
        remaining = cfg.target_count - sum(take.values())

    selected = []
    for bucket in sorted(ranked, key=lambda b: (BUCKET_ORDER.index(b) if b in BUCKET_ORDER else 99)):
        chosen = ranked[bucket][: take[bucket]]
        for record in chosen:
            record.selected = True
        selected.extend(chosen)
    return selected


@dataclass
class PipelineResult:
    records: list[CurationRecord]
    selected: list[CurationRecord]
    report: dict


def run_pipeline(
    rollouts: list[RawRollout],
    weights: QualityWeights | None = None,
    sampler: SamplerConfig | None = None,
) -> PipelineResult:
    """Hard filter -> quality score -> bucket sample, with a curation report."""
    weights = weights or QualityWeights()
    records = [evaluate_rollout(raw, weights) for raw in rollouts]
    survivors = [r for r in records if r.quality is not None]
    if sampler is None:
        sampler = SamplerConfig(target_count=max(len(survivors), 1))
    selected = bucket_sample(records, sampler) if survivors else []

    quotas = compute_quotas(sampler.target_count, sampler.bucket_ratios)
    supply = {b: sum(1 for r in survivors if r.bucket == b) for b in BUCKET_ORDER}
    taken = {b: sum(1 for r in selected if r.bucket == b) for b in BUCKET_ORDER}
    report = {
        "total": len(records),
        "format_ok": sum(1 for r in records if r.hard_verdict.format_ok),
        "cover_em_ok": sum(1 for r in records if r.hard_verdict.cover_em_ok),
        "survivors": len(survivors),
        "rejected": {
            "format": sum(1 for r in records if not r.hard_verdict.format_ok),
            "cover_em": sum(
                1 for r in records if r.hard_verdict.format_ok and not r.hard_verdict.cover_em_ok
            ),
        },
        "target_count": sampler.target_count,
        "quotas": quotas,
        "buckets": {b: {"supply": supply[b], "taken": taken[b]} for b in BUCKET_ORDER},
        "selected": len(selected),
        "supply_exhausted": len(selected) < sampler.target_count,
    }
    return PipelineResult(records=records, selected=selected, report=report)


# ---------------------------------------------------------------------------
# SFT export


def sft_record(record: CurationRecord) -> dict:
    """SFT payload for one selected record, mask spans relative to the response."""
    response = serialize_trajectory(record.traj)
    canonical = parse_text(response, "lenient")
    mask = extract_mask_spans(canonical)
    return {
        "id": record.raw.id,
        "prompt": render_prompt(record.raw.question),
        "response": response,
        "mask_spans": [[s, e] for s, e in mask.document_spans],
        "n_search": len(record.traj.search_queries()),
        "quality": record.quality.to_dict() if record.quality is not None else None,
    }


def export_sft(selected: list[CurationRecord], out_path: str, fmt: str = "jsonl") -> int:
    """Write selected records as SFT JSONL; returns the number of lines."""
    if fmt != "jsonl":
        raise ValueError(f"unsupported export format {fmt!r}")
    if not selected:
        warnings.warn("exporting an empty SFT dataset", stacklevel=2)
    try:
        with open(out_path, "w", encoding="utf-8") as fh:
            for record in selected:
                fh.write(json.dumps(sft_record(record), ensure_ascii=False, sort_keys=True))
                fh.write("\n")
    except OSError as exc:
        raise OSError(f"failed to write SFT dataset to {out_path}: {exc}") from exc
    return len(selected)
