"""plsearch: scoring, curation, and simulation for plan-structured rollouts."""

__version__ = "0.1.0"

from .curation import (
    CurationRecord,
    HardVerdict,
    QualityScore,
    QualityWeights,
    SamplerConfig,
    bucket_sample,
    compute_quotas,
    evaluate_rollout,
    export_sft,
    hard_filter,
    quality_score,
    run_pipeline,
)
from .metrics import (
    NormalizedText,
    bigram_jaccard_distance,
    cover_exact_match,
    exact_match,
    normalize,
    token_f1,
)
from .retrieval import DEFAULT_TOP_K, Bm25Index, CorpusDoc, retrieve
from .rewards import (
    DEFAULT_GROUP_SIZE,
    RewardBreakdown,
    RewardConfig,
    composite_reward,
    format_reward,
    group_advantages,
    outcome_reward,
    plan_alignment,
    plan_reward,
)
from .simulate import (
    QAItem,
    SimPolicy,
    build_fixture,
    hacking_demo,
    reference_item,
    rollout,
)
from .trajectory import (
    ConfigError,
    Diagnostic,
    ExecutionStep,
    MaskSpans,
    PlanBlock,
    RawRollout,
    StructuralError,
    Trajectory,
    extract_mask_spans,
    parse_plan_items,
    parse_text,
    parse_trajectory,
    render_prompt,
    serialize_trajectory,
    token_budget_stats,
)

__all__ = [
    "__version__",
    "Bm25Index",
    "ConfigError",
    "CorpusDoc",
    "CurationRecord",
    "Diagnostic",
    "DEFAULT_GROUP_SIZE",
    "DEFAULT_TOP_K",
    "ExecutionStep",
    "HardVerdict",
    "MaskSpans",
    "NormalizedText",
    "PlanBlock",
    "QAItem",
    "QualityScore",
    "QualityWeights",
    "RawRollout",
    "RewardBreakdown",
    "RewardConfig",
    "SamplerConfig",
    "SimPolicy",
    "StructuralError",
    "Trajectory",
    "bigram_jaccard_distance",
    "bucket_sample",
    "build_fixture",
    "composite_reward",
    "compute_quotas",
    "cover_exact_match",
    "evaluate_rollout",
    "exact_match",
    "export_sft",
    "extract_mask_spans",
    "format_reward",
    "group_advantages",
    "hacking_demo",
    "hard_filter",
    "normalize",
    "outcome_reward",
    "parse_plan_items",
    "parse_text",
    "parse_trajectory",
    "plan_alignment",
    "plan_reward",
    "quality_score",
    "reference_item",
    "render_prompt",
    "retrieve",
    "rollout",
    "run_pipeline",
    "serialize_trajectory",
    "token_budget_stats",
    "token_f1",
]
