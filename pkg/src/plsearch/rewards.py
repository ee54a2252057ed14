"""Composite reward for plan-structured rollouts, plus group advantages.

The total reward is the answer F1 when it is positive; only when the answer
scores exactly zero do the auxiliary signals apply::

    r_total = r_ans                                   if r_ans > 0
    r_total = lambda_fmt * r_fmt + lambda_plan * r_plan   otherwise

The plan reward saturates at 1 once the mean plan/think alignment clears the
threshold delta, so a verbatim copy of the plan earns no more than a faithful
paraphrase above the threshold.
"""

from __future__ import annotations

import json
import math
import statistics
from dataclasses import dataclass

from .metrics import token_f1
from .trajectory import REQUIRED_TAG_NAMES, Trajectory

DEFAULT_LAMBDA_FMT = 0.1
DEFAULT_LAMBDA_PLAN = 0.1
DEFAULT_DELTA = 0.25
DEFAULT_GROUP_SIZE = 5
DEFAULT_ADVANTAGE_EPS = 1e-6

ALIGNMENT_DENOMINATORS = ("max", "plan_length")


@dataclass(frozen=True)
class RewardConfig:
    """Reward coefficients; defaults match the shipped training recipe."""

    lambda_fmt: float = DEFAULT_LAMBDA_FMT
    lambda_plan: float = DEFAULT_LAMBDA_PLAN
    delta: float = DEFAULT_DELTA
    alignment_denominator: str = "max"  # "max" -> max(K, M); "plan_length" -> K

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must be strictly inside (0, 1), got {self.delta}")
        for name in ("lambda_fmt", "lambda_plan"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value}")
        if self.alignment_denominator not in ALIGNMENT_DENOMINATORS:
            raise ValueError(
                f"alignment_denominator must be one of {ALIGNMENT_DENOMINATORS}, "
                f"got {self.alignment_denominator!r}"
            )

    @classmethod
    def from_dict(cls, data: dict) -> "RewardConfig":
        known = {"lambda_fmt", "lambda_plan", "delta", "alignment_denominator"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown reward config fields: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json_file(cls, path: str) -> "RewardConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "lambda_fmt": self.lambda_fmt,
            "lambda_plan": self.lambda_plan,
            "delta": self.delta,
            "alignment_denominator": self.alignment_denominator,
        }


@dataclass(frozen=True)
class RewardBreakdown:
    """Per-component reward values for one trajectory."""

    r_ans: float
    r_fmt: float
    s_align: float
    r_plan: float
    r_aux: float
    r_total: float
    gated: bool
    per_step_alignment: tuple[tuple[int, float], ...] = ()
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "r_ans": self.r_ans,
            "r_fmt": self.r_fmt,
            "s_align": self.s_align,
            "r_plan": self.r_plan,
            "r_aux": self.r_aux,
            "r_total": self.r_total,
            "gated": self.gated,
            "per_step_alignment": [[k, f] for k, f in self.per_step_alignment],
            "flags": list(self.flags),
        }


def outcome_reward(traj: Trajectory, golden: list[str]) -> float:
    """Best token F1 of the answer against the gold answers; 0 if no answer."""
    if not golden:
        raise ValueError("golden answers must be non-empty")
    if traj.answer is None:
        return 0.0
    return max(token_f1(traj.answer, gold) for gold in golden)


def format_reward(traj: Trajectory) -> float:
    """Two-tier structural reward: 1, 0.5, or 0.

    Condition (i): the plan and answer blocks exist and every occurrence of a
    policy-emitted tag is properly paired.  Condition (ii): every search block
    is immediately (whitespace apart) preceded by a think block.  Both hold ->
    1; only (i) holds -> 0.5; otherwise 0.
    """
    pairing_ok = not any(
        d.rule in ("dangling_close_tag", "unclosed_tag") and d.tag in REQUIRED_TAG_NAMES
        for d in traj.parse_diagnostics
    )
    condition_tags = traj.plan is not None and traj.answer is not None and pairing_ok
    condition_think = not any(d.rule == "missing_think" for d in traj.parse_diagnostics)
    if condition_tags and condition_think:
        return 1.0
    if condition_tags:
        return 0.5
    return 0.0


def plan_alignment(
    traj: Trajectory, cfg: RewardConfig | None = None
) -> tuple[float, list[tuple[int, float]]]:
    """Mean token F1 between sub-question k and the think text of step k.

    Pairs exist for k <= min(K, M); missing pairs contribute zero through the
    denominator, which is max(K, M) by default or K under the "plan_length"
    policy.
    """
    cfg = cfg or RewardConfig()
    if traj.plan is None or not traj.plan.sub_questions:
        return 0.0, []
    k_plan = len(traj.plan.sub_questions)
    m_steps = len(traj.steps)
    per_step = [
        (k, token_f1(traj.plan.sub_questions[k - 1], traj.steps[k - 1].think or ""))
        for k in range(1, min(k_plan, m_steps) + 1)
    ]
    denominator = k_plan if cfg.alignment_denominator == "plan_length" else max(k_plan, m_steps)
    s_align = sum(f for _, f in per_step) / denominator if denominator else 0.0
    return s_align, per_step


def plan_reward(s_align: float, cfg: RewardConfig | None = None) -> float:
    """1 when the alignment clears delta (strict inequality), else the raw score."""
    cfg = cfg or RewardConfig()
    return 1.0 if s_align > cfg.delta else s_align


def composite_reward(
    traj: Trajectory, golden: list[str], cfg: RewardConfig | None = None
) -> RewardBreakdown:
    """Full gated reward; auxiliary terms apply only when r_ans == 0 exactly."""
    cfg = cfg or RewardConfig()
    r_ans = outcome_reward(traj, golden)
    r_fmt = format_reward(traj)
    s_align, per_step = plan_alignment(traj, cfg)
    r_plan = plan_reward(s_align, cfg)
    r_aux = cfg.lambda_fmt * r_fmt + cfg.lambda_plan * r_plan
    gated = r_ans == 0.0
    flags = sorted({d.rule for d in traj.parse_diagnostics})
    return RewardBreakdown(
        r_ans=r_ans,
        r_fmt=r_fmt,
        s_align=s_align,
        r_plan=r_plan,
        r_aux=r_aux,
        r_total=r_aux if gated else r_ans,
        gated=gated,
        per_step_alignment=tuple(per_step),
        flags=tuple(flags),
    )


def group_advantages(rewards: list[float], eps: float = DEFAULT_ADVANTAGE_EPS) -> list[float]:
    """Standardize rewards against their group: (r - mean) / (pstdev + eps)."""
    if len(rewards) < 2:
        raise ValueError("a reward group needs at least two members")
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    mean = statistics.fmean(rewards)
    std = math.sqrt(statistics.fmean((r - mean) ** 2 for r in rewards))
    return [(r - mean) / (std + eps) for r in rewards]
