"""Shipped rollout fixtures: one fully valid reference and three failure shapes.

The failure fixtures mirror the corruption patterns real RL rollouts exhibit:
missing think blocks with a duplicated query, a dangling closing tag, and
bracket-corrupted tags in place of a refine step.
"""

from __future__ import annotations

import json
from importlib import resources

from .trajectory import RawRollout

FAILURE_CASES = ("missing_think", "dangling_close", "malformed_tags")


def _load(name: str) -> RawRollout:
    asset = resources.files("plsearch").joinpath("assets", "rollouts", f"{name}.json")
    return RawRollout.from_dict(json.loads(asset.read_text(encoding="utf-8")))


def reference_rollout() -> RawRollout:
    """The strictly valid three-hop rollout ending in the correct answer."""
    return _load("reference_ship_designer")


def failure_rollout(case: str) -> RawRollout:
    if case not in FAILURE_CASES:
        raise ValueError(f"unknown failure case {case!r}; choose from {FAILURE_CASES}")
    return _load(case)


def failure_rollouts() -> dict[str, RawRollout]:
    return {case: _load(case) for case in FAILURE_CASES}
