"""JSON Lines helpers shared by the CLI and the service."""

from __future__ import annotations

import json
from collections.abc import Iterable, Iterator

from .trajectory import RawRollout


def dumps(obj) -> str:
    """Canonical single-line JSON used for byte-deterministic outputs."""
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def iter_jsonl(path: str) -> Iterator[dict]:
    """Yield one parsed object per non-empty line, with line numbers in errors."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc


def write_jsonl(path: str, records: Iterable[dict]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(dumps(record))
            fh.write("\n")
            count += 1
    return count


def read_rollouts(path: str) -> list[RawRollout]:
    """Load a rollout dataset, enforcing unique non-empty ids."""
    rollouts = []
    seen: set[str] = set()
    for index, data in enumerate(iter_jsonl(path), start=1):
        try:
            rollout = RawRollout.from_dict(data)
        except ValueError as exc:
            raise ValueError(f"{path}: record {index}: {exc}") from exc
        if rollout.id in seen:
            raise ValueError(f"{path}: record {index}: duplicate rollout id {rollout.id!r}")
        seen.add(rollout.id)
        rollouts.append(rollout)
    return rollouts
