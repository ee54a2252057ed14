"""JSON Lines helpers for feeding rollout files to the service."""

from __future__ import annotations

import json
from collections.abc import Iterable, Iterator


def iter_jsonl(path: str) -> Iterator[dict]:
    """Yield one object per non-empty line; errors carry the line number."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {lineno}: invalid JSON: {exc}") from exc


def write_jsonl(path: str, records: Iterable[dict]) -> int:
    """Write records one JSON object per line; returns the count written."""
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False))
            fh.write("\n")
            count += 1
    return count
