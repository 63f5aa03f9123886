"""Canonical serialization and crash-safe file helpers shared by the CLI,
the collection service, and the record readers."""

from __future__ import annotations

import json
import os
from pathlib import Path


def canonical_json(obj) -> str:
    """Deterministic single-line JSON: sorted keys, no whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=True)


def write_text_atomic(path: str | Path, text: str):
    """Write a whole file via a temp sibling + rename, never a torn file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as f:
        f.write(text)
        f.flush()
        os.fsync(f.fileno())
    os.replace(tmp, path)


def append_jsonl_atomic(path: str | Path, obj):
    """Append one record as a single line, atomically.

    O_APPEND keeps concurrent writers from interleaving within a line on
    local filesystems; if the kernel ever reports a short write the
    partial tail is truncated away so the file never holds a torn line.
    """
    data = (canonical_json(obj) + "\n").encode()
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_APPEND, 0o644)
    try:
        n = os.write(fd, data)
        if n != len(data):
            size = os.fstat(fd).st_size
            os.ftruncate(fd, size - n)
            raise OSError("short write while appending record")
        os.fsync(fd)
    finally:
        os.close(fd)


def read_jsonl(path: str | Path) -> list[tuple[int, dict]]:
    """All (1-based line number, parsed object) pairs, skipping blank lines."""
    out = []
    with open(path) as f:
        for i, line in enumerate(f, start=1):
            if line.strip():
                try:
                    out.append((i, json.loads(line)))
                except json.JSONDecodeError as e:
                    raise ValueError(f"line {i}: invalid JSON ({e.msg})") from None
    return out
