"""Episode index CSV: header ``episode_id,split``, split in {train, eval}."""
from __future__ import annotations

import csv
import io
from pathlib import Path

from ..errors import DataError, DuplicateIdError, MissingHeaderError, ParseError

HEADER = ["episode_id", "split"]
SPLITS = ("train", "eval")


def parse_episode_index(text, source="<index>"):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != HEADER:
        raise MissingHeaderError(f"{source}: first line must be 'episode_id,split'", 1)
    out, seen = [], set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ParseError(f"{source} line {lineno}: expected 2 fields, got {len(row)}", lineno)
        eid, split = row[0].strip(), row[1].strip()
        if not eid:
            raise ParseError(f"{source} line {lineno}: empty episode_id", lineno)
        if split not in SPLITS:
            raise ParseError(f"{source} line {lineno}: unknown split {split!r}", lineno)
        if eid in seen:
            raise DuplicateIdError(eid)
        seen.add(eid)
        out.append((eid, split))
    return out


def load_episode_index(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"episode index {path} not found") from None
    return parse_episode_index(text, str(path))


def save_episode_index(rows, path):
    seen = set()
    for eid, split in rows:
        if split not in SPLITS:
            raise DataError(f"episode {eid}: unknown split {split!r}")
        if eid in seen:
            raise DuplicateIdError(eid)
        seen.add(eid)
    lines = [",".join(HEADER)] + [f"{eid},{split}" for eid, split in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
