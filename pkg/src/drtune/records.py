"""Line-delimited JSON experiment records.

One self-describing JSON object per line, append-only, flushed per line so
partial runs survive crashes. The first line is a versioned header with the
experiment-defining config snapshot. Wall-clock timings live in records of
type "timing" so byte-level comparisons can strip them; everything else is
a deterministic function of config and master seed.

Record types: header, baseline, candidate, iteration, seed_summary, timing.
"""

from __future__ import annotations

import json
import os

from .errors import RecordParseError

RECORD_FORMAT = 1
TIMING_TYPE = "timing"


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):  # numpy scalar
        return value.item()
    if hasattr(value, "tolist"):
        return value.tolist()
    return value


class RecordWriter:
    """Single-owner append writer; one JSON object per line, flushed eagerly."""

    def __init__(self, path, config_snapshot: dict):
        directory = os.path.dirname(str(path))
        if directory:
            os.makedirs(directory, exist_ok=True)
        self._fh = open(path, "w", encoding="utf-8")
        self.write({"type": "header", "format": RECORD_FORMAT, "config": config_snapshot})

    def write(self, record: dict) -> None:
        self._fh.write(json.dumps(_jsonable(record)))
        self._fh.write("\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def read_records(path) -> list[dict]:
    """Parse a record file; raises RecordParseError naming the bad line."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise RecordParseError(f"cannot read record file {path}: {exc}") from exc
    if not lines:
        raise RecordParseError(f"{path}: empty record file", line_number=0)
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordParseError(f"{path}:{lineno}: invalid record: {exc}",
                                   line_number=lineno) from exc
        if not isinstance(rec, dict) or "type" not in rec:
            raise RecordParseError(f"{path}:{lineno}: record is not a typed object",
                                   line_number=lineno)
        records.append(rec)
    header = records[0]
    if header.get("type") != "header":
        raise RecordParseError(f"{path}:1: first record must be the header", line_number=1)
    if header.get("format") != RECORD_FORMAT:
        raise RecordParseError(
            f"{path}:1: unsupported record format {header.get('format')!r}", line_number=1
        )
    return records


def nontiming_lines(path) -> list[str]:
    """Raw lines with timing records removed, for byte-level comparisons."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    kept = []
    for line in lines:
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError:
            kept.append(line)
            continue
        if isinstance(rec, dict) and rec.get("type") == TIMING_TYPE:
            continue
        kept.append(line)
    return kept
