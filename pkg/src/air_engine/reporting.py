"""Atomic file emission and round-trip-safe number formatting.

All output files are written through a temp file plus rename so a failing
command never leaves a partial artifact. Floats are serialized with Python's
shortest round-trip repr, which makes CSV and JSON outputs diffable and
lossless.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

__all__ = ["fmt_float", "atomic_write_text", "write_csv", "write_json"]


def fmt_float(x) -> str:
    return repr(float(x))


def _cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return fmt_float(value)
    return str(value)


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_cell(v) for v in row) for row in rows)
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")
