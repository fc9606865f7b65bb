"""Atomic artifact writes: temp file in the target directory, then rename."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from typing import Iterable, Sequence

__all__ = ["atomic_write_text", "write_csv", "write_json"]


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _cell(v):
    return repr(v) if isinstance(v, float) else v


def write_csv(rows: Iterable[dict], columns: Sequence[str], path: str | os.PathLike) -> None:
    buf = io.StringIO()
    wr = csv.DictWriter(buf, fieldnames=list(columns), extrasaction="ignore")
    wr.writeheader()
    for row in rows:
        wr.writerow({k: _cell(v) for k, v in row.items()})
    atomic_write_text(path, buf.getvalue())


def write_json(obj, path: str | os.PathLike) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")
