"""CSV artifacts. Each file opens with a ``# units:`` line, then the header row."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np


def write_atomic(path, data: str | bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp-{os.getpid()}")
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(tmp, mode) as fh:
        fh.write(data)
    os.replace(tmp, path)
    return path


def _fmt(v) -> str:
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_text(columns: list[tuple[str, str]], rows) -> str:
    """``columns`` is a list of (name, unit) pairs."""
    lines = ["# units: " + ", ".join(f"{n}={u}" for n, u in columns), ",".join(n for n, _ in columns)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def write_csv(path, columns, rows) -> Path:
    return write_atomic(path, csv_text(columns, rows))


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    """Header and rows of a CSV written by :func:`write_csv` (unit line skipped)."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if not ln.startswith("#")]
    return lines[0].split(","), [ln.split(",") for ln in lines[1:]]
