"""CSV and line-delimited outputs.

Every file starts with ``#`` comment lines carrying the tool version, the
RNG algorithm, the configuration echo and the explosion-guard status; the
rest is a plain CSV body.  Floats are written with ``repr`` so that equal
runs give byte-identical bodies.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .engine import SNAPSHOT_COLUMNS, EventRecord
from .process import RNG_ALGORITHM

CSV_COLUMNS = ("replica",) + SNAPSHOT_COLUMNS
_INT_COLUMNS = {"replica", "N", "A", "B", "C", "beta", "occ_1"}


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def header_lines(config_echo: str = "", guard: str = "ok", extra: dict | None = None) -> list[str]:
    lines = [f"# tool=bbmmi {__version__}", f"# rng={RNG_ALGORITHM}"]
    if config_echo:
        lines.append(f"# config={config_echo}")
    lines.append(f"# guard={guard}")
    for k, v in (extra or {}).items():
        lines.append(f"# {k}={v}")
    return lines


def guard_summary(status: Sequence[str]) -> str:
    """``ok`` when every replica finished, else the tripped replica indices."""
    bad = [i for i, s in enumerate(status) if s != "ok"]
    if not bad:
        return f"ok ({len(status)} replicas)"
    return f"tripped replicas={' '.join(map(str, bad))} ({len(bad)}/{len(status)})"


def snapshot_body(snapshots: np.ndarray) -> str:
    """CSV body (with column header) for an ``(R, G, C)`` snapshot array."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in range(snapshots.shape[0]):
        for row in snapshots[r]:
            cells = [fmt(r)]
            for name, v in zip(SNAPSHOT_COLUMNS, row):
                if name in _INT_COLUMNS and np.isfinite(v):
                    cells.append(str(int(v)))
                else:
                    cells.append(fmt(v))
            w.writerow(cells)
    return buf.getvalue()


def write_text(path: str, header: Iterable[str], body: str) -> str:
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for line in header:
            fh.write(line + "\n")
        fh.write(body)
    return path


def rows_body(columns: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def split_header(text: str) -> tuple[list[str], str]:
    """Separate the ``#`` header lines from the CSV body."""
    lines = text.splitlines(keepends=True)
    k = 0
    while k < len(lines) and lines[k].startswith("#"):
        k += 1
    return [l.rstrip("\n") for l in lines[:k]], "".join(lines[k:])


def read_snapshots(path: str) -> tuple[list[str], np.ndarray]:
    """Header lines and the numeric body (replica column first)."""
    with open(path, encoding="utf-8") as fh:
        header, body = split_header(fh.read())
    rows = list(csv.reader(io.StringIO(body)))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected columns")
    data = np.array([[float(c) for c in r] for r in rows[1:]]) if len(rows) > 1 \
        else np.empty((0, len(CSV_COLUMNS)))
    return header, data


def events_jsonl(events: Iterable[EventRecord], replica: int = 0) -> str:
    out = []
    for e in events:
        d = e.as_dict()
        d["replica"] = replica
        out.append(json.dumps(d, sort_keys=True, default=repr))
    return "\n".join(out) + ("\n" if out else "")
