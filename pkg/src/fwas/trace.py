"""Per-iteration telemetry shared by every solver and baseline."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional

HEADER = ("k", "objective", "gap", "batch", "gamma", "step_kind", "active_size", "passes", "millis")

STEP_KINDS = ("FW", "FullFW", "Away", "Drop", "Null", "Stop")


@dataclass
class TraceRecord:
    """State at the start of iteration ``k`` and the step taken from it.

    ``gap`` is the linearized gap of the gradient used for the step; on the
    terminal ``Stop`` row it is the exact gap (or NaN if none was computed).
    ``passes`` counts gradient-component evaluations divided by ``n``.
    """

    k: int
    objective: float
    gap: float
    batch: int
    gamma: float
    step_kind: str
    active_size: int
    passes: float
    millis: float
    blocks: Optional[str] = None


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def trace_to_csv(trace, with_blocks=None) -> str:
    """Render a trace with the fixed header (plus ``blocks`` for block runs)."""
    if with_blocks is None:
        with_blocks = any(r.blocks is not None for r in trace)
    cols = HEADER + (("blocks",) if with_blocks else ())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in trace:
        w.writerow([_fmt(getattr(r, c)) if getattr(r, c) is not None else "" for c in cols])
    return buf.getvalue()


def write_trace_csv(trace, path, with_blocks=None):
    with open(path, "w", newline="") as fh:
        fh.write(trace_to_csv(trace, with_blocks))


def read_trace_csv(path) -> list:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(TraceRecord(
                k=int(row["k"]),
                objective=float(row["objective"]),
                gap=float(row["gap"]),
                batch=int(row["batch"]),
                gamma=float(row["gamma"]),
                step_kind=row["step_kind"],
                active_size=int(row["active_size"]),
                passes=float(row["passes"]),
                millis=float(row["millis"]),
                blocks=row.get("blocks") or None,
            ))
    return out


def step_counts(trace) -> dict:
    """Number of steps of each kind (block rows count each sampled block)."""
    out = {k: 0 for k in STEP_KINDS}
    for r in trace:
        for kind in r.step_kind.split(";"):
            out[kind] = out.get(kind, 0) + 1
    return out
