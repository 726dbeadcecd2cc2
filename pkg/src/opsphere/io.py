"""File formats: opinion files, trace CSV, summary JSON."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .engine import RunSummary, RunTrace
from .errors import InvalidParams, IoError
from .geometry import UNIT_TOL, Configuration

FILE_UNIT_TOL = 1e-6


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def read_opinions(path) -> Configuration:
    """One opinion per line, d whitespace-separated decimals; unit norm within 1e-6, then renormalized."""
    try:
        u = np.loadtxt(path, dtype=float, ndmin=2)
    except (OSError, ValueError) as exc:
        raise IoError(f"cannot read opinion file {path}: {exc}") from exc
    if u.size == 0:
        raise InvalidParams(f"{path} holds no opinions")
    dev = np.abs(np.linalg.norm(u, axis=1) - 1.0)
    if np.any(dev > FILE_UNIT_TOL):
        line = int(np.argmax(dev)) + 1
        raise InvalidParams(f"{path}:{line}: opinion is not unit norm (deviation {dev.max():.3g})")
    # rows already unit to machine precision are kept bit-for-bit so files round-trip
    off = dev > UNIT_TOL
    u[off] /= np.linalg.norm(u[off], axis=1, keepdims=True)
    return Configuration(u)


def write_opinions(path, opinions) -> None:
    u = np.asarray(opinions, dtype=float)
    try:
        with open(path, "w") as fh:
            for row in u:
                fh.write(" ".join(_fmt(x) for x in row) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def trace_rows(trace: RunTrace):
    with_triangle = trace.final.n == 3
    header = ["step", "i", "j", "min_abs_corr", "potential_min_corr"]
    if with_triangle:
        header.append("potential_triangle")
    yield header
    for k in range(len(trace.record_steps)):
        mn = float(trace.min_abs_corr[k])
        row = [str(int(trace.record_steps[k])), str(int(trace.record_pairs[k, 0])), str(int(trace.record_pairs[k, 1])),
               _fmt(mn), _fmt(1.0 - mn)]
        if with_triangle:
            row.append(_fmt(float(trace.potential_triangle[k])))
        yield row


def write_trace_csv(path, trace: RunTrace) -> None:
    """Metric records; the pair columns hold -1 on the step-0 row."""
    try:
        with open(path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(trace_rows(trace))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> None:
    try:
        Path(path).write_text(dump_json(obj))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def write_summary_json(path, summary: RunSummary) -> None:
    write_json(path, summary.to_json())
