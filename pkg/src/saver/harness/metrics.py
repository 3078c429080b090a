"""Aggregate statistics over evaluation records, and their CSV persistence."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .experiment import EpisodeRecord

RECORDS_SCHEMA = 1
BAND = 0.05


@dataclass
class MethodSummary:
    method: str
    steps: int
    mean_step_time: float         # seconds, controller inference + projection
    mean_abs_q_kvar: float
    violation_pct: float          # % of (bus, step) pairs outside the band, all buses incl. the head
    deviation_mean: np.ndarray    # per bus, |v| - 1 in per-unit magnitude
    deviation_var: np.ndarray


@dataclass
class ResultSummary:
    methods: dict[str, MethodSummary]
    base_mva: float

    def __getitem__(self, name: str) -> MethodSummary:
        return self.methods[name]


def violation_mask(v: np.ndarray, band: float = BAND) -> np.ndarray:
    """True where the voltage magnitude ``sqrt(v)`` is outside ``1 +- band``."""
    mag = np.sqrt(v)
    return (mag < 1.0 - band) | (mag > 1.0 + band)


def summarize(records: list[EpisodeRecord], base_mva: float = 1.0) -> ResultSummary:
    """Fold records into one row per method, in first-appearance order."""
    if not records:
        raise ValueError("cannot summarize an empty list of records")
    grouped: dict[str, list[EpisodeRecord]] = {}
    for rec in records:
        grouped.setdefault(rec.method, []).append(rec)
    out = {}
    for method, recs in grouped.items():
        v = np.concatenate([r.v for r in recs])
        q = np.concatenate([r.action for r in recs])
        t = np.concatenate([r.step_time for r in recs])
        dev = np.sqrt(v) - 1.0
        out[method] = MethodSummary(
            method=method,
            steps=int(v.shape[0]),
            mean_step_time=float(t.mean()),
            mean_abs_q_kvar=float(np.abs(q).mean() * base_mva * 1000.0) if q.size else 0.0,
            violation_pct=float(violation_mask(v).mean() * 100.0),
            deviation_mean=dev.mean(axis=0),
            deviation_var=dev.var(axis=0),
        )
    return ResultSummary(out, base_mva)


# ---------------------------------------------------------------------------
# reporting

def _fmt(x: float) -> str:
    return "%.17g" % x


def report(summary: ResultSummary, records: list[EpisodeRecord], out_dir, bus_names=None) -> list[Path]:
    """Write the summary table, per-bus voltage series and per-bus deviation stats.

    Files: ``summary.csv``, ``summary.txt``, ``voltages.csv`` (one row per
    method/day/step, magnitudes in per-unit) and ``deviation.csv``.
    """
    if not records:
        raise ValueError("no records to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"cannot write to {out}")
    nb = records[0].v.shape[1]
    names = list(bus_names) if bus_names is not None else [str(i) for i in range(nb)]
    written = []

    path = out / "summary.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "time_s", "avg_q_kvar", "violation_pct"])
        for m in summary.methods.values():
            w.writerow([m.method, _fmt(m.mean_step_time), _fmt(m.mean_abs_q_kvar), _fmt(m.violation_pct)])
    written.append(path)

    path = out / "summary.txt"
    lines = [f"{'method':<10} {'time (s)':>12} {'avg |q| (kVAR)':>16} {'outside 5% (%)':>16}"]
    for m in summary.methods.values():
        lines.append(f"{m.method:<10} {m.mean_step_time:>12.3e} {m.mean_abs_q_kvar:>16.2f} {m.violation_pct:>16.2f}")
    path.write_text("\n".join(lines) + "\n")
    written.append(path)

    path = out / "voltages.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "day", "step", *names])
        for rec in records:
            mag = np.sqrt(rec.v)
            for t in range(len(rec)):
                w.writerow([rec.method, rec.day, t, *(_fmt(x) for x in mag[t])])
    written.append(path)

    path = out / "deviation.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "bus", "mean", "variance"])
        for m in summary.methods.values():
            for b, name in enumerate(names):
                w.writerow([m.method, name, _fmt(m.deviation_mean[b]), _fmt(m.deviation_var[b])])
    written.append(path)
    return written


# ---------------------------------------------------------------------------
# record persistence

_ARRAYS = ("state", "raw_action", "action", "status", "active", "slack", "v", "v_linear",
           "reward", "controller_time", "projection_time")
_INT_ARRAYS = {"status", "active"}


def save_records(records: list[EpisodeRecord], out_dir) -> Path:
    """One CSV per record plus ``index.json``; floats are written losslessly."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    index = {"schema": RECORDS_SCHEMA, "records": []}
    for k, rec in enumerate(records):
        fname = f"{k:04d}_{rec.method}_day{rec.day}.csv"
        widths = {}
        header = []
        cols = []
        for name in _ARRAYS:
            a = getattr(rec, name)
            a2 = a.reshape(len(rec), -1)
            widths[name] = a2.shape[1] if a.ndim == 2 else -1  # -1 marks a per-step scalar
            for j in range(a2.shape[1]):
                header.append(f"{name}.{j}" if a.ndim == 2 else name)
            cols.append(a2)
        with open(out / fname, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for t in range(len(rec)):
                row = []
                for name, a2 in zip(_ARRAYS, cols):
                    row.extend(str(int(x)) if name in _INT_ARRAYS else _fmt(x) for x in a2[t])
                w.writerow(row)
        index["records"].append({"file": fname, "method": rec.method, "day": rec.day, "widths": widths})
    path = out / "index.json"
    path.write_text(json.dumps(index, indent=1))
    return path


def load_records(out_dir) -> list[EpisodeRecord]:
    out = Path(out_dir)
    index_path = out / "index.json"
    if not index_path.exists():
        raise FileNotFoundError(f"{index_path} not found; is this a records directory?")
    index = json.loads(index_path.read_text())
    if index.get("schema") != RECORDS_SCHEMA:
        raise ValueError(f"unsupported records schema {index.get('schema')}")
    records = []
    for entry in index["records"]:
        with open(out / entry["file"], newline="") as fh:
            rows = list(csv.reader(fh))
        data = np.array([[float(x) for x in row] for row in rows[1:]], dtype=float).reshape(len(rows) - 1, -1)
        arrays = {}
        col = 0
        for name in _ARRAYS:
            width = entry["widths"][name]
            span = 1 if width < 0 else width
            a = data[:, col:col + span]
            col += span
            a = a[:, 0] if width < 0 else a
            arrays[name] = a.astype(int) if name in _INT_ARRAYS else a
        records.append(EpisodeRecord(entry["method"], int(entry["day"]), **arrays))
    return records
