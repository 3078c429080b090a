"""Load and PV profiles: CSV ingestion and a synthetic CAISO-like generator.

System demand (MW) is scaled to the feeder base and split over load buses by
fixed weights. PV output is added as positive injection at designated buses.
Each whole day of data becomes one episode.
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from datetime import datetime
from os import PathLike

import numpy as np

from ..feeder import Feeder

MINUTES_PER_DAY = 1440


class ProfileError(ValueError):
    pass


@dataclass
class LoadDataset:
    """Per-bus injections for a set of days.

    ``p`` and ``q`` have shape ``(days, steps, N)`` in per-unit with the
    package sign convention (loads negative). ``split`` labels each day
    ``"train"`` or ``"test"``.
    """

    p: np.ndarray
    q: np.ndarray
    step_minutes: float
    split: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.split = np.asarray(self.split, dtype=object)
        if self.p.ndim != 3 or self.p.shape != self.q.shape:
            raise ProfileError("p and q must share shape (days, steps, N)")
        if self.split.shape != (self.p.shape[0],):
            raise ProfileError("one split label per day is required")
        if not (np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.q))):
            raise ProfileError("profiles contain non-finite values")

    @property
    def n_days(self) -> int:
        return self.p.shape[0]

    @property
    def steps_per_day(self) -> int:
        return self.p.shape[1]

    def days(self, label: str | None = None) -> np.ndarray:
        if label is None:
            return np.arange(self.n_days)
        return np.flatnonzero(self.split == label)

    def subset(self, label: str) -> "LoadDataset":
        idx = self.days(label)
        return LoadDataset(self.p[idx], self.q[idx], self.step_minutes, self.split[idx])


def default_weights(f: Feeder) -> np.ndarray:
    """Allocation proportional to each bus's nominal active load."""
    p, _ = f.load_pu()
    if p.sum() <= 0:
        raise ProfileError("feeder has no nominal load; pass explicit weights")
    return p / p.sum()


def _weights_vector(f: Feeder, weights) -> np.ndarray:
    if weights is None:
        return default_weights(f)
    if isinstance(weights, dict):
        w = np.zeros(f.n)
        for bus, val in weights.items():
            if not 1 <= int(bus) <= f.n:
                raise ProfileError(f"weight given for unknown load bus {bus}")
            w[int(bus) - 1] = val
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (f.n,):
            raise ProfileError(f"weights must have length {f.n}")
    if np.any(w < 0) or not np.isclose(w.sum(), 1.0, atol=1e-9):
        raise ProfileError(f"weights must be non-negative and sum to 1, got sum {w.sum()}")
    return w


def _q_ratio(f: Feeder, power_factor: float | None) -> np.ndarray:
    if power_factor is not None:
        return np.full(f.n, np.tan(np.arccos(power_factor)))
    p, q = f.load_pu()
    return np.divide(q, p, out=np.zeros_like(q), where=p > 0)


def distribute(f: Feeder, demand_mw: np.ndarray, weights=None, pv_mw: np.ndarray | None = None,
               power_factor: float | None = None):
    """Turn system demand (and per-bus PV) into per-bus per-unit injections.

    ``demand_mw`` has shape ``(..., T)``; ``pv_mw`` has shape ``(..., T, N)``.
    Reactive background follows each bus's nominal kvar/kW ratio unless a
    uniform ``power_factor`` is given.
    """
    w = _weights_vector(f, weights)
    load = np.asarray(demand_mw, dtype=float)[..., None] * w / f.base_mva
    p = -load
    q = -load * _q_ratio(f, power_factor)
    if pv_mw is not None:
        p = p + np.asarray(pv_mw, dtype=float) / f.base_mva
    return p, q


def _split_days(series: np.ndarray, steps_per_day: int) -> np.ndarray:
    n = series.shape[0]
    if n < steps_per_day:
        return series[None]
    whole = n // steps_per_day
    return series[: whole * steps_per_day].reshape(whole, steps_per_day, *series.shape[1:])


def read_timeseries(path: str | PathLike) -> tuple[np.ndarray, list[str], np.ndarray]:
    """Read ``timestamp, col1, col2, ...``; returns (seconds since first row, names, values)."""
    times = []
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ProfileError(f"{path}: empty file") from None
        if len(header) < 2:
            raise ProfileError(f"{path}: need a timestamp column and at least one value column")
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ProfileError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}")
            try:
                ts = datetime.fromisoformat(row[0].strip())
            except ValueError:
                raise ProfileError(f"{path}:{line_no}: bad timestamp {row[0]!r}") from None
            try:
                vals = [float(c) for c in row[1:]]
            except ValueError:
                raise ProfileError(f"{path}:{line_no}: non-numeric value in {row[1:]}") from None
            if not all(np.isfinite(vals)):
                raise ProfileError(f"{path}:{line_no}: non-finite value")
            times.append(ts)
            rows.append(vals)
    if not rows:
        raise ProfileError(f"{path}: no data rows")
    secs = np.array([(t - times[0]).total_seconds() for t in times])
    if len(secs) > 1:
        diffs = np.diff(secs)
        bad = np.flatnonzero(diffs <= 0)
        if bad.size:
            k = int(bad[0])
            raise ProfileError(f"{path}: timestamps not increasing at {times[k + 1].isoformat()} "
                               f"(after {times[k].isoformat()})")
        native = Counter(diffs.tolist()).most_common(1)[0][0]
        gaps = np.flatnonzero(diffs > native * (1 + 1e-9))
        if gaps.size:
            k = int(gaps[0])
            raise ProfileError(f"{path}: missing data between {times[k].isoformat()} and "
                               f"{times[k + 1].isoformat()}")
    return secs, header[1:], np.array(rows)


def _resample(secs: np.ndarray, values: np.ndarray, step_minutes: float) -> np.ndarray:
    step = step_minutes * 60.0
    if len(secs) == 1:
        return values
    grid = np.arange(0.0, secs[-1] + 1e-9, step)
    return np.column_stack([np.interp(grid, secs, values[:, k]) for k in range(values.shape[1])])


def ingest_profiles(demand_csv, f: Feeder, weights=None, step_minutes: float = 5.0,
                    pv_csv=None, pv_buses=None, pv_capacity_mw: float = 0.0,
                    peak_mw: float | None = None, power_factor: float | None = None,
                    test_days: int = 0) -> LoadDataset:
    """Build a dataset from a demand CSV (MW) and an optional PV CSV.

    All demand columns are summed into one system demand. With ``peak_mw`` the
    series is rescaled so its maximum equals that value. The PV CSV holds a
    normalised output in [0, 1] which is multiplied by ``pv_capacity_mw`` and
    shared equally among ``pv_buses``. The last ``test_days`` days are labelled
    ``test``.
    """
    secs, _, vals = read_timeseries(demand_csv)
    demand = _resample(secs, vals, step_minutes).sum(axis=1)
    if peak_mw is not None:
        demand = demand * (peak_mw / demand.max())
    pv = None
    if pv_csv is not None:
        psecs, _, pvals = read_timeseries(pv_csv)
        shape = _resample(psecs, pvals, step_minutes)[:, 0]
        if shape.shape[0] < demand.shape[0]:
            raise ProfileError("PV profile is shorter than the demand profile")
        pv = pv_matrix(f, shape[: demand.shape[0]], pv_buses or [], pv_capacity_mw)
    p, q = distribute(f, demand, weights, pv, power_factor)
    steps = int(round(MINUTES_PER_DAY / step_minutes))
    p, q = _split_days(p, steps), _split_days(q, steps)
    split = np.array(["train"] * p.shape[0], dtype=object)
    if test_days:
        split[-test_days:] = "test"
    return LoadDataset(p, q, step_minutes, split)


def pv_matrix(f: Feeder, shape: np.ndarray, pv_buses, capacity_mw: float) -> np.ndarray:
    """Spread ``capacity_mw * shape`` evenly over ``pv_buses``; returns ``(..., T, N)`` MW."""
    out = np.zeros(shape.shape + (f.n,))
    buses = list(pv_buses)
    for b in buses:
        if not 1 <= int(b) <= f.n:
            raise ProfileError(f"PV bus {b} is not a load bus")
        out[..., int(b) - 1] = shape * capacity_mw / len(buses)
    return out


# --------------------------------------------------------------------------
# Synthetic profiles

def _bump(h, centre, width):
    return np.exp(-0.5 * ((h - centre) / width) ** 2)


def synthetic_demand(n_days: int, step_minutes: float, rng: np.random.Generator,
                     min_mw: float = 0.55, max_mw: float = 1.0) -> np.ndarray:
    """Daily demand curves shaped like CAISO system load, ``(n_days, steps)``.

    Night trough near 04:00, a morning shoulder, a mild midday dip from
    behind-the-meter solar and an evening peak near 19:00. Per-day jitter in
    level, swing and peak hour plus a little AR(1) noise.
    """
    steps = int(round(MINUTES_PER_DAY / step_minutes))
    h = np.arange(steps) * step_minutes / 60.0
    out = np.empty((n_days, steps))
    for d in range(n_days):
        peak_hour = 19.0 + rng.normal(0, 0.5)
        shape = (0.35 + 0.35 * _bump(h, 8.5 + rng.normal(0, 0.3), 2.0)
                 + 0.25 * _bump(h, 13.0, 3.0)
                 + 0.65 * _bump(h, peak_hour, 2.2)
                 + 0.65 * _bump(h - 24.0, peak_hour, 2.2)
                 - 0.12 * _bump(h, 4.0, 1.5))
        shape = (shape - shape.min()) / (shape.max() - shape.min())
        lo = min_mw * (1 + rng.normal(0, 0.04))
        hi = max_mw * (1 + rng.normal(0, 0.05))
        noise = np.zeros(steps)
        e = rng.normal(0, 0.01, steps)
        for k in range(1, steps):
            noise[k] = 0.97 * noise[k - 1] + e[k]
        out[d] = (lo + (hi - lo) * shape) * (1 + noise)
    return out


def synthetic_pv(n_days: int, step_minutes: float, rng: np.random.Generator,
                 cloudiness: float = 0.3) -> np.ndarray:
    """Normalised PV output in [0, 1], ``(n_days, steps)``.

    Clear-sky half-sine between 06:00 and 18:00 times a mild per-day
    clearness factor in [0.85, 1]. ``cloudiness`` sets how often fast
    cloud dips occur and how deep they are; it does not lower the clear
    peak.
    """
    steps = int(round(MINUTES_PER_DAY / step_minutes))
    h = np.arange(steps) * step_minutes / 60.0
    clear = np.clip(np.sin(np.pi * (h - 6.0) / 12.0), 0.0, None) ** 1.2
    out = np.empty((n_days, steps))
    per_hour = 60.0 / step_minutes
    for d in range(n_days):
        clearness = rng.uniform(0.85, 1.0)
        cloud = np.ones(steps)
        state = 1.0
        for k in range(steps):
            if rng.random() < cloudiness * 6.0 / per_hour:
                state = 1.0 - cloudiness * rng.uniform(0.3, 1.0)
            elif rng.random() < 6.0 / per_hour:
                state = 1.0
            cloud[k] = state
        out[d] = np.clip(clear * clearness * cloud, 0.0, 1.0)
    return out


def synthetic_dataset(f: Feeder, n_days: int, step_minutes: float = 5.0, seed: int = 0,
                      peak_mw: float | None = None, min_fraction: float = 0.55,
                      pv_buses=(), pv_capacity_mw: float = 0.0, cloudiness: float = 0.3,
                      test_days: int = 0, weights=None, power_factor: float | None = None) -> LoadDataset:
    """CAISO-like days distributed over the feeder.

    ``peak_mw`` defaults to the feeder's total nominal load, so a typical day
    peaks near nameplate loading.
    """
    rng = np.random.default_rng(seed)
    if peak_mw is None:
        peak_mw = f.load_pu()[0].sum() * f.base_mva
    demand = synthetic_demand(n_days, step_minutes, rng, min_fraction * peak_mw, peak_mw)
    pv = None
    if pv_capacity_mw > 0 and len(pv_buses):
        pv = pv_matrix(f, synthetic_pv(n_days, step_minutes, rng, cloudiness), pv_buses, pv_capacity_mw)
    p, q = distribute(f, demand, weights, pv, power_factor)
    split = np.array(["train"] * n_days, dtype=object)
    if test_days:
        split[n_days - test_days:] = "test"
    return LoadDataset(p, q, step_minutes, split)
