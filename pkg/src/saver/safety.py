"""Voltage safety layer: project a proposed reactive-power action onto the set of
actions whose LinDistFlow voltages stay inside the bounds.

The projection solves

    min_q  1/2 ||q - q_prop||^2
    s.t.   v_lower <= base + A q <= v_upper,   q_min <= q <= q_max

where ``A = X[:, controllable]`` and ``base = v0 + R p + X q_background``.

Solver
------
The voltage constraints are dualised and the box is kept in the primal, so for
multipliers ``lam >= 0`` the inner minimiser is ``clip(q_prop - G^T lam)``. The
dual is maximised by accelerated projected gradient (FISTA with adaptive
restart) using step ``1/L``, ``L = lambda_max(G^T G)``. Constraint rows are
normalised first; this changes the dual scaling but not the primal problem.

Each dual is capped at ``rho``. That is exactly the dual of the problem with an
L1 slack penalty ``rho * sum(s)`` on violations, so infeasible instances need no
separate code path: the cap binds, slack becomes positive and the result is
flagged ``relaxed``.

Once the dual iterate suggests an active set, an equality-constrained KKT solve
on that set is attempted and accepted only if it passes the full KKT check.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .feeder import Feeder
from .linearization import SensitivityModel, build_sensitivity, predict_voltage
from .powerflow import Injections

DEFAULT_TOL = 1e-7
DEFAULT_RHO = 1e4
DEFAULT_MAX_ITER = 10_000
POLISH_EVERY = 10


class Status(str, Enum):
    OPTIMAL = "optimal"
    RELAXED = "relaxed"
    FAILED = "failed"


@dataclass(frozen=True)
class ProjectionProblem:
    """One instance of the projection QP.

    ``controllable`` holds positions (``bus_id - 1``) of the decision buses;
    ``q_background`` is the fixed reactive injection over all ``N`` buses and
    the decision variables are added on top of it.
    """

    q_proposed: np.ndarray
    p_now: np.ndarray
    model: SensitivityModel
    controllable: np.ndarray
    v_lower: np.ndarray
    v_upper: np.ndarray
    q_min: np.ndarray
    q_max: np.ndarray
    q_background: np.ndarray | None = None

    def __post_init__(self):
        n = self.model.n
        for name in ("q_proposed", "p_now", "v_lower", "v_upper", "q_min", "q_max"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        object.__setattr__(self, "controllable", np.asarray(self.controllable, dtype=int))
        qb = np.zeros(n) if self.q_background is None else np.asarray(self.q_background, dtype=float)
        object.__setattr__(self, "q_background", qb)
        nc = self.controllable.shape[0]
        if self.p_now.shape != (n,) or qb.shape != (n,):
            raise ValueError(f"p_now and q_background must have length {n}")
        if self.v_lower.shape != (n,) or self.v_upper.shape != (n,):
            raise ValueError(f"voltage bounds must have length {n}")
        if self.q_proposed.shape != (nc,) or self.q_min.shape != (nc,) or self.q_max.shape != (nc,):
            raise ValueError(f"q_proposed and q bounds must have length {nc}")
        if not np.all(self.v_lower < self.v_upper):
            raise ValueError("need v_lower < v_upper")
        if not np.all(self.q_min <= self.q_max):
            raise ValueError("empty q box")

    @classmethod
    def from_feeder(cls, f: Feeder, q_proposed, p_now, q_background=None,
                    model: SensitivityModel | None = None, margin: float = 0.0):
        model = build_sensitivity(f) if model is None else model
        return cls(q_proposed, p_now, model, f.controllable,
                   f.v_lower + margin, f.v_upper - margin, f.q_min, f.q_max, q_background)

    def base_voltage(self) -> np.ndarray:
        m = self.model
        return m.v0 + m.R @ self.p_now + m.X @ self.q_background

    def full_q(self, q: np.ndarray) -> np.ndarray:
        out = self.q_background.copy()
        out[self.controllable] += q
        return out


@dataclass(frozen=True)
class ProjectionResult:
    """Outcome of a projection.

    ``active_set`` lists tight voltage constraints as constraint indices:
    ``k < N`` is the upper bound at bus position ``k``, ``k >= N`` the lower
    bound at position ``k - N``. ``duals`` uses the same indexing.
    """

    q_safe: np.ndarray
    status: Status
    active_set: np.ndarray
    kkt_residual: float
    slack_used: float
    solve_time: float
    iterations: int = 0
    duals: np.ndarray = field(default=None, repr=False)

    @property
    def active_buses(self) -> list[tuple[int, str]]:
        n = self.duals.shape[0] // 2
        return [(int(k % n), "upper" if k < n else "lower") for k in self.active_set]


class _Structure:
    """Per-model quantities reused across projections."""

    def __init__(self, model: SensitivityModel, controllable: np.ndarray):
        A = model.X[:, controllable]
        self.n = model.n
        self.A = A
        self.G = np.vstack([A, -A])
        norms = np.linalg.norm(A, axis=1)
        norms = np.concatenate([norms, norms])
        scale = norms.max() if norms.size else 0.0
        self.live = norms > 1e-12 * max(scale, 1e-300)
        self.norms = np.where(self.live, norms, 1.0)
        self.Gs = self.G[self.live] / self.norms[self.live, None]
        if self.Gs.size:
            self.L = float(np.linalg.eigvalsh(self.Gs.T @ self.Gs)[-1])
        else:
            self.L = 1.0


def check_safety(model: SensitivityModel, inj: Injections, v_lower, v_upper) -> np.ndarray:
    """Per-bus violation ``max(0, v_lower - v, v - v_upper)`` under the linear model."""
    v = predict_voltage(model, inj)
    v_lower = np.asarray(v_lower, dtype=float)
    v_upper = np.asarray(v_upper, dtype=float)
    if v_lower.shape != v.shape or v_upper.shape != v.shape:
        raise ValueError("bounds must match the number of buses")
    return np.maximum(0.0, np.maximum(v_lower - v, v - v_upper))


def project(prob: ProjectionProblem, tol: float = DEFAULT_TOL, rho: float = DEFAULT_RHO,
            max_iter: int = DEFAULT_MAX_ITER, warm_start: np.ndarray | None = None,
            structure: _Structure | None = None, polish: bool = True) -> ProjectionResult:
    """Project ``prob.q_proposed`` onto the voltage-safe set.

    ``warm_start`` is a dual vector from a previous result (``result.duals``).
    ``polish=False`` runs the dual iteration alone.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    t0 = time.perf_counter()
    st = _Structure(prob.model, prob.controllable) if structure is None else structure
    out = _solve(prob, st, tol, rho, max_iter, warm_start, polish)
    return ProjectionResult(*out[:5], time.perf_counter() - t0, *out[5:])


def _solve(prob, st, tol, rho, max_iter, warm_start, polish):
    n = st.n
    base = prob.base_voltage()
    h = np.concatenate([prob.v_upper - base, base - prob.v_lower])
    lo, hi = prob.q_min, prob.q_max
    q0 = prob.q_proposed
    nc = q0.shape[0]
    live = st.live

    # rows no controllable bus can influence: fixed violation, reported as slack
    dead_viol = np.maximum(-h[~live], 0.0)
    dead_slack = float(dead_viol.max()) if dead_viol.size else 0.0

    qc = np.clip(q0, lo, hi)
    r0 = st.G @ qc - h
    if nc == 0 or np.all(r0[live] <= 0.0):
        status = Status.OPTIMAL if dead_slack <= tol else Status.RELAXED
        active = np.flatnonzero(live & (r0 >= -tol))
        return qc, status, active, 0.0, dead_slack, 0, np.zeros(2 * n)

    Gs, L = st.Gs, st.L
    norms = st.norms[live]
    hs = h[live] / norms
    cap = rho * norms

    if warm_start is not None and warm_start.shape == (2 * n,):
        lam = np.clip(warm_start[live] * norms, 0.0, cap)
    else:
        lam = np.zeros(Gs.shape[0])

    # cheap guesses first: the warm-start support, then the violated set
    guesses = []
    if polish:
        if np.any(lam > 0):
            guesses.append(lam > 0)
        guesses.append(r0[live] > 0)
    for guess in guesses:
        hit = _polish(q0, lo, hi, Gs, hs, norms, guess, tol)
        if hit is not None:
            return _finish(hit[0], hit[1], prob, st, h, tol, dead_slack, 0)

    y = lam.copy()
    t = 1.0
    inv_L = 1.0 / L
    for it in range(1, max_iter + 1):
        q_y = np.clip(q0 - Gs.T @ y, lo, hi)
        lam_new = np.clip(y + (Gs @ q_y - hs) * inv_L, 0.0, cap)
        step = lam_new - lam
        if np.dot(lam_new - y, step) < 0.0:
            t = 1.0
            y = lam_new
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = lam_new + ((t - 1.0) / t_new) * step
            t = t_new
        lam = lam_new

        q = np.clip(q0 - Gs.T @ lam, lo, hi)
        res = (Gs @ q - hs) * norms
        sat = lam >= cap
        feas = np.max(np.where(sat, 0.0, np.maximum(res, 0.0)))
        lam_u = lam / norms
        comp = np.max(np.abs(lam_u * np.where(sat, np.minimum(res, 0.0), res)))
        if feas <= tol and comp <= tol:
            # tol bounds the voltage residual; an exact solve on the identified
            # support removes the corresponding error in q
            if polish and not np.any(sat):
                unclipped = q0 - Gs.T @ lam
                for guess in (lam > 0, res >= -tol):
                    hit = _polish(q0, lo, hi, Gs, hs, norms, guess, tol, unclipped)
                    if hit is not None:
                        return _finish(hit[0], hit[1], prob, st, h, tol, dead_slack, it)
            return _finish(q, lam, prob, st, h, tol, dead_slack, it)
        if polish and it % POLISH_EVERY == 0 and not np.any(sat):
            hit = _polish(q0, lo, hi, Gs, hs, norms, lam > 0, tol, q0 - Gs.T @ lam)
            if hit is not None:
                return _finish(hit[0], hit[1], prob, st, h, tol, dead_slack, it)

    res = _finish(q, lam, prob, st, h, tol, dead_slack, max_iter)
    return (res[0], Status.FAILED) + res[2:]


def _finish(q, lam_s, prob, st, h, tol, dead_slack, iterations):
    n = st.n
    live = st.live
    norms = st.norms[live]
    lam = np.zeros(2 * n)
    lam[live] = lam_s / norms
    res = st.G @ q - h
    viol = np.maximum(res, 0.0)
    slack = max(float(viol.max()), dead_slack)
    q_free = np.clip(prob.q_proposed - st.G.T @ lam, prob.q_min, prob.q_max)
    stationarity = float(np.max(np.abs(q - q_free))) if q.size else 0.0
    comp = float(np.max(np.abs(lam * np.minimum(res, 0.0)))) if lam.size else 0.0
    kkt = max(stationarity, comp, slack if slack > tol else 0.0)
    active = np.flatnonzero((lam > 0) | (live & (res >= -tol)))
    status = Status.OPTIMAL if slack <= tol else Status.RELAXED
    return q, status, active, kkt, (slack if status is Status.RELAXED else 0.0), iterations, lam


def _polish(q0, lo, hi, Gs, hs, norms, support, tol, box_hint=None, rounds=6):
    """Equality-constrained KKT solve on a guessed active set, refined a few times.

    ``box_hint`` is an unclipped primal estimate whose out-of-box entries
    mark the variables pinned at a bound (default: the proposal itself).
    Returns ``(q, lam_scaled)`` only if the candidate satisfies every KKT
    condition to ``tol``; ``None`` otherwise.
    """
    S = np.array(support, dtype=bool)
    hint = q0 if box_hint is None else box_hint
    at_hi = hint > hi
    at_lo = hint < lo
    m = Gs.shape[0]
    for _ in range(rounds):
        fixed = at_hi | at_lo
        free = ~fixed
        qB = np.where(at_hi, hi, lo)
        idx = np.flatnonzero(S)
        mu = np.zeros(0)
        q = q0.copy()
        q[fixed] = qB[fixed]
        if idx.size:
            Gsf = Gs[np.ix_(idx, free)]
            rhs = hs[idx] - Gs[np.ix_(idx, fixed)] @ qB[fixed]
            K = Gsf @ Gsf.T
            try:
                mu = np.linalg.solve(K, Gsf @ q0[free] - rhs)
            except np.linalg.LinAlgError:
                mu = np.linalg.lstsq(K, Gsf @ q0[free] - rhs, rcond=None)[0]
            q[free] = q0[free] - Gsf.T @ mu
        lam = np.zeros(m)
        lam[idx] = mu
        unclipped = q0 - Gs.T @ lam

        res = (Gs @ q - hs) * norms
        neg = lam < -tol * 1e-3
        viol = res > tol
        box_out = free & ((q > hi + 1e-15) | (q < lo - 1e-15))
        # box multipliers: a fixed coordinate must want to go further out
        bad_hi = at_hi & (unclipped < hi - tol)
        bad_lo = at_lo & (unclipped > lo + tol)
        if not (neg.any() or viol.any() or box_out.any() or bad_hi.any() or bad_lo.any()):
            # lstsq fallback may leave a supported constraint slack
            if idx.size and np.any((lam[idx] > 0) & (np.abs(res[idx]) > tol)):
                return None
            lam = np.maximum(lam, 0.0)
            return q, lam
        S = (S & ~neg) | viol
        at_hi = (at_hi & ~bad_hi) | (free & (q > hi))
        at_lo = (at_lo & ~bad_lo) | (free & (q < lo))
    return None


class SafetyLayer:
    """Projection bound to one feeder, carrying warm-start duals between steps.

    One instance per control loop.
    """

    def __init__(self, f: Feeder, model: SensitivityModel | None = None, tol: float = DEFAULT_TOL,
                 rho: float = DEFAULT_RHO, max_iter: int = DEFAULT_MAX_ITER, margin: float = 0.0,
                 warm_start: bool = True):
        self.feeder = f
        self.model = build_sensitivity(f) if model is None else model
        self.tol = tol
        self.rho = rho
        self.max_iter = max_iter
        self.margin = margin
        self.warm_start = warm_start
        self._structure = _Structure(self.model, f.controllable)
        self._duals = None

    def reset(self):
        self._duals = None

    def problem(self, q_proposed, p_now, q_background=None) -> ProjectionProblem:
        return ProjectionProblem.from_feeder(self.feeder, q_proposed, p_now, q_background,
                                             model=self.model, margin=self.margin)

    def project(self, q_proposed, p_now, q_background=None) -> ProjectionResult:
        prob = self.problem(q_proposed, p_now, q_background)
        res = project(prob, self.tol, self.rho, self.max_iter,
                      warm_start=self._duals if self.warm_start else None,
                      structure=self._structure)
        if self.warm_start and res.status is not Status.FAILED:
            self._duals = res.duals
        return res
