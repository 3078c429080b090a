"""Nonlinear DistFlow power flow on radial feeders.

Sign convention: injections are positive when power flows *into* the grid at a
bus (generation); loads are negative injections. Line flows are measured at the
sending (parent) end, positive in the parent -> child direction.

The solver is a backward/forward sweep written with the path-incidence matrix
of the feeder, so each sweep is a handful of dense mat-vecs:

* backward: ``P = S_bus^T (-p) + S_line^T (r * l)`` where ``S`` holds subtree
  membership; flows are downstream demand plus downstream series losses;
* forward: ``v = v0 - Path (2 (r P + x Q) - (r^2 + x^2) l)``;
* currents: ``l = (P^2 + Q^2) / v_from``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .feeder import Feeder

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 200


class PowerFlowError(RuntimeError):
    """Sweep failed to converge. Carries the last iterate for diagnostics."""

    def __init__(self, msg, iterations=0, residual=np.inf, solution=None):
        super().__init__(msg)
        self.iterations = iterations
        self.residual = residual
        self.solution = solution


class VoltageCollapseError(PowerFlowError):
    """A squared voltage became non-positive during the sweep."""


@dataclass(frozen=True)
class Injections:
    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        if p.ndim != 1 or p.shape != q.shape:
            raise ValueError(f"p and q must be 1-d of equal length, got {p.shape} and {q.shape}")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise ValueError("injections must be finite")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @classmethod
    def zeros(cls, n: int) -> "Injections":
        return cls(np.zeros(n), np.zeros(n))

    def scaled(self, k: float) -> "Injections":
        return Injections(k * self.p, k * self.q)


@dataclass(frozen=True)
class PowerFlowSolution:
    """Converged DistFlow state.

    ``v`` covers all buses (index = bus id, ``v[0] = v0``). ``p_flow``,
    ``q_flow`` and ``l`` are indexed like ``Feeder.lines``.
    """

    v: np.ndarray
    p_flow: np.ndarray
    q_flow: np.ndarray
    l: np.ndarray
    iterations: int
    residual: float

    @property
    def v_magnitude(self) -> np.ndarray:
        return np.sqrt(self.v)


def _check_dims(f: Feeder, inj: Injections):
    if inj.p.shape != (f.n,):
        raise ValueError(f"injections have length {inj.p.shape[0]}, feeder has {f.n} non-root buses")


class _Sweep:
    """Matrices shared by every sweep on one feeder."""

    def __init__(self, f: Feeder):
        path = f.path_matrix                          # bus x line
        self.path = path
        self.bus_sub = path.T                         # line x bus: bus downstream of line
        # line m is downstream of (or equal to) line k iff m's receiving bus is downstream of k
        self.line_sub = path.T[:, f.to_bus - 1]
        self.r = f.r
        self.x = f.x
        self.z2 = self.r ** 2 + self.x ** 2
        self.from_bus = f.from_bus


_SWEEP_CACHE: dict[int, tuple[Feeder, _Sweep]] = {}


def _sweep_for(f: Feeder) -> _Sweep:
    hit = _SWEEP_CACHE.get(id(f))
    if hit is not None and hit[0] is f:
        return hit[1]
    sw = _Sweep(f)
    if len(_SWEEP_CACHE) > 64:
        _SWEEP_CACHE.clear()
    _SWEEP_CACHE[id(f)] = (f, sw)
    return sw


def solve_distflow(f: Feeder, inj: Injections, tol: float = DEFAULT_TOL,
                   max_iter: int = DEFAULT_MAX_ITER) -> PowerFlowSolution:
    """Solve the DistFlow equations by backward/forward sweep from a flat start.

    Iterates until the squared-voltage update is below ``tol`` in max-norm and
    the independent residual check is also within ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    _check_dims(f, inj)
    sw = _sweep_for(f)

    demand_p = sw.bus_sub @ (-inj.p)
    demand_q = sw.bus_sub @ (-inj.q)
    v = np.full(f.n + 1, f.v0)
    l = np.zeros(f.n)
    resid = np.inf
    for it in range(1, max_iter + 1):
        P = demand_p + sw.line_sub @ (sw.r * l)
        Q = demand_q + sw.line_sub @ (sw.x * l)
        v_new = np.empty_like(v)
        v_new[0] = f.v0
        v_new[1:] = f.v0 - sw.path @ (2.0 * (sw.r * P + sw.x * Q) - sw.z2 * l)
        if not np.all(v_new[1:] > 0):
            bad = int(np.argmin(v_new[1:])) + 1
            raise VoltageCollapseError(
                f"voltage collapse at bus {bad} (v={v_new[bad]:.4g}) on iteration {it}",
                iterations=it)
        change = np.max(np.abs(v_new - v))
        v = v_new
        l = (P ** 2 + Q ** 2) / v[sw.from_bus]
        if change < tol:
            sol = PowerFlowSolution(v, P, Q, l, it, 0.0)
            resid = float(np.max(np.abs(residuals(f, inj, sol))))
            if resid <= tol:
                return PowerFlowSolution(v, P, Q, l, it, resid)
    sol = PowerFlowSolution(v, P, Q, l, max_iter, resid)
    if not np.isfinite(resid):
        resid = float(np.max(np.abs(residuals(f, inj, sol))))
    raise PowerFlowError(
        f"sweep did not converge in {max_iter} iterations (residual {resid:.3g})",
        iterations=max_iter, residual=resid, solution=sol)


def residuals(f: Feeder, inj: Injections, sol: PowerFlowSolution) -> np.ndarray:
    """Mismatch of the four DistFlow equation families.

    Evaluated bus by bus from the feeder's line list, independent of the
    solver's matrices. Returns ``[active balance (N), reactive balance (N),
    voltage drop (N), current definition (N)]`` where the first two blocks are
    indexed by receiving bus ``j - 1`` and the last two by line.
    """
    _check_dims(f, inj)
    n = f.n
    if sol.v.shape != (n + 1,) or sol.p_flow.shape != (n,) or sol.l.shape != (n,):
        raise ValueError("solution dimensions do not match the feeder")
    out_p = np.zeros(n + 1)
    out_q = np.zeros(n + 1)
    for k, ln in enumerate(f.lines):
        out_p[ln.from_bus] += sol.p_flow[k]
        out_q[ln.from_bus] += sol.q_flow[k]

    bal_p = np.zeros(n)
    bal_q = np.zeros(n)
    drop = np.zeros(n)
    cur = np.zeros(n)
    for k, ln in enumerate(f.lines):
        i, j = ln.from_bus, ln.to_bus
        pk, qk, lk = sol.p_flow[k], sol.q_flow[k], sol.l[k]
        bal_p[j - 1] = -inj.p[j - 1] - (pk - ln.r * lk - out_p[j])
        bal_q[j - 1] = -inj.q[j - 1] - (qk - ln.x * lk - out_q[j])
        drop[k] = sol.v[j] - (sol.v[i] - 2.0 * (ln.r * pk + ln.x * qk) + (ln.r ** 2 + ln.x ** 2) * lk)
        cur[k] = lk - (pk ** 2 + qk ** 2) / sol.v[i]
    return np.concatenate([bal_p, bal_q, drop, cur])


def total_loss(f: Feeder, sol: PowerFlowSolution) -> float:
    """Active power dissipated in series resistances."""
    return float(np.sum(f.r * sol.l))
