"""Voltage-control MDP driven by the nonlinear power flow.

At step ``t`` the agent observes ``s = (v, p)``: the squared voltages left by
the previous step and the active injections it must serve now. It chooses
reactive injections at the controllable buses; the power flow is solved for
``(p, q_background + q)`` and the reward is the negated cost

    r = -(||v - v0||^2 + eta * ||q||^2)

so that maximising return minimises voltage deviation plus control effort.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..feeder import Feeder
from ..powerflow import Injections, PowerFlowError, PowerFlowSolution, solve_distflow

FAILURE_REWARD = -10.0
DEFAULT_ETA = 0.1


@dataclass(frozen=True)
class State:
    v: np.ndarray
    p: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.v, self.p])


def reward(v: np.ndarray, q: np.ndarray, v0: float, eta: float = DEFAULT_ETA) -> float:
    dv = v - v0
    return -float(dv @ dv + eta * (q @ q))


def merge_q(f: Feeder, q_ctrl: np.ndarray, q_background: np.ndarray) -> np.ndarray:
    q = np.array(q_background, dtype=float)
    q[f.controllable] += q_ctrl
    return q


def env_step(f: Feeder, s: State, q_ctrl: np.ndarray, p_next: np.ndarray,
             q_background: np.ndarray, eta: float = DEFAULT_ETA):
    """Apply ``q_ctrl`` at the current injections ``s.p``.

    Returns ``(s_next, r, solution)``. A power flow that fails to converge
    yields ``FAILURE_REWARD`` with ``solution=None``; callers end the episode.
    """
    q_full = merge_q(f, q_ctrl, q_background)
    try:
        sol = solve_distflow(f, Injections(s.p, q_full))
    except PowerFlowError:
        return s, FAILURE_REWARD, None
    v = sol.v[1:]
    return State(v, np.asarray(p_next, dtype=float)), reward(v, q_ctrl, f.v0, eta), sol


class VoltageEnv:
    """Episode wrapper over one day of exogenous injections.

    ``p`` and ``q_background`` have shape ``(T, N)``.
    """

    def __init__(self, f: Feeder, p: np.ndarray, q_background: np.ndarray, eta: float = DEFAULT_ETA):
        self.feeder = f
        self.p = np.asarray(p, dtype=float)
        self.q_background = np.asarray(q_background, dtype=float)
        if self.p.shape != self.q_background.shape or self.p.shape[1] != f.n:
            raise ValueError("p and q_background must both have shape (T, N)")
        self.eta = eta
        self.t = 0
        self.state: State | None = None

    @property
    def horizon(self) -> int:
        return self.p.shape[0]

    def reset(self) -> State:
        """Initial voltages are those of the uncontrolled grid at ``t = 0``."""
        self.t = 0
        sol = solve_distflow(self.feeder, Injections(self.p[0], self.q_background[0]))
        self.state = State(sol.v[1:], self.p[0].copy())
        return self.state

    def step(self, q_ctrl: np.ndarray) -> tuple[State, float, bool, PowerFlowSolution | None]:
        t = self.t
        last = t + 1 >= self.horizon
        p_next = self.p[t] if last else self.p[t + 1]
        s_next, r, sol = env_step(self.feeder, self.state, q_ctrl, p_next,
                                  self.q_background[t], self.eta)
        self.t = t + 1
        self.state = s_next
        return s_next, r, last or sol is None, sol
