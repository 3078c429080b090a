"""Reference controllers: incremental linear volt-var feedback and no-op."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .feeder import Feeder
from .linearization import SensitivityModel, build_sensitivity


def default_gain(f: Feeder, model: SensitivityModel | None = None) -> float:
    """``0.5 / lambda_max(2 X_CC)``: half the stability limit of the feedback loop."""
    model = build_sensitivity(f) if model is None else model
    c = f.controllable
    lam = np.linalg.eigvalsh(2.0 * model.X[np.ix_(c, c)])[-1]
    return 0.5 / lam


@dataclass
class LinearPolicyState:
    q_prev: np.ndarray
    alpha: float
    v_ref: float

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


class LinearPolicy:
    """Integral volt-var control ``q <- clip(q_prev - alpha (v - v_ref))`` at each inverter.

    Each controllable bus reacts to its own measured squared voltage only.
    """

    name = "linear"

    def __init__(self, f: Feeder, alpha: float | None = None, v_ref: float | None = None,
                 model: SensitivityModel | None = None):
        self.feeder = f
        self.q_min, self.q_max = f.q_min, f.q_max
        self.alpha = default_gain(f, model) if alpha is None else alpha
        self.v_ref = f.v0 if v_ref is None else v_ref
        self.reset()

    def reset(self):
        self.state = LinearPolicyState(np.zeros(len(self.feeder.controllable)), self.alpha, self.v_ref)

    def step(self, v_measured: np.ndarray) -> np.ndarray:
        v_measured = np.asarray(v_measured, dtype=float)
        if v_measured.shape != (self.feeder.n,):
            raise ValueError(f"expected {self.feeder.n} voltages, got {v_measured.shape}")
        return linear_policy_step(self.state, v_measured[self.feeder.controllable], self.q_min, self.q_max)

    def act(self, state) -> np.ndarray:
        return self.step(state.v)


def linear_policy_step(st: LinearPolicyState, v_ctrl: np.ndarray, q_min, q_max) -> np.ndarray:
    """One feedback update on the controllable-bus voltages ``v_ctrl``; mutates ``st``."""
    if v_ctrl.shape != st.q_prev.shape:
        raise ValueError("voltage and action dimensions differ")
    q = np.clip(st.q_prev - st.alpha * (v_ctrl - st.v_ref), q_min, q_max)
    st.q_prev = q
    return q.copy()


def noop_policy(f: Feeder, state=None) -> np.ndarray:
    return np.zeros(len(f.controllable))


class NoopPolicy:
    name = "noop"

    def __init__(self, f: Feeder):
        self.feeder = f

    def reset(self):
        pass

    def act(self, state) -> np.ndarray:
        return noop_policy(self.feeder, state)
