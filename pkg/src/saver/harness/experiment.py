"""Closed-loop evaluation of controllers on the nonlinear feeder."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..baselines import LinearPolicy, NoopPolicy
from ..feeder import Feeder
from ..linearization import SensitivityModel, build_sensitivity, predict_voltage
from ..powerflow import Injections, PowerFlowError
from ..rl.ddpg import DDPG
from ..rl.env import VoltageEnv, merge_q
from ..safety import SafetyLayer, Status

CONTROLLERS = ("noop", "linear", "rl", "safe_rl")

# status column codes
NO_PROJECTION = -1
STATUS_CODE = {Status.OPTIMAL: 0, Status.RELAXED: 1, Status.FAILED: 2}


class RLController:
    name = "rl"

    def __init__(self, agent: DDPG):
        self.agent = agent

    def reset(self):
        pass

    def act(self, state) -> np.ndarray:
        return self.agent.act(state.vector(), explore=False)


class SafeController:
    """Any controller followed by the projection layer."""

    name = "safe_rl"

    def __init__(self, inner, layer: SafetyLayer):
        self.inner = inner
        self.layer = layer

    def reset(self):
        self.inner.reset()
        self.layer.reset()


def make_controller(name: str, f: Feeder, agent: DDPG | None = None, model=None,
                    safety_kwargs: dict | None = None):
    if name == "noop":
        return NoopPolicy(f)
    if name == "linear":
        return LinearPolicy(f, model=model)
    if name in ("rl", "safe_rl"):
        if agent is None:
            raise ValueError(f"controller {name!r} needs a trained agent")
        inner = RLController(agent)
        if name == "rl":
            return inner
        return SafeController(inner, SafetyLayer(f, model, **(safety_kwargs or {})))
    raise ValueError(f"unknown controller {name!r}; choose from {CONTROLLERS}")


@dataclass
class EpisodeRecord:
    """Per-step trace of one evaluated day; every array has ``T`` rows."""

    method: str
    day: int
    state: np.ndarray            # (T, 2N) observation seen by the controller
    raw_action: np.ndarray       # (T, C) controller output
    action: np.ndarray           # (T, C) applied action (projected for safe_rl)
    status: np.ndarray           # (T,) projection status code, -1 without projection
    active: np.ndarray           # (T,) number of tight voltage constraints
    slack: np.ndarray            # (T,) relaxation slack
    v: np.ndarray                # (T, N+1) nonlinear squared voltages, all buses
    v_linear: np.ndarray         # (T, N) linear-model prediction for the applied action
    reward: np.ndarray           # (T,)
    controller_time: np.ndarray  # (T,) seconds
    projection_time: np.ndarray  # (T,) seconds

    def __len__(self):
        return self.reward.shape[0]

    @property
    def step_time(self) -> np.ndarray:
        return self.controller_time + self.projection_time


def evaluate(f: Feeder, controller, dataset, days=None, eta: float = 0.1,
             model: SensitivityModel | None = None) -> list[EpisodeRecord]:
    """Run ``controller`` over each requested day (default: the ``test`` split).

    Timing covers controller inference and projection only; the power flow
    plays the role of the physical grid and is excluded.
    """
    model = build_sensitivity(f) if model is None else model
    if days is None:
        days = dataset.days("test")
        if days.size == 0:
            days = dataset.days()
    layer = getattr(controller, "layer", None)
    inner = getattr(controller, "inner", controller)
    records = []
    for day in days:
        day = int(day)
        p_day, q_day = dataset.p[day], dataset.q[day]
        env = VoltageEnv(f, p_day, q_day, eta)
        s = env.reset()
        controller.reset()
        T = env.horizon
        n, c = f.n, len(f.controllable)
        rec = EpisodeRecord(
            controller.name, day, np.zeros((T, 2 * n)), np.zeros((T, c)), np.zeros((T, c)),
            np.full(T, NO_PROJECTION), np.zeros(T, dtype=int), np.zeros(T), np.zeros((T, n + 1)),
            np.zeros((T, n)), np.zeros(T), np.zeros(T), np.zeros(T))
        for t in range(T):
            rec.state[t] = s.vector()
            t0 = time.perf_counter()
            a = inner.act(s)
            t1 = time.perf_counter()
            rec.raw_action[t] = a
            if layer is not None:
                res = layer.project(a, s.p, q_day[t])
                t2 = time.perf_counter()
                a = res.q_safe
                rec.status[t] = STATUS_CODE[res.status]
                rec.active[t] = len(res.active_set)
                rec.slack[t] = res.slack_used
                rec.projection_time[t] = t2 - t1
            rec.controller_time[t] = t1 - t0
            rec.action[t] = a
            q_full = merge_q(f, a, q_day[t])
            rec.v_linear[t] = predict_voltage(model, Injections(s.p, q_full))
            s2, r, _, sol = env.step(a)
            if sol is None:
                raise PowerFlowError(f"{controller.name}: power flow failed on day {day}, step {t}")
            rec.v[t] = sol.v
            rec.reward[t] = r
            s = s2
        records.append(rec)
    return records
