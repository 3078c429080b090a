"""Episode loop for DDPG, optionally with the safety layer in the loop."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, fields

import numpy as np

from ..feeder import Feeder
from ..linearization import build_sensitivity, predict_voltage
from ..powerflow import Injections
from ..safety import DEFAULT_RHO, DEFAULT_TOL, SafetyLayer, Status
from .ddpg import DDPG, DDPGConfig, ReplayBuffer
from .env import DEFAULT_ETA, VoltageEnv, merge_q


@dataclass
class TrainConfig:
    episodes: int = 40
    seed: int = 0
    safe: bool = False
    eta: float = DEFAULT_ETA
    warmup_steps: int = 500
    updates_per_step: int = 1
    max_steps: int | None = None
    safety_tol: float = DEFAULT_TOL
    safety_rho: float = DEFAULT_RHO
    safety_margin: float = 0.0
    agent: DDPGConfig = field(default_factory=DDPGConfig)


@dataclass
class EpisodeLog:
    episode: int
    day: int
    ret: float
    violations: int
    relaxed: int
    max_linear_violation: float
    critic_loss: float
    actor_objective: float
    wall_time: float


class TrainingLog(list):
    """List of ``EpisodeLog`` rows with CSV export."""

    columns = [f.name for f in fields(EpisodeLog)]

    def returns(self) -> np.ndarray:
        return np.array([e.ret for e in self])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            for e in self:
                w.writerow([repr(getattr(e, c)) if isinstance(getattr(e, c), float) else getattr(e, c)
                            for c in self.columns])


def make_agent(f: Feeder, dataset_p: np.ndarray, config: TrainConfig) -> DDPG:
    """Agent sized for ``f`` with observation scaling taken from the data range."""
    n = f.n
    p_scale = max(float(np.abs(dataset_p).max()), 1e-6)
    offset = np.concatenate([np.full(n, f.v0), np.zeros(n)])
    scale = np.concatenate([np.full(n, f.v_upper[0] - f.v0), np.full(n, p_scale)])
    return DDPG(2 * n, f.q_min, f.q_max, config.agent, offset, scale, seed=config.seed)


def train(f: Feeder, dataset, config: TrainConfig, agent: DDPG | None = None,
          progress=None) -> tuple[DDPG, TrainingLog]:
    """Train on days drawn uniformly from the dataset's ``train`` split.

    With ``config.safe`` every proposed action is projected before it is
    applied and the projected action is what enters the replay buffer.
    ``violations`` counts bus-steps outside the band under the nonlinear power
    flow; ``max_linear_violation`` is the worst linear-model violation over
    steps whose projection was not relaxed (safe mode only).
    """
    days = dataset.days("train")
    if days.size == 0:
        days = dataset.days()
    agent = make_agent(f, dataset.p[days], config) if agent is None else agent
    buffer = ReplayBuffer(config.agent.buffer_size, agent.state_dim, agent.action_dim)
    layer = None
    model = build_sensitivity(f)
    if config.safe:
        layer = SafetyLayer(f, model, tol=config.safety_tol, rho=config.safety_rho,
                            margin=config.safety_margin)
    rng = np.random.default_rng(config.seed + 1)
    log = TrainingLog()
    v_lo, v_hi = f.v_lower, f.v_upper

    for ep in range(config.episodes):
        t_start = time.perf_counter()
        day = int(days[rng.integers(0, days.size)])
        p_day, q_day = dataset.p[day], dataset.q[day]
        if config.max_steps is not None:
            p_day, q_day = p_day[: config.max_steps], q_day[: config.max_steps]
        env = VoltageEnv(f, p_day, q_day, config.eta)
        s = env.reset()
        if layer is not None:
            layer.reset()
        ret = 0.0
        viol = relaxed = 0
        worst_lin = 0.0
        losses, objs = [], []
        done = False
        while not done:
            t = env.t
            x = s.vector()
            a = agent.act(x, explore=True)
            if layer is not None:
                res = layer.project(a, s.p, q_day[t])
                a = res.q_safe
                if res.status is Status.RELAXED:
                    relaxed += 1
                else:
                    v_lin = predict_voltage(model, Injections(s.p, merge_q(f, a, q_day[t])))
                    worst_lin = max(worst_lin, float(np.max(np.maximum(v_lin - v_hi, v_lo - v_lin))))
            s2, r, done, sol = env.step(a)
            if sol is not None:
                v = sol.v[1:]
                viol += int(np.sum((v < v_lo) | (v > v_hi)))
            buffer.add(x, a, r, s2.vector(), sol is None)
            ret += r
            s = s2
            if len(buffer) >= max(config.warmup_steps, config.agent.batch_size):
                for _ in range(config.updates_per_step):
                    st = agent.update(buffer.sample(config.agent.batch_size, agent.rng))
                    losses.append(st.critic_loss)
                    objs.append(st.actor_objective)
        agent.decay_noise()
        entry = EpisodeLog(ep, day, ret, viol, relaxed, max(worst_lin, 0.0),
                           float(np.mean(losses)) if losses else float("nan"),
                           float(np.mean(objs)) if objs else float("nan"),
                           time.perf_counter() - t_start)
        log.append(entry)
        if progress is not None:
            progress(entry)
    return agent, log
