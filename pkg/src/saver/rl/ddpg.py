"""Deterministic actor-critic (DDPG) in plain numpy."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .networks import MLP, Adam

CHECKPOINT_VERSION = 1


@dataclass
class DDPGConfig:
    hidden: tuple[int, ...] = (64, 64)
    gamma: float = 0.99
    tau: float = 0.005
    lr_actor: float = 1e-3
    lr_critic: float = 1e-3
    batch_size: int = 128
    buffer_size: int = 100_000
    noise_sigma: float = 0.05
    noise_decay: float = 0.97
    noise_min: float = 0.005
    reward_scale: float = 1.0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


class ReplayBuffer:
    """Fixed-capacity ring of ``(s, a, r, s', terminal)`` transitions."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        self.capacity = int(capacity)
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, state_dim))
        self.done = np.zeros(capacity)
        self.index = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, s, a, r, s2, done=False):
        i = self.index
        self.s[i], self.a[i], self.r[i], self.s2[i], self.done[i] = s, a, r, s2, float(done)
        self.index = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, self.size, size=batch_size)
        return self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.done[idx]


@dataclass
class UpdateStats:
    critic_loss: float
    actor_objective: float


class DDPG:
    """Actor-critic learner for box-bounded continuous actions.

    Observations are standardised with fixed ``obs_offset``/``obs_scale``;
    actions are handled internally in ``[-1, 1]`` and mapped affinely onto
    ``[a_low, a_high]``.
    """

    def __init__(self, state_dim, a_low, a_high, config: DDPGConfig | None = None,
                 obs_offset=None, obs_scale=None, seed: int = 0):
        self.config = config or DDPGConfig()
        self.state_dim = int(state_dim)
        self.a_low = np.asarray(a_low, dtype=float)
        self.a_high = np.asarray(a_high, dtype=float)
        self.action_dim = self.a_low.shape[0]
        self.obs_offset = np.zeros(state_dim) if obs_offset is None else np.asarray(obs_offset, float)
        self.obs_scale = np.ones(state_dim) if obs_scale is None else np.asarray(obs_scale, float)
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        c = self.config
        self.actor = MLP((state_dim, *c.hidden, self.action_dim), self.rng, output="tanh")
        self.critic = MLP((state_dim + self.action_dim, *c.hidden, 1), self.rng)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Adam(self.actor.params, c.lr_actor)
        self.critic_opt = Adam(self.critic.params, c.lr_critic)
        self.noise_sigma = c.noise_sigma
        self.updates = 0

    # action scaling
    @property
    def _mid(self):
        return 0.5 * (self.a_high + self.a_low)

    @property
    def _half(self):
        return np.maximum(0.5 * (self.a_high - self.a_low), 1e-12)

    def to_unit(self, a):
        return (a - self._mid) / self._half

    def from_unit(self, u):
        return self._mid + self._half * u

    def features(self, s):
        return (s - self.obs_offset) / self.obs_scale

    def act(self, s: np.ndarray, explore: bool = False) -> np.ndarray:
        u = self.actor(self.features(s)[None, :])[0]
        a = self.from_unit(u)
        if explore:
            a = a + self.rng.normal(0.0, 1.0, self.action_dim) * self.noise_sigma * (self.a_high - self.a_low)
        return np.clip(a, self.a_low, self.a_high)

    def decay_noise(self):
        c = self.config
        self.noise_sigma = max(c.noise_min, self.noise_sigma * c.noise_decay)

    def q_value(self, s, a):
        x = np.concatenate([self.features(s), self.to_unit(a)], axis=1)
        return self.critic(x)[:, 0]

    def critic_loss_and_grads(self, s, a, y):
        """Mean squared TD error and its parameter gradients."""
        x = np.concatenate([self.features(s), self.to_unit(a)], axis=1)
        qv, cache = self.critic.forward(x, keep=True)
        err = qv[:, 0] - y
        loss = float(np.mean(err * err))
        grads, _ = self.critic.backward(cache, (2.0 / len(y)) * err[:, None])
        return loss, grads

    def actor_objective_and_grads(self, s):
        """Mean critic value of the actor's actions and gradients of its negation."""
        f = self.features(s)
        u, a_cache = self.actor.forward(f, keep=True)
        x = np.concatenate([f, u], axis=1)
        qv, c_cache = self.critic.forward(x, keep=True)
        n = len(s)
        _, dx = self.critic.backward(c_cache, np.full((n, 1), -1.0 / n))
        grads, _ = self.actor.backward(a_cache, dx[:, self.state_dim:])
        return float(np.mean(qv)), grads

    def update(self, batch) -> UpdateStats:
        s, a, r, s2, done = batch
        c = self.config
        f2 = self.features(s2)
        u2 = self.actor_target(f2)
        q2 = self.critic_target(np.concatenate([f2, u2], axis=1))[:, 0]
        y = c.reward_scale * r + c.gamma * (1.0 - done) * q2
        if not np.all(np.isfinite(y)):
            raise FloatingPointError(
                f"critic loss became non-finite after {self.updates} updates: TD targets are not finite "
                f"(lr_critic={c.lr_critic}, reward_scale={c.reward_scale})")

        loss, cgrads = self.critic_loss_and_grads(s, a, y)
        if not np.isfinite(loss):
            raise FloatingPointError(
                f"critic loss became {loss} after {self.updates} updates "
                f"(lr_critic={c.lr_critic}, reward_scale={c.reward_scale})")
        self.critic_opt.step(cgrads)

        obj, agrads = self.actor_objective_and_grads(s)
        if not np.isfinite(obj):
            raise FloatingPointError(f"actor objective became {obj} after {self.updates} updates")
        self.actor_opt.step(agrads)

        self.actor_target.soft_update(self.actor, c.tau)
        self.critic_target.soft_update(self.critic, c.tau)
        self.updates += 1
        return UpdateStats(loss, obj)

    # ------------------------------------------------------------------
    def state_dict(self) -> dict:
        out = {}
        for name, net in (("actor", self.actor), ("critic", self.critic),
                          ("actor_target", self.actor_target), ("critic_target", self.critic_target)):
            for k, p in enumerate(net.params):
                out[f"{name}.{k}"] = p
        for name, opt in (("actor_opt", self.actor_opt), ("critic_opt", self.critic_opt)):
            for k, (m, v) in enumerate(zip(opt.m, opt.v)):
                out[f"{name}.m.{k}"] = m
                out[f"{name}.v.{k}"] = v
            out[f"{name}.t"] = np.array(opt.t)
        out["a_low"], out["a_high"] = self.a_low, self.a_high
        out["obs_offset"], out["obs_scale"] = self.obs_offset, self.obs_scale
        out["noise_sigma"] = np.array(self.noise_sigma)
        out["updates"] = np.array(self.updates)
        return out

    def save(self, path, metadata: dict | None = None):
        meta = {"version": CHECKPOINT_VERSION, "config": asdict(self.config),
                "state_dim": self.state_dim, "seed": self.seed, **(metadata or {})}
        np.savez(path, __meta__=np.array(json.dumps(meta)), **self.state_dict())

    @classmethod
    def load(cls, path) -> tuple["DDPG", dict]:
        with np.load(path) as z:
            meta = json.loads(str(z["__meta__"]))
            if meta.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"unsupported checkpoint version {meta.get('version')}")
            arrays = {k: z[k] for k in z.files if k != "__meta__"}
        agent = cls(meta["state_dim"], arrays["a_low"], arrays["a_high"], DDPGConfig(**meta["config"]),
                    arrays["obs_offset"], arrays["obs_scale"], seed=meta["seed"])
        for name in ("actor", "critic", "actor_target", "critic_target"):
            net = getattr(agent, name)
            for k in range(len(net.params)):
                net.params[k][...] = arrays[f"{name}.{k}"]
        for name in ("actor_opt", "critic_opt"):
            opt = getattr(agent, name)
            for k in range(len(opt.m)):
                opt.m[k][...] = arrays[f"{name}.m.{k}"]
                opt.v[k][...] = arrays[f"{name}.v.{k}"]
            opt.t = int(arrays[f"{name}.t"])
        agent.noise_sigma = float(arrays["noise_sigma"])
        agent.updates = int(arrays["updates"])
        return agent, meta
