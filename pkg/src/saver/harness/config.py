"""INI experiment configuration with sections [feeder], [rl], [safety], [experiment].

Every key is optional. Unknown sections or keys are rejected so that typos
do not silently fall back to defaults. Relative paths are resolved against
the directory of the config file.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

from ..feeder import Feeder, load_feeder
from ..rl.ddpg import DDPGConfig
from ..rl.env import DEFAULT_ETA
from ..rl.training import TrainConfig
from ..safety import DEFAULT_RHO, DEFAULT_TOL
from .profiles import LoadDataset, ingest_profiles, synthetic_dataset

FULL_RES_MINUTES = 0.1  # 6 s


class ConfigError(ValueError):
    pass


@dataclass
class FeederSection:
    path: str = "builtin:ieee13"
    q_limit: float | None = None


@dataclass
class RLSection:
    episodes: int = 40
    seed: int = 0
    eta: float = DEFAULT_ETA
    warmup_steps: int = 500
    updates_per_step: int = 1
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


@dataclass
class SafetySection:
    tol: float = DEFAULT_TOL
    rho: float = DEFAULT_RHO
    margin: float = 0.0
    max_iter: int = 10_000


@dataclass
class ExperimentSection:
    data: str = "synthetic"       # "synthetic" or a demand CSV path
    pv_data: str = ""             # optional normalised PV CSV for CSV datasets
    days: int = 40
    test_days: int = 20
    step_minutes: float = 5.0
    full_res: bool = False
    seed: int = 1
    peak_mw: float | None = None
    pv_capacity_mw: float = 0.0
    pv_buses: tuple[int, ...] | None = None   # default: every controllable bus
    cloudiness: float = 0.3
    power_factor: float | None = None
    output: str = "results"
    controller: str = "safe_rl"   # default for ``saver evaluate``


@dataclass
class ExperimentConfig:
    feeder: FeederSection = field(default_factory=FeederSection)
    rl: RLSection = field(default_factory=RLSection)
    safety: SafetySection = field(default_factory=SafetySection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    base_dir: Path = field(default_factory=Path.cwd)

    # -- builders ---------------------------------------------------------
    def _resolve(self, p: str) -> str:
        if p.startswith("builtin:"):
            return p
        path = Path(p)
        return str(path if path.is_absolute() else self.base_dir / path)

    @property
    def step_minutes(self) -> float:
        return FULL_RES_MINUTES if self.experiment.full_res else self.experiment.step_minutes

    def build_feeder(self) -> Feeder:
        f = load_feeder(self._resolve(self.feeder.path))
        if self.feeder.q_limit is not None:
            f = f.with_q_limits(-self.feeder.q_limit, self.feeder.q_limit)
        return f

    def build_dataset(self, f: Feeder) -> LoadDataset:
        e = self.experiment
        pv_buses = e.pv_buses if e.pv_buses is not None else [int(c) + 1 for c in f.controllable]
        if e.data == "synthetic":
            return synthetic_dataset(
                f, e.days, self.step_minutes, seed=e.seed, peak_mw=e.peak_mw,
                pv_buses=pv_buses, pv_capacity_mw=e.pv_capacity_mw, cloudiness=e.cloudiness,
                test_days=e.test_days, power_factor=e.power_factor)
        return ingest_profiles(
            self._resolve(e.data), f, step_minutes=self.step_minutes,
            pv_csv=self._resolve(e.pv_data) if e.pv_data else None, pv_buses=pv_buses,
            pv_capacity_mw=e.pv_capacity_mw, peak_mw=e.peak_mw, power_factor=e.power_factor,
            test_days=e.test_days)

    def safety_kwargs(self) -> dict:
        s = self.safety
        return {"tol": s.tol, "rho": s.rho, "max_iter": s.max_iter, "margin": s.margin}

    def train_config(self, safe: bool = False) -> TrainConfig:
        r = self.rl
        agent = DDPGConfig(**{k.name: getattr(r, k.name) for k in fields(DDPGConfig) if hasattr(r, k.name)})
        return TrainConfig(episodes=r.episodes, seed=r.seed, safe=safe, eta=r.eta,
                           warmup_steps=r.warmup_steps, updates_per_step=r.updates_per_step,
                           safety_tol=self.safety.tol, safety_rho=self.safety.rho,
                           safety_margin=self.safety.margin, agent=agent)

    def output_dir(self) -> Path:
        return Path(self._resolve(self.experiment.output))


_SECTIONS = {"feeder": FeederSection, "rl": RLSection, "safety": SafetySection,
             "experiment": ExperimentSection}


def _convert(raw: str, default, where: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            return tuple(int(t) for t in raw.replace(",", " ").split())
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, str):
            return raw
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {type(default).__name__}") from None
    # fields whose default is None are optional numbers or bus lists
    if raw.lower() in ("", "none"):
        return None
    try:
        if where.endswith("pv_buses"):
            return tuple(int(t) for t in raw.replace(",", " ").split())
        return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r}") from None


def loads_config(text: str, base_dir=None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    sections = {}
    for name in cp.sections():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}]; expected one of {sorted(_SECTIONS)}")
    for name, cls in _SECTIONS.items():
        obj = cls()
        if cp.has_section(name):
            known = {f.name for f in fields(cls)}
            for key, raw in cp.items(name):
                if key not in known:
                    raise ConfigError(f"[{name}] unknown key {key!r}")
                setattr(obj, key, _convert(raw, getattr(obj, key), f"[{name}] {key}"))
        sections[name] = obj
    cfg = ExperimentConfig(**sections)
    if base_dir is not None:
        cfg.base_dir = Path(base_dir)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return loads_config(path.read_text(), base_dir=path.parent)
