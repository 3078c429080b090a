"""Named experiment setups shared by the tests, the demos and the CLI."""

from __future__ import annotations

from dataclasses import dataclass

from ..feeder import Feeder, chain_feeder, ieee13
from .profiles import LoadDataset, synthetic_dataset


@dataclass(frozen=True)
class StressScenario:
    """Heavy evening load plus oversized, fast-clouding PV on the 13-bus feeder.

    Without control roughly a fifth of all bus-steps leave the band: the
    evening peak drags the far buses under the lower limit and passing
    clouds make the noon voltage swing by several percent within one step.
    """

    q_limit: float = 1.0
    peak_mw: float = 4.2
    pv_capacity_mw: float = 18.0
    cloudiness: float = 1.0
    power_factor: float = 0.92
    eta: float = 1.0
    safety_margin: float = 0.012
    train_days: int = 20
    test_days: int = 20
    step_minutes: float = 5.0
    seed: int = 1

    def feeder(self) -> Feeder:
        return ieee13().with_q_limits(-self.q_limit, self.q_limit)

    def dataset(self, f: Feeder | None = None) -> LoadDataset:
        f = self.feeder() if f is None else f
        pv_buses = [int(c) + 1 for c in f.controllable]
        return synthetic_dataset(
            f, self.train_days + self.test_days, self.step_minutes, seed=self.seed,
            peak_mw=self.peak_mw, pv_buses=pv_buses, pv_capacity_mw=self.pv_capacity_mw,
            cloudiness=self.cloudiness, test_days=self.test_days, power_factor=self.power_factor)


@dataclass(frozen=True)
class ToyScenario:
    """Head plus two buses in a chain, both with inverters.

    A single repeated day at 15-minute steps keeps training short and makes
    episode returns directly comparable.
    """

    r: float = 0.02
    x: float = 0.04
    q_limit: float = 0.5
    peak_mw: float = 2.0
    power_factor: float = 0.9
    days: int = 1
    step_minutes: float = 15.0
    seed: int = 3

    def feeder(self) -> Feeder:
        return chain_feeder(2, self.r, self.x, q_limit=self.q_limit)

    def dataset(self, f: Feeder | None = None) -> LoadDataset:
        f = self.feeder() if f is None else f
        return synthetic_dataset(f, self.days, self.step_minutes, seed=self.seed,
                                 peak_mw=self.peak_mw, weights=[0.5, 0.5],
                                 power_factor=self.power_factor)
