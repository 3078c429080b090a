"""LinDistFlow voltage sensitivities ``v = v0 + R p + X q``.

Dropping the loss terms from DistFlow leaves flows equal to downstream net
demand and a voltage drop of ``2 (r P + x Q)`` per line, so

    R[i, j] = 2 * sum of r over the lines shared by the head-to-i and head-to-j paths

and likewise for ``X``. With injections positive into the grid, increasing any
injection raises every voltage that shares a path with it.
"""

from __future__ import annotations

from dataclasses import dataclass
from os import PathLike

import numpy as np

from .feeder import Feeder
from .powerflow import Injections


@dataclass(frozen=True)
class SensitivityModel:
    R: np.ndarray
    X: np.ndarray
    v0: float

    @property
    def n(self) -> int:
        return self.R.shape[0]

    @property
    def v0_vec(self) -> np.ndarray:
        return np.full(self.n, self.v0)


def build_sensitivity(f: Feeder) -> SensitivityModel:
    path = f.path_matrix
    R = 2.0 * (path * f.r) @ path.T
    X = 2.0 * (path * f.x) @ path.T
    for a in (R, X):
        a.setflags(write=False)
    return SensitivityModel(R, X, f.v0)


def predict_voltage(m: SensitivityModel, inj: Injections) -> np.ndarray:
    """Squared voltages of the non-root buses under the linear model."""
    if inj.p.shape != (m.n,):
        raise ValueError(f"injections have length {inj.p.shape[0]}, model has {m.n} buses")
    return m.v0 + m.R @ inj.p + m.X @ inj.q


def export_csv(m: SensitivityModel, r_path: str | PathLike, x_path: str | PathLike):
    np.savetxt(r_path, m.R, delimiter=",", fmt="%.17g")
    np.savetxt(x_path, m.X, delimiter=",", fmt="%.17g")
