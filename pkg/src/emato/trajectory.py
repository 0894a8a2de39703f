"""Time-indexed observation/control trajectories shared across modules.

A trajectory over horizon [t0, t0 + n_T*dt] holds n_T+1 grid points.
Observation rows are z = [l, v, a_v, j, theta, a_r, f_r]; control rows are
u = [a_t, a_b].  Controls act on the interval starting at their grid point;
the last control row repeats the previous one so both arrays share length.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# observation column indices
ZL, ZV, ZA, ZJ, ZTH, ZAR, ZFR = range(7)
# control column indices
UAT, UAB = 0, 1


@dataclass(frozen=True)
class Trajectory:
    t0: float
    dt: float
    z: np.ndarray  # (N, 7)
    u: np.ndarray  # (N, 2)

    def __post_init__(self):
        if self.z.ndim != 2 or self.z.shape[1] != 7:
            raise ValueError("z must be (N, 7)")
        if self.u.shape != (self.z.shape[0], 2):
            raise ValueError("u must be (N, 2) matching z")

    @property
    def n_points(self) -> int:
        return self.z.shape[0]

    @property
    def n_steps(self) -> int:
        return self.z.shape[0] - 1

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_points)

    @property
    def duration(self) -> float:
        return self.dt * self.n_steps

    def total_fuel(self) -> float:
        """Fuel (mL) over the horizon, left-rectangle rule on f_r."""
        return float(np.sum(self.z[:-1, ZFR]) * self.dt)

    def distance(self) -> float:
        return float(self.z[-1, ZL] - self.z[0, ZL])
