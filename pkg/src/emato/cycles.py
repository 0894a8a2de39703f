"""Driving cycles: synthetic traces, CSV ingestion, and leader prediction.

A cycle is a sampled speed-vs-time trace used as the leading vehicle's
motion.  Two synthetic cycles ship with the package (a highway trace of
roughly 8 km and a stop-and-go urban trace); standard cycle files load
through the CSV path.  Leader prediction integrates the recorded trace and
holds the last recorded speed constant beyond its end.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import EmatoError, InvalidSpecError
from .optimizer import TrafficPrediction

MPH_TO_MPS = 0.44704


class CycleExhausted(EmatoError):
    """Requested prediction start lies beyond the recorded cycle."""


@dataclass(frozen=True)
class DrivingCycle:
    name: str
    t: np.ndarray   # s, strictly increasing from 0
    v: np.ndarray   # m/s, >= 0

    def __post_init__(self):
        if len(self.t) < 2 or self.t[0] != 0.0 or np.any(np.diff(self.t) <= 0):
            raise InvalidSpecError("cycle times must strictly increase from 0")
        if np.any(self.v < 0):
            raise InvalidSpecError("cycle speeds must be non-negative")

    @property
    def total_time(self) -> float:
        return float(self.t[-1])

    @property
    def total_distance(self) -> float:
        return float(np.trapz(self.v, self.t))

    def speed_at(self, t):
        """Speed at time t; the last recorded speed holds beyond the end."""
        return np.interp(t, self.t, self.v)

    def position_at(self, t):
        """Distance covered since t=0 (trapezoidal; linear beyond the end)."""
        t = np.asarray(t, float)
        knots = np.concatenate([[0.0], np.cumsum(
            0.5 * (self.v[1:] + self.v[:-1]) * np.diff(self.t))])
        inside = np.interp(t, self.t, knots)
        # inside a segment the trace is linear in t, so the integral is
        # quadratic; correct the knot interpolation accordingly
        idx = np.clip(np.searchsorted(self.t, t, side="right") - 1,
                      0, len(self.t) - 2)
        t0, t1 = self.t[idx], self.t[idx + 1]
        v0, v1 = self.v[idx], self.v[idx + 1]
        tau = np.clip(t, t0, t1) - t0
        seg = v0 * tau + 0.5 * (v1 - v0) / (t1 - t0) * tau ** 2
        exact = knots[idx] + seg
        beyond = np.maximum(t - self.total_time, 0.0) * self.v[-1]
        out = np.where(t >= self.total_time, knots[-1] + beyond, exact)
        return out if out.ndim else float(out)


def _from_knots(name, knots, resolution=1.0):
    kt = np.array([k[0] for k in knots], float)
    kv = np.array([k[1] for k in knots], float)
    t = np.arange(0.0, kt[-1] + 0.5 * resolution, resolution)
    return DrivingCycle(name=name, t=t, v=np.interp(t, kt, kv))


def synthetic_highway() -> DrivingCycle:
    """~380 s / ~8 km highway trace, mean speed around 21 m/s.

    A deterministic multi-frequency speed texture rides on the base
    profile, mimicking the second-scale variation of recorded traces;
    it fades out near standstill so launches stay smooth.
    """
    knots = [(0, 0), (30, 22), (60, 23.5), (90, 21.5), (120, 24.5),
             (150, 25.5), (180, 23), (205, 18), (225, 16.5), (245, 19),
             (275, 23.5), (305, 24.5), (330, 22.5), (350, 21), (365, 12),
             (380, 0)]
    cycle = _from_knots("synthetic-highway", knots)
    t, v = cycle.t, cycle.v
    texture = (1.1 * np.sin(2 * np.pi * t / 47.0)
               + 0.8 * np.sin(2 * np.pi * t / 23.0 + 1.3)
               + 0.5 * np.sin(2 * np.pi * t / 11.0 + 2.1))
    fade = np.clip(v / 15.0, 0.0, 1.0)
    return DrivingCycle("synthetic-highway", t,
                        np.maximum(v + texture * fade, 0.0))


def synthetic_urban() -> DrivingCycle:
    """~300 s stop-and-go urban trace."""
    knots = [(0, 0), (15, 9), (40, 9), (55, 0), (65, 0), (85, 13),
             (110, 13), (130, 3), (150, 8), (170, 8), (190, 0), (200, 0),
             (220, 11), (250, 12), (270, 6), (285, 6), (300, 0)]
    return _from_knots("synthetic-urban", knots)


def composite_cycle(cycles, rest: float = 5.0,
                    name: str = "composite") -> DrivingCycle:
    """Concatenate cycles with zero-speed splices of ``rest`` seconds."""
    if not cycles:
        raise InvalidSpecError("need at least one cycle")
    ts, vs = [], []
    offset = 0.0
    for i, cyc in enumerate(cycles):
        t = cyc.t + offset
        if i > 0:
            ts.append(np.array([offset - rest + 1e-3]))
            vs.append(np.array([0.0]))
        ts.append(t)
        vs.append(cyc.v)
        offset = float(t[-1]) + rest
    return DrivingCycle(name=name, t=np.concatenate(ts), v=np.concatenate(vs))


def shipped_cycle(name: str) -> DrivingCycle:
    table = {"highway": synthetic_highway, "urban": synthetic_urban}
    if name in table:
        return table[name]()
    if name == "composite":
        return composite_cycle([synthetic_highway(), synthetic_urban()])
    raise InvalidSpecError(f"unknown shipped cycle {name!r}")


def load_cycle_csv(path, mph: bool = False, name: str | None = None) -> DrivingCycle:
    """Read a cycle from CSV with header columns time_s, speed_mps.

    ``mph=True`` accepts a speed_mph column and converts.
    """
    ts, vs = [], []
    with open(path) as fh:
        rdr = csv.reader(fh)
        header = next(rdr)
        cols = [c.strip().lower() for c in header]
        try:
            it = cols.index("time_s")
            iv = cols.index("speed_mph" if mph else "speed_mps")
        except ValueError:
            raise InvalidSpecError(
                f"cycle CSV needs time_s and speed_{'mph' if mph else 'mps'} "
                f"columns, got {cols}")
        for rec in rdr:
            if not rec:
                continue
            ts.append(float(rec[it]))
            vs.append(float(rec[iv]))
    v = np.asarray(vs) * (MPH_TO_MPS if mph else 1.0)
    return DrivingCycle(name=name or str(path), t=np.asarray(ts), v=v)


def save_cycle_csv(path, cycle: DrivingCycle) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["time_s", "speed_mps"])
        for t, v in zip(cycle.t, cycle.v):
            wr.writerow([f"{t:.9g}", f"{v:.9g}"])


def lead_prediction(cycle: DrivingCycle, t0: float, n_T: int, dt: float,
                    l_offset: float = 0.0) -> TrafficPrediction:
    """Leader trajectory over [t0, t0 + n_T*dt] by linear projection."""
    if t0 < 0 or t0 > cycle.total_time:
        raise CycleExhausted(
            f"t0={t0:.1f}s outside cycle span of {cycle.total_time:.1f}s")
    t = t0 + dt * np.arange(n_T + 1)
    path_l = np.asarray(cycle.position_at(t)) + l_offset
    path_v = np.asarray(cycle.speed_at(t))
    return TrafficPrediction(dt=dt, t0=t0, path_l=path_l, path_v=path_v)
