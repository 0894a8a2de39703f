"""Longitudinal vehicle dynamics and road slope profiles.

Resistance, traction balance, and the exact constant-jerk state update,
plus the sinusoidal grade profiles used by the shipped scenarios and the
per-horizon slope prediction that is frozen for one optimization solve.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidSpecError
from .params import VehicleParams

MAX_GRADE_RAD = 0.15

# shipped profile shapes: sinusoidal grade theta(s) = A sin(2 pi s / wl)
ROLLING_AMPLITUDE, ROLLING_WAVELENGTH = 0.03, 400.0
STEEP_AMPLITUDE, STEEP_WAVELENGTH = 0.08, 900.0


@dataclass(frozen=True)
class KinState:
    """Kinematic state: path distance, speed, apparent acceleration."""

    l: float
    v: float
    a_v: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.l, self.v, self.a_v)


def resistance_accel(v, theta, params: VehicleParams):
    """Resistance acceleration: aero drag + rolling + grade terms (m/s^2)."""
    return (params.k1 * np.square(v)
            + params.k2 * np.cos(theta)
            + params.k3 * np.sin(theta))


def traction_accel(a_v, a_r, a_b):
    """Traction acceleration balancing apparent, resistance, and brake terms."""
    return a_v + a_r + a_b


def integrate_state(x: KinState, j: float, dt: float) -> tuple[KinState, bool]:
    """Exact constant-jerk update over one step.

    Returns the new state and a flag marking that speed was clamped at zero.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    a_new = x.a_v + j * dt
    v_new = x.v + x.a_v * dt + 0.5 * j * dt * dt
    l_new = x.l + x.v * dt + 0.5 * x.a_v * dt * dt + j * dt ** 3 / 6.0
    clamped = v_new < 0.0
    if clamped:
        v_new = 0.0
    return KinState(l_new, v_new, a_new), clamped


class SlopeProfile:
    """Road grade theta as a function of the road/path coordinate.

    Shipped kinds are flat and two sine shapes (rolling, steep); kind
    ``custom`` wraps a sampled (s, theta) table with linear interpolation.
    """

    def __init__(self, kind: str, amplitude: float = 0.0,
                 wavelength: float = 1.0, phase: float = 0.0,
                 table: tuple[np.ndarray, np.ndarray] | None = None):
        if kind not in ("flat", "rolling", "steep", "custom"):
            raise InvalidSpecError(f"unknown slope kind {kind!r}")
        if kind == "custom":
            if table is None:
                raise InvalidSpecError("custom slope profile needs a table")
            s, th = np.asarray(table[0], float), np.asarray(table[1], float)
            if s.ndim != 1 or s.shape != th.shape or np.any(np.diff(s) <= 0):
                raise InvalidSpecError("custom table needs increasing s samples")
            if np.max(np.abs(th)) > MAX_GRADE_RAD:
                raise InvalidSpecError(f"grade exceeds {MAX_GRADE_RAD} rad")
            table = (s, th)
        else:
            if abs(amplitude) > MAX_GRADE_RAD:
                raise InvalidSpecError(f"amplitude exceeds {MAX_GRADE_RAD} rad")
            if kind != "flat" and wavelength <= 0:
                raise InvalidSpecError("wavelength must be positive")
        self.kind = kind
        self.amplitude = float(amplitude)
        self.wavelength = float(wavelength)
        self.phase = float(phase)
        self._table = table

    def theta(self, s):
        """Grade (rad) at coordinate s; vectorized."""
        s = np.asarray(s, float)
        if self.kind == "flat":
            out = np.zeros_like(s)
        elif self.kind == "custom":
            out = np.interp(s, self._table[0], self._table[1])
        else:
            out = self.amplitude * np.sin(
                2.0 * np.pi * s / self.wavelength + self.phase)
        return out if out.ndim else float(out)

    def elevation(self, s):
        """Height gained since s=0, integrating tan(theta) ~ theta."""
        s = np.asarray(s, float)
        if self.kind == "flat":
            out = np.zeros_like(s)
        elif self.kind == "custom":
            ss, th = self._table
            grid = np.unique(np.concatenate([ss, np.atleast_1d(s)]))
            thg = np.interp(grid, ss, th)
            hg = np.concatenate([[0.0], np.cumsum(
                0.5 * (thg[1:] + thg[:-1]) * np.diff(grid))])
            out = np.interp(s, grid, hg)
        else:
            w = 2.0 * np.pi / self.wavelength
            out = self.amplitude / w * (np.cos(self.phase)
                                        - np.cos(w * s + self.phase))
        return out if out.ndim else float(out)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "custom":
            d["s"] = self._table[0].tolist()
            d["theta"] = self._table[1].tolist()
        elif self.kind != "flat":
            d.update(amplitude=self.amplitude, wavelength=self.wavelength,
                     phase=self.phase)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SlopeProfile":
        if d["kind"] == "custom":
            return cls("custom", table=(np.asarray(d["s"]), np.asarray(d["theta"])))
        return cls(d["kind"], amplitude=d.get("amplitude", 0.0),
                   wavelength=d.get("wavelength", 1.0), phase=d.get("phase", 0.0))


@dataclass(frozen=True)
class SlopePrediction:
    """Per-step grade vector frozen for one optimization solve."""

    theta_seq: np.ndarray

    def __len__(self) -> int:
        return len(self.theta_seq)


def make_slope_profile(kind: str, amplitude: float | None = None,
                       wavelength: float | None = None) -> SlopeProfile:
    """Build one of the shipped profiles, with optional overrides."""
    if kind == "flat":
        return SlopeProfile("flat")
    defaults = {"rolling": (ROLLING_AMPLITUDE, ROLLING_WAVELENGTH),
                "steep": (STEEP_AMPLITUDE, STEEP_WAVELENGTH)}
    if kind not in defaults:
        raise InvalidSpecError(f"unknown slope kind {kind!r}")
    amp, wl = defaults[kind]
    return SlopeProfile(kind,
                        amplitude=amp if amplitude is None else amplitude,
                        wavelength=wl if wavelength is None else wavelength)


def predict_slope(profile: SlopeProfile, l_ref) -> SlopePrediction:
    """Look up per-step grades at the reference path coordinates."""
    l_ref = np.asarray(l_ref, float)
    if l_ref.ndim != 1:
        raise ValueError("l_ref must be a 1-D coordinate vector")
    # standstill solutions jitter at the micrometer scale; only real
    # direction reversals are rejected
    if np.any(np.diff(l_ref) < -1e-3):
        raise ValueError("l_ref must be non-decreasing")
    return SlopePrediction(theta_seq=np.atleast_1d(profile.theta(l_ref)))


def save_slope_profile(path, profile: SlopeProfile) -> None:
    with open(path, "w") as fh:
        json.dump(profile.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_slope_profile(path) -> SlopeProfile:
    with open(path) as fh:
        return SlopeProfile.from_dict(json.load(fh))


def export_slope_csv(path, profile: SlopeProfile, s_max: float,
                     ds: float = 10.0) -> None:
    """Write sampled (s, theta, elevation) rows for plotting."""
    s = np.arange(0.0, s_max + 0.5 * ds, ds)
    th = np.atleast_1d(profile.theta(s))
    h = np.atleast_1d(profile.elevation(s))
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["s_m", "theta_rad", "elevation_m"])
        for row in zip(s, th, h):
            wr.writerow([f"{x:.9g}" for x in row])
