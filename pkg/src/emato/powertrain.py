"""Engine map, gear-policy optimization, and the differentiable fuel model.

The exact fuel path evaluates engine power and brake-specific fuel
consumption (BSFC) on an interpolated engine map; the differentiable path
is a bivariate polynomial in vehicle speed and traction acceleration,
fitted to exact-map samples by linear least squares.  The shipped map is
synthetic: a smooth Willans-style BSFC bowl over a torque/speed envelope,
parameterized so the whole map -> gear policy -> sample -> fit pipeline
runs without proprietary engine data.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSamplesError, EnvelopeError, InvalidSpecError
from .params import FuelCoeffs, VehicleParams, RHO_FUEL_G_PER_ML

TORQUE_IDLE_TOL = 1e-9  # N*m below which the engine is treated as unloaded


@dataclass(frozen=True)
class EngineMapSpec:
    """Parameters of the synthetic engine map."""

    n_speed: int = 16
    n_torque: int = 16
    omega_min: float = 60.0       # rad/s
    omega_max: float = 280.0
    torque_max: float = 800.0     # N*m, plateau value of the torque ceiling
    knee_frac: float = 0.65       # plateau ends at omega_min + knee_frac*span
    taper_frac: float = 0.70      # ceiling at omega_max, as fraction of torque_max
    bsfc_min: float = 195.0       # g/kWh at the basin center
    center_omega: float = 160.0
    center_torque: float = 450.0
    curv_omega: float = 2.0e-3    # g/kWh per (rad/s)^2
    curv_torque: float = 1.2e-4   # g/kWh per (N*m)^2

    def validate(self) -> None:
        if self.n_speed < 8 or self.n_torque < 8:
            raise InvalidSpecError("engine map grids must be at least 8x8")
        if not (0 < self.omega_min < self.omega_max):
            raise InvalidSpecError("need 0 < omega_min < omega_max")
        for name in ("torque_max", "bsfc_min", "curv_omega", "curv_torque"):
            if getattr(self, name) <= 0:
                raise InvalidSpecError(f"{name} must be positive")
        if not (self.omega_min < self.center_omega < self.omega_max):
            raise InvalidSpecError("basin center speed outside the grid")
        if not (0.0 < self.center_torque < self.torque_max):
            raise InvalidSpecError("basin center torque outside the grid")


def truck_map_spec() -> EngineMapSpec:
    return EngineMapSpec()


def sedan_map_spec() -> EngineMapSpec:
    return EngineMapSpec(
        omega_min=80.0, omega_max=650.0, torque_max=250.0,
        knee_frac=0.55, taper_frac=0.72,
        bsfc_min=240.0, center_omega=260.0, center_torque=150.0,
        curv_omega=2.5e-4, curv_torque=2.0e-3,
    )


class EngineMap:
    """Gridded engine power and BSFC surfaces with bilinear interpolation."""

    def __init__(self, speed_grid, torque_grid, power_surface, bsfc_surface,
                 torque_ceiling):
        self.speed_grid = np.asarray(speed_grid, float)
        self.torque_grid = np.asarray(torque_grid, float)
        self.power_surface = np.asarray(power_surface, float)
        self.bsfc_surface = np.asarray(bsfc_surface, float)
        self.torque_ceiling = np.asarray(torque_ceiling, float)
        if (np.any(np.diff(self.speed_grid) <= 0)
                or np.any(np.diff(self.torque_grid) <= 0)):
            raise InvalidSpecError("map grids must be strictly increasing")
        shape = (len(self.speed_grid), len(self.torque_grid))
        if self.power_surface.shape != shape or self.bsfc_surface.shape != shape:
            raise InvalidSpecError("surface shape does not match grids")
        if not (np.all(np.isfinite(self.power_surface))
                and np.all(np.isfinite(self.bsfc_surface))
                and np.all(self.bsfc_surface > 0)):
            raise InvalidSpecError("surfaces must be finite and positive")

    @property
    def omega_min(self) -> float:
        return float(self.speed_grid[0])

    @property
    def omega_max(self) -> float:
        return float(self.speed_grid[-1])

    def max_torque(self, omega) -> float:
        """Torque ceiling at engine speed omega (linear in between nodes)."""
        return np.interp(omega, self.speed_grid, self.torque_ceiling)

    def contains(self, omega: float, torque: float) -> bool:
        return (self.omega_min - 1e-9 <= omega <= self.omega_max + 1e-9
                and -1e-9 <= torque <= self.max_torque(omega) + 1e-9)

    def _interp(self, surface, omega, torque):
        i = np.clip(np.searchsorted(self.speed_grid, omega) - 1,
                    0, len(self.speed_grid) - 2)
        k = np.clip(np.searchsorted(self.torque_grid, torque) - 1,
                    0, len(self.torque_grid) - 2)
        w0, w1 = self.speed_grid[i], self.speed_grid[i + 1]
        t0, t1 = self.torque_grid[k], self.torque_grid[k + 1]
        fw = (omega - w0) / (w1 - w0)
        ft = (torque - t0) / (t1 - t0)
        return ((1 - fw) * (1 - ft) * surface[i, k]
                + fw * (1 - ft) * surface[i + 1, k]
                + (1 - fw) * ft * surface[i, k + 1]
                + fw * ft * surface[i + 1, k + 1])

    def power(self, omega: float, torque: float) -> float:
        """Engine power (W) by bilinear interpolation."""
        return float(self._interp(self.power_surface, omega, torque))

    def bsfc(self, omega: float, torque: float) -> float:
        """Fuel efficiency (g/kWh) by bilinear interpolation."""
        return float(self._interp(self.bsfc_surface, omega, torque))

    def bsfc_minimum(self) -> tuple[float, float, float]:
        """(min BSFC, omega, torque) over grid nodes."""
        idx = np.unravel_index(np.argmin(self.bsfc_surface),
                               self.bsfc_surface.shape)
        return (float(self.bsfc_surface[idx]),
                float(self.speed_grid[idx[0]]),
                float(self.torque_grid[idx[1]]))

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "speed_grid": self.speed_grid.tolist(),
            "torque_grid": self.torque_grid.tolist(),
            "power_surface": self.power_surface.tolist(),
            "bsfc_surface": self.bsfc_surface.tolist(),
            "torque_ceiling": self.torque_ceiling.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EngineMap":
        if d.get("version") != 1:
            raise InvalidSpecError("unsupported engine map version")
        return cls(d["speed_grid"], d["torque_grid"], d["power_surface"],
                   d["bsfc_surface"], d["torque_ceiling"])


def build_engine_map(spec: EngineMapSpec) -> EngineMap:
    """Synthesize a map: power = omega * torque, BSFC a quadratic bowl."""
    spec.validate()
    omega = np.linspace(spec.omega_min, spec.omega_max, spec.n_speed)
    torque = np.linspace(0.0, spec.torque_max, spec.n_torque)
    power = np.outer(omega, torque)
    bsfc = (spec.bsfc_min
            + spec.curv_omega * (omega[:, None] - spec.center_omega) ** 2
            + spec.curv_torque * (torque[None, :] - spec.center_torque) ** 2)
    knee = spec.omega_min + spec.knee_frac * (spec.omega_max - spec.omega_min)
    ceiling = np.where(
        omega <= knee, spec.torque_max,
        spec.torque_max * (1.0 + (spec.taper_frac - 1.0)
                           * (omega - knee) / (spec.omega_max - knee)))
    return EngineMap(omega, torque, power, bsfc, ceiling)


@dataclass(frozen=True)
class TransmissionSpec:
    """Driveline constants: gear ratios, final drive, efficiency, wheel radius."""

    gear_ratios: tuple[float, ...]
    final_drive: float
    efficiency: float
    wheel_radius: float

    @property
    def n_gears(self) -> int:
        return len(self.gear_ratios)

    def total_ratio(self, gear: int) -> float:
        if not 0 <= gear < self.n_gears:
            raise InvalidSpecError(f"gear index {gear} out of range")
        return self.gear_ratios[gear] * self.final_drive


def truck_transmission() -> TransmissionSpec:
    # plausible 7-speed light-truck driveline; not measured data
    return TransmissionSpec(
        gear_ratios=(4.70, 3.30, 2.40, 1.78, 1.35, 1.00, 0.78),
        final_drive=4.0, efficiency=0.95, wheel_radius=0.40)


def sedan_transmission() -> TransmissionSpec:
    return TransmissionSpec(
        gear_ratios=(3.54, 2.04, 1.38, 1.03, 0.81, 0.65),
        final_drive=3.9, efficiency=0.95, wheel_radius=0.31)


def transmission_spec(name: str) -> TransmissionSpec:
    try:
        return {"truck": truck_transmission, "sedan": sedan_transmission}[name]()
    except KeyError:
        raise ValueError(f"unknown vehicle {name!r}")


class GearPolicy:
    """Per-(v, a_t) gear selection table on a lattice; -1 marks infeasible."""

    def __init__(self, trans: TransmissionSpec, v_grid, at_grid, table):
        self.trans = trans
        self.v_grid = np.asarray(v_grid, float)
        self.at_grid = np.asarray(at_grid, float)
        self.table = np.asarray(table, int)
        if self.table.shape != (len(self.v_grid), len(self.at_grid)):
            raise InvalidSpecError("gear table shape does not match lattice")

    # flat views so callers can treat a policy like its transmission spec
    @property
    def gear_ratios(self):
        return self.trans.gear_ratios

    @property
    def final_drive(self):
        return self.trans.final_drive

    @property
    def efficiency(self):
        return self.trans.efficiency

    @property
    def wheel_radius(self):
        return self.trans.wheel_radius

    @property
    def n_gears(self) -> int:
        return self.trans.n_gears

    def lookup(self, v: float, a_t: float) -> int:
        """Gear at the nearest lattice cell; -1 when the cell is infeasible."""
        i = int(np.argmin(np.abs(self.v_grid - v)))
        k = int(np.argmin(np.abs(self.at_grid - a_t)))
        return int(self.table[i, k])

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "gear_ratios": list(self.trans.gear_ratios),
            "final_drive": self.trans.final_drive,
            "efficiency": self.trans.efficiency,
            "wheel_radius": self.trans.wheel_radius,
            "v_grid": self.v_grid.tolist(),
            "at_grid": self.at_grid.tolist(),
            "table": self.table.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GearPolicy":
        if d.get("version") != 1:
            raise InvalidSpecError("unsupported gear policy version")
        trans = TransmissionSpec(
            gear_ratios=tuple(d["gear_ratios"]), final_drive=d["final_drive"],
            efficiency=d["efficiency"], wheel_radius=d["wheel_radius"])
        return cls(trans, d["v_grid"], d["at_grid"], d["table"])


def engine_state(v: float, a_t: float, gear: int, trans,
                 params: VehicleParams) -> tuple[float, float]:
    """Engine speed (rad/s) and torque (N*m) for a driveline state.

    ``trans`` may be a TransmissionSpec or a GearPolicy.
    """
    if v < 0:
        raise ValueError("speed must be non-negative")
    ratios = trans.gear_ratios
    if not 0 <= gear < len(ratios):
        raise InvalidSpecError(f"gear index {gear} out of range")
    i_t = ratios[gear] * trans.final_drive
    r = trans.wheel_radius
    torque = a_t * params.M * r / (i_t * trans.efficiency)
    omega = v * i_t / r
    return omega, torque


def fuel_rate_exact(v: float, a_t: float, gear: int, emap: EngineMap,
                    trans, params: VehicleParams) -> float:
    """Fuel rate (mL/s) from the engine map: P_e * eta_f / c_u."""
    omega, torque = engine_state(v, a_t, gear, trans, params)
    if torque <= TORQUE_IDLE_TOL and omega < emap.omega_min:
        # unloaded below idle speed: no brake power, no map fuel
        return 0.0
    if not emap.contains(omega, torque):
        raise EnvelopeError(
            f"engine state (omega={omega:.1f} rad/s, T={torque:.1f} N*m) "
            f"outside the map envelope")
    c_u = params.fuel.rho_g * 1000.0 * 3600.0
    return emap.power(omega, torque) * emap.bsfc(omega, torque) / c_u


def optimize_gear_policy(emap: EngineMap, trans: TransmissionSpec,
                         v_grid, at_grid,
                         params: VehicleParams) -> GearPolicy:
    """Pick the fuel-minimal feasible gear per lattice cell.

    Ties break toward the lower gear index.  Raises when no cell admits
    any feasible gear.
    """
    if trans.n_gears < 1:
        raise InvalidSpecError("need at least one gear")
    v_grid = np.asarray(v_grid, float)
    at_grid = np.asarray(at_grid, float)
    table = np.full((len(v_grid), len(at_grid)), -1, int)
    for i, v in enumerate(v_grid):
        for k, a_t in enumerate(at_grid):
            best_gear, best_fuel = -1, np.inf
            for gear in range(trans.n_gears):
                omega, torque = engine_state(v, a_t, gear, trans, params)
                if torque <= TORQUE_IDLE_TOL and omega < emap.omega_min:
                    fuel = 0.0
                elif emap.contains(omega, torque):
                    c_u = params.fuel.rho_g * 1000.0 * 3600.0
                    fuel = emap.power(omega, torque) * emap.bsfc(omega, torque) / c_u
                else:
                    continue
                if fuel < best_fuel - 1e-12:
                    best_gear, best_fuel = gear, fuel
            table[i, k] = best_gear
    if np.all(table < 0):
        raise InvalidSpecError("no feasible gear anywhere on the lattice")
    return GearPolicy(trans, v_grid, at_grid, table)


@dataclass(frozen=True)
class FitSample:
    """One (speed, traction acceleration, exact fuel rate) observation."""

    v: float
    a_t: float
    f_r: float


def sample_fit_data(emap: EngineMap, policy: GearPolicy,
                    params: VehicleParams) -> list[FitSample]:
    """Exact fuel-rate samples over the policy lattice's feasible cells."""
    samples = []
    for i, v in enumerate(policy.v_grid):
        for k, a_t in enumerate(policy.at_grid):
            gear = policy.table[i, k]
            if gear < 0:
                continue
            f_r = fuel_rate_exact(v, a_t, int(gear), emap, policy, params)
            samples.append(FitSample(float(v), float(a_t), f_r))
    return samples


@dataclass(frozen=True)
class FitResult:
    coeffs: FuelCoeffs
    accuracy_pct: float
    n_samples: int


# samples below this rate are excluded from the relative-accuracy mean to
# avoid division blowup near zero fuel flow
ACCURACY_FLOOR_ML_S = 0.05


def fit_fuel_model(samples: list[FitSample],
                   rho_g: float = RHO_FUEL_G_PER_ML) -> FitResult:
    """Exact linear least-squares fit of the 8-parameter fuel polynomial."""
    if len(samples) < 8:
        raise DegenerateSamplesError("need at least 8 samples")
    v = np.array([s.v for s in samples])
    at = np.array([s.a_t for s in samples])
    fr = np.array([s.f_r for s in samples])
    if len(np.unique(v)) < 3 or len(np.unique(at)) < 2:
        raise DegenerateSamplesError(
            "samples must span >= 3 distinct speeds and >= 2 distinct a_t")
    design = np.column_stack([
        np.ones_like(v), v, v ** 2, v ** 3, v ** 4,
        at, v * at, v ** 2 * at,
    ])
    coef, _, rank, _ = np.linalg.lstsq(design, fr, rcond=None)
    if rank < 8:
        raise DegenerateSamplesError("rank-deficient design matrix")
    coeffs = FuelCoeffs(o=tuple(coef[:5]), c=tuple(coef[5:]), rho_g=rho_g)
    pred = design @ coef
    keep = fr >= ACCURACY_FLOOR_ML_S
    if np.any(keep):
        accuracy = 100.0 * (1.0 - np.mean(np.abs(pred[keep] - fr[keep]) / fr[keep]))
    else:
        accuracy = float("nan")
    return FitResult(coeffs=coeffs, accuracy_pct=float(accuracy),
                     n_samples=len(samples))


def fuel_rate_model(coeffs: FuelCoeffs, v, a_t):
    """Polynomial fuel rate (mL/s); vectorized over v and a_t."""
    o0, o1, o2, o3, o4 = coeffs.o
    c0, c1, c2 = coeffs.c
    v = np.asarray(v, float)
    a_t = np.asarray(a_t, float)
    out = (o0 + v * (o1 + v * (o2 + v * (o3 + v * o4)))
           + (c0 + v * (c1 + v * c2)) * a_t)
    return out if out.ndim else float(out)


def fuel_rate_partials(coeffs: FuelCoeffs, v, a_t):
    """Closed-form (d f/d v, d f/d a_t) of the fuel polynomial."""
    o0, o1, o2, o3, o4 = coeffs.o
    c0, c1, c2 = coeffs.c
    v = np.asarray(v, float)
    a_t = np.asarray(a_t, float)
    dv = (o1 + 2 * o2 * v + 3 * o3 * v ** 2 + 4 * o4 * v ** 3
          + (c1 + 2 * c2 * v) * a_t)
    da = c0 + v * (c1 + v * c2)
    if dv.ndim == 0:
        return float(dv), float(da)
    return dv, np.broadcast_to(da, dv.shape).copy()


def save_powertrain(path, emap: EngineMap, policy: GearPolicy) -> None:
    """Versioned JSON document holding one map plus its gear policy."""
    doc = {"version": 1, "engine_map": emap.to_dict(),
           "gear_policy": policy.to_dict()}
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def load_powertrain(path) -> tuple[EngineMap, GearPolicy]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != 1:
        raise InvalidSpecError("unsupported powertrain document version")
    return (EngineMap.from_dict(doc["engine_map"]),
            GearPolicy.from_dict(doc["gear_policy"]))
