"""Vehicle constants and fuel-model coefficients.

Shipped defaults cover a 4800-kg light-duty diesel truck with a 7-speed
transmission and a 1200-kg sedan with a 6-speed transmission.  Physical
constants (mass, drag, rolling resistance, dynamic limits) and the
polynomial fuel-model coefficients are configurable; transmission
constants (ratios, final drive, wheel radius, driveline efficiency) are
repo-configured plausible values, not measured data.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

# mL/s <-> g/h conversion uses the same diesel density for both vehicles
RHO_FUEL_G_PER_ML = 0.85

# meters per mile / milliliters per US gallon, for mpg reporting
METERS_PER_MILE = 1609.344
ML_PER_GALLON = 3785.412


@dataclass(frozen=True)
class FuelCoeffs:
    """Coefficients of the bivariate fuel-rate polynomial.

    fuel_rate(v, a_t) = o0 + o1 v + o2 v^2 + o3 v^3 + o4 v^4
                        + (c0 + c1 v + c2 v^2) a_t     [mL/s]
    """

    o: tuple[float, float, float, float, float]
    c: tuple[float, float, float]
    rho_g: float = RHO_FUEL_G_PER_ML

    @property
    def unit_const(self) -> float:
        """g/h of fuel per (W * g/kWh), i.e. rho_g * 1000 * 3600."""
        return self.rho_g * 1000.0 * 3600.0

    def to_dict(self) -> dict:
        d = {f"o{i}": float(v) for i, v in enumerate(self.o)}
        d.update({f"c{i}": float(v) for i, v in enumerate(self.c)})
        d["rho_g"] = float(self.rho_g)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FuelCoeffs":
        o = tuple(float(d[f"o{i}"]) for i in range(5))
        c = tuple(float(d[f"c{i}"]) for i in range(3))
        return cls(o=o, c=c, rho_g=float(d.get("rho_g", RHO_FUEL_G_PER_ML)))


# Published reference coefficients, kept verbatim.  The truck o4 entry is
# anomalous: 2.4230e-4 * v^4 adds ~39 mL/s at 20 m/s, two orders of magnitude
# above the cruise fuel rate implied by the rest of the table (and it nearly
# duplicates the truck c2 entry, suggesting a copy slip).  Shipped scenario
# defaults therefore zero it; the verbatim table stays available here.
SEDAN_COEFFS_PUBLISHED = FuelCoeffs(
    o=(1.4627e-1, 1.0254e-2, -9.2812e-4, 2.154e-5, -4.2427e-7),
    c=(0.07224, 0.09681, 1.0750e-3),
)
TRUCK_COEFFS_PUBLISHED = FuelCoeffs(
    o=(3.351e-1, 9.0901e-3, 3.7574e-8, 3.4935e-8, 2.4230e-4),
    c=(1.6550e-1, 3.6070e-1, 2.4223e-4),
)

SEDAN_COEFFS_DEFAULT = SEDAN_COEFFS_PUBLISHED
TRUCK_COEFFS_DEFAULT = replace(
    TRUCK_COEFFS_PUBLISHED,
    o=TRUCK_COEFFS_PUBLISHED.o[:4] + (0.0,),
)


@dataclass(frozen=True)
class Limits:
    """Dynamic operating limits."""

    v_max: float = 27.0        # m/s
    a_v_max: float = 2.0       # m/s^2, apparent acceleration ceiling
    a_b_max: float = 5.0       # m/s^2, brake acceleration ceiling
    a_t_max: float = 3.0       # m/s^2, traction acceleration ceiling
    j_max: float = 10.0        # m/s^3

    def __post_init__(self):
        for name in ("v_max", "a_v_max", "a_b_max", "a_t_max", "j_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"limit {name} must be strictly positive")


@dataclass(frozen=True)
class VehicleParams:
    """Physical constants, fuel model, and limits of one vehicle."""

    name: str
    M: float                   # equivalent mass, kg
    A_v: float                 # frontal area, m^2
    rho: float                 # air density, kg/m^3
    C_d: float                 # drag coefficient
    mu: float                  # rolling resistance coefficient
    g: float                   # gravity, m/s^2
    limits: Limits
    fuel: FuelCoeffs

    # Resistance constants are derived, never stored, so they cannot drift
    # out of sync with the physical fields.
    @property
    def k1(self) -> float:
        return self.C_d * self.rho * self.A_v / (2.0 * self.M)

    @property
    def k2(self) -> float:
        return self.mu * self.g

    @property
    def k3(self) -> float:
        return self.g

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "M": self.M, "A_v": self.A_v, "rho": self.rho,
            "C_d": self.C_d, "mu": self.mu, "g": self.g,
            "limits": {
                "v_max": self.limits.v_max, "a_v_max": self.limits.a_v_max,
                "a_b_max": self.limits.a_b_max, "a_t_max": self.limits.a_t_max,
                "j_max": self.limits.j_max,
            },
            "fuel": self.fuel.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VehicleParams":
        return cls(
            name=d["name"], M=d["M"], A_v=d["A_v"], rho=d["rho"],
            C_d=d["C_d"], mu=d["mu"], g=d["g"],
            limits=Limits(**d["limits"]),
            fuel=FuelCoeffs.from_dict(d["fuel"]),
        )


def sedan_params() -> VehicleParams:
    return VehicleParams(
        name="sedan", M=1200.0, A_v=2.5, rho=1.184, C_d=0.32, mu=0.015,
        g=9.81, limits=Limits(j_max=10.0), fuel=SEDAN_COEFFS_DEFAULT,
    )


def truck_params() -> VehicleParams:
    return VehicleParams(
        name="truck", M=4800.0, A_v=2.5, rho=1.184, C_d=0.6, mu=0.006,
        g=9.81, limits=Limits(j_max=5.0), fuel=TRUCK_COEFFS_DEFAULT,
    )


def vehicle_params(name: str) -> VehicleParams:
    try:
        return {"sedan": sedan_params, "truck": truck_params}[name]()
    except KeyError:
        raise ValueError(f"unknown vehicle {name!r}, expected 'sedan' or 'truck'")


def published_fuel_coeffs(name: str) -> FuelCoeffs:
    """Verbatim reference coefficients, including the anomalous truck o4."""
    try:
        return {"sedan": SEDAN_COEFFS_PUBLISHED,
                "truck": TRUCK_COEFFS_PUBLISHED}[name]
    except KeyError:
        raise ValueError(f"unknown vehicle {name!r}")


def save_fuel_coeffs(path, coeffs: FuelCoeffs) -> None:
    with open(path, "w") as fh:
        json.dump(coeffs.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_fuel_coeffs(path) -> FuelCoeffs:
    with open(path) as fh:
        return FuelCoeffs.from_dict(json.load(fh))
