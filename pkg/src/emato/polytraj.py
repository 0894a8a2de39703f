"""Quintic trajectory candidates, Frenet geometry, and candidate selection.

Candidates are quintic polynomials in time, either directly on the path
coordinate (1-D scenarios) or as a longitudinal/lateral pair in a Frenet
frame that is mapped through a reference line to global coordinates and
then converted to a path-coordinate observation trajectory.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .dynamics import KinState, SlopeProfile, resistance_accel
from .errors import AlignmentError, NoFeasibleCandidateError
from .params import FuelCoeffs, VehicleParams
from .powertrain import fuel_rate_model
from .trajectory import Trajectory, ZV

# guard for the fuel-efficiency denominator f_r / v
EPS_V = 0.1

KAPPA_MAX_DEFAULT = 0.2   # 1/m
R_SAFE_DEFAULT = 3.0      # m


class QuinticSegment:
    """Quintic polynomial p(t) over t in [0, duration]."""

    def __init__(self, coeffs, duration: float):
        self.coeffs = np.asarray(coeffs, float)
        if self.coeffs.shape != (6,):
            raise ValueError("need six coefficients")
        if duration <= 0:
            raise ValueError("duration must be positive")
        self.duration = float(duration)

    def position(self, t):
        c = self.coeffs
        return c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * (c[4] + t * c[5]))))

    def velocity(self, t):
        c = self.coeffs
        return c[1] + t * (2 * c[2] + t * (3 * c[3] + t * (4 * c[4] + t * 5 * c[5])))

    def acceleration(self, t):
        c = self.coeffs
        return 2 * c[2] + t * (6 * c[3] + t * (12 * c[4] + t * 20 * c[5]))

    def jerk(self, t):
        c = self.coeffs
        return 6 * c[3] + t * (24 * c[4] + t * 60 * c[5])

    def states(self, t):
        """(position, velocity, acceleration) stacked as columns."""
        return np.column_stack([self.position(t), self.velocity(t),
                                self.acceleration(t)])


def quintic_fit(x0, xT, duration: float) -> QuinticSegment:
    """Unique quintic matching (p, p', p'') at both ends of the window."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    p0, v0, a0 = x0
    pT, vT, aT = xT
    T = float(duration)
    c0, c1, c2 = p0, v0, a0 / 2.0
    A = np.array([[T ** 3, T ** 4, T ** 5],
                  [3 * T ** 2, 4 * T ** 3, 5 * T ** 4],
                  [6 * T, 12 * T ** 2, 20 * T ** 3]])
    rhs = np.array([pT - c0 - c1 * T - c2 * T ** 2,
                    vT - c1 - 2 * c2 * T,
                    aT - 2 * c2])
    c3, c4, c5 = np.linalg.solve(A, rhs)
    return QuinticSegment([c0, c1, c2, c3, c4, c5], T)


def sample_1d_candidates(start: KinState, end_grid, duration: float):
    """One quintic per sampled end state (l_T, v_T, a_T), in grid order."""
    segs = []
    for end in end_grid:
        segs.append(quintic_fit(start.as_tuple(), tuple(end), duration))
    return segs


class ReferenceLine:
    """Arclength-parameterized road centerline with lane offsets."""

    def __init__(self, waypoints, lane_offsets=(0.0,)):
        wp = np.asarray(waypoints, float)
        if wp.ndim != 2 or wp.shape[1] != 2 or len(wp) < 4:
            raise ValueError("need at least 4 (x, y) waypoints")
        chord = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(wp, axis=0).T))])
        if np.any(np.diff(chord) <= 0):
            raise ValueError("duplicate waypoints")
        self._sx = CubicSpline(chord, wp[:, 0])
        self._sy = CubicSpline(chord, wp[:, 1])
        self.s_max = float(chord[-1])
        self.waypoints = wp
        self.lane_offsets = tuple(float(d) for d in lane_offsets)

    def position(self, s):
        return np.stack([self._sx(s), self._sy(s)], axis=-1)

    def heading(self, s):
        dx, dy = self._sx(s, 1), self._sy(s, 1)
        return np.arctan2(dy, dx)

    def curvature(self, s):
        dx, dy = self._sx(s, 1), self._sy(s, 1)
        ddx, ddy = self._sx(s, 2), self._sy(s, 2)
        denom = np.power(dx * dx + dy * dy, 1.5)
        return (dx * ddy - dy * ddx) / np.maximum(denom, 1e-12)

    def check_range(self, s) -> None:
        s = np.asarray(s)
        if np.any(s < -1e-9) or np.any(s > self.s_max + 1e-9):
            raise ValueError(
                f"s outside reference line range [0, {self.s_max:.1f}]")

    def project(self, x: float, y: float) -> tuple[float, float]:
        """Inverse mapping: global point -> (s, signed lateral offset d)."""
        grid = np.linspace(0.0, self.s_max, max(64, int(self.s_max)))
        p = self.position(grid)
        s = float(grid[np.argmin(np.hypot(p[..., 0] - x, p[..., 1] - y))])
        for _ in range(30):  # Newton on d/ds |P(s) - q|^2
            px, py = self._sx(s), self._sy(s)
            dx, dy = self._sx(s, 1), self._sy(s, 1)
            ddx, ddy = self._sx(s, 2), self._sy(s, 2)
            g = (px - x) * dx + (py - y) * dy
            h = dx * dx + dy * dy + (px - x) * ddx + (py - y) * ddy
            step = g / h if abs(h) > 1e-12 else g
            s = float(np.clip(s - step, 0.0, self.s_max))
            if abs(step) < 1e-12:
                break
        px, py = float(self._sx(s)), float(self._sy(s))
        yaw = float(self.heading(s))
        d = -(x - px) * np.sin(yaw) + (y - py) * np.cos(yaw)
        return s, float(d)


def straight_reference(length: float, lane_offsets=(0.0,),
                       n: int = 50) -> ReferenceLine:
    x = np.linspace(0.0, length, n)
    return ReferenceLine(np.column_stack([x, np.zeros(n)]), lane_offsets)


def gentle_curve_reference(length: float, lane_offsets=(0.0,),
                           amplitude: float = 40.0, wavelength: float = 1500.0,
                           n: int = 200) -> ReferenceLine:
    """Mild S-curve centerline; curvature stays far below highway limits."""
    x = np.linspace(0.0, length, n)
    y = amplitude * np.sin(2 * np.pi * x / wavelength)
    return ReferenceLine(np.column_stack([x, y]), lane_offsets)


def load_waypoints_csv(path, lane_offsets=(0.0,)) -> ReferenceLine:
    """Reference line from a CSV of x,y rows (header optional)."""
    rows = []
    with open(path) as fh:
        for rec in csv.reader(fh):
            if not rec:
                continue
            try:
                rows.append((float(rec[0]), float(rec[1])))
            except ValueError:
                continue  # header
    return ReferenceLine(np.asarray(rows), lane_offsets)


def frenet_to_global(s_seg: QuinticSegment, d_seg: QuinticSegment,
                     ref: ReferenceLine, t):
    """Map a Frenet (s(t), d(t)) pair to global x, y, yaw, curvature.

    Yaw and curvature come from first/second differences of the mapped
    positions, matching how the path conversion consumes them.
    """
    t = np.asarray(t, float)
    s = s_seg.position(t)
    ref.check_range(s)
    d = d_seg.position(t)
    base = ref.position(s)
    yaw_ref = ref.heading(s)
    x = base[..., 0] - d * np.sin(yaw_ref)
    y = base[..., 1] + d * np.cos(yaw_ref)
    dx, dy = np.gradient(x, edge_order=2), np.gradient(y, edge_order=2)
    yaw = np.arctan2(dy, dx)
    ds = np.hypot(dx, dy)
    dyaw = np.gradient(np.unwrap(yaw), edge_order=2)
    curvature = dyaw / np.maximum(ds, 1e-9)
    return x, y, yaw, curvature


def _difference_derivatives(y: np.ndarray, dt: float) -> np.ndarray:
    """First derivative: central interior, one-sided O(dt^2) at the ends."""
    d = np.empty_like(y)
    d[1:-1] = (y[2:] - y[:-2]) / (2 * dt)
    d[0] = (-3 * y[0] + 4 * y[1] - y[2]) / (2 * dt)
    d[-1] = (3 * y[-1] - 4 * y[-2] + y[-3]) / (2 * dt)
    return d


def to_path_trajectory(xy: np.ndarray, t0: float, dt: float,
                       slope_theta: np.ndarray, params: VehicleParams,
                       coeffs: FuelCoeffs, l0: float = 0.0) -> Trajectory:
    """Convert a global position trace to a path-coordinate trajectory.

    l is cumulative arclength (offset by l0); v, a_v, j follow by repeated
    differencing; traction and brake split as a_t = max(0, a_v + a_r),
    a_b = max(0, -(a_v + a_r)); f_r evaluates the fuel polynomial.
    """
    xy = np.asarray(xy, float)
    steps = np.hypot(*np.diff(xy, axis=0).T)
    l = l0 + np.concatenate([[0.0], np.cumsum(steps)])
    return path_trajectory_from_l(l, t0, dt, slope_theta, params, coeffs)


def path_trajectory_from_l(l: np.ndarray, t0: float, dt: float,
                           slope_theta, params: VehicleParams,
                           coeffs: FuelCoeffs,
                           v=None, a_v=None, j=None) -> Trajectory:
    """Observation/control trajectory from a path-coordinate trace.

    Derivatives not supplied are estimated by successive differencing.
    """
    l = np.asarray(l, float)
    n = len(l)
    theta = np.broadcast_to(np.asarray(slope_theta, float), (n,))
    if v is None:
        v = _difference_derivatives(l, dt)
    if a_v is None:
        a_v = _difference_derivatives(np.asarray(v, float), dt)
    if j is None:
        j = _difference_derivatives(np.asarray(a_v, float), dt)
    v = np.maximum(np.asarray(v, float), 0.0)
    a_r = resistance_accel(v, theta, params)
    net = np.asarray(a_v, float) + a_r
    a_t = np.maximum(net, 0.0)
    a_b = np.maximum(-net, 0.0)
    f_r = fuel_rate_model(coeffs, v, a_t)
    z = np.column_stack([l, v, a_v, j, theta, a_r, f_r])
    u = np.column_stack([a_t, a_b])
    return Trajectory(t0=t0, dt=dt, z=z, u=u)


@dataclass(frozen=True)
class SafetyGeometry:
    r_safe: float = R_SAFE_DEFAULT
    kappa_max: float = KAPPA_MAX_DEFAULT


@dataclass
class Candidate:
    """One Frenet candidate with all derived views of the same motion."""

    index: int
    s_states: np.ndarray          # (N, 3): s, s', s''
    d_states: np.ndarray          # (N, 3): d, d', d''
    x: np.ndarray
    y: np.ndarray
    yaw: np.ndarray
    curvature: np.ndarray
    path: Trajectory              # z_p, u_p on the path coordinate
    feasible: bool = True
    reason: str | None = None
    objective: float = float("nan")

    @property
    def s_seq(self) -> np.ndarray:
        return self.s_states[:, 0]

    @property
    def d_seq(self) -> np.ndarray:
        return self.d_states[:, 0]


def make_frenet_candidate(index: int, s_seg: QuinticSegment,
                          d_seg: QuinticSegment, ref: ReferenceLine,
                          slope: SlopeProfile, params: VehicleParams,
                          coeffs: FuelCoeffs, t0: float, dt: float,
                          l0: float = 0.0) -> Candidate:
    """Interpolate, transform, and convert one start-end state pair."""
    n = int(round(s_seg.duration / dt))
    t = dt * np.arange(n + 1)
    x, y, yaw, curv = frenet_to_global(s_seg, d_seg, ref, t)
    s = s_seg.position(t)
    theta = slope.theta(s)  # grade rides on the road coordinate
    xy = np.column_stack([x, y])
    steps = np.hypot(*np.diff(xy, axis=0).T)
    l = l0 + np.concatenate([[0.0], np.cumsum(steps)])
    path = path_trajectory_from_l(l, t0, dt, theta, params, coeffs)
    return Candidate(index=index, s_states=s_seg.states(t),
                     d_states=d_seg.states(t), x=x, y=y, yaw=yaw,
                     curvature=curv, path=path)


def feasibility_check(cand: Candidate, params: VehicleParams,
                      predictions=None,
                      geometry: SafetyGeometry = SafetyGeometry()) -> Candidate:
    """Flag a candidate infeasible with the first violated reason."""
    z = cand.path.z
    n = cand.path.n_points
    if predictions is not None:
        for track in predictions:
            track = np.asarray(track, float)
            if track.shape != (n, 2):
                raise AlignmentError(
                    f"prediction shape {track.shape} does not match "
                    f"candidate horizon ({n} points)")
            dist = np.hypot(track[:, 0] - cand.x, track[:, 1] - cand.y)
            if np.min(dist) < geometry.r_safe:
                cand.feasible, cand.reason = False, "collision"
                return cand
    if np.max(np.abs(z[:, 3])) > params.limits.j_max:
        cand.feasible, cand.reason = False, "overjerky"
        return cand
    if np.max(np.abs(cand.curvature)) > geometry.kappa_max:
        cand.feasible, cand.reason = False, "overcurvy"
        return cand
    if (np.any(z[:, 1] > params.limits.v_max + 1e-9) or np.any(z[:, 1] < -1e-9)
            or np.any(z[:, 2] > params.limits.a_v_max + 1e-9)
            or np.any(z[:, 2] < -params.limits.a_b_max - 1e-9)):
        cand.feasible, cand.reason = False, "limits"
        return cand
    cand.feasible, cand.reason = True, None
    return cand


@dataclass(frozen=True)
class Weights:
    """Objective weights [w_v, w_a, w_b, w_j, w_f] and desired speed."""

    w_v: float = 0.0
    w_a: float = 0.0
    w_b: float = 0.0
    w_j: float = 0.0
    w_f: float = 0.0
    v_d: float = 0.0

    def __post_init__(self):
        if min(self.w_v, self.w_a, self.w_b, self.w_j, self.w_f) < 0:
            raise ValueError("weights must be non-negative")

    @classmethod
    def from_vector(cls, w, v_d: float = 0.0) -> "Weights":
        return cls(*[float(x) for x in w], v_d=float(v_d))

    def as_vector(self) -> np.ndarray:
        return np.array([self.w_v, self.w_a, self.w_b, self.w_j, self.w_f])


def evaluate_objective(z: np.ndarray, u: np.ndarray, w: Weights, dt: float,
                       v_track=None) -> float:
    """Discrete general + fuel-efficiency objective over one horizon.

    Sums the left endpoints of the n_T intervals.  ``v_track`` replaces the
    scalar desired speed with a per-step target when given.
    """
    if len(z) != len(u):
        raise AlignmentError("z and u must share length")
    v = z[:-1, 1]
    a_v = z[:-1, 2]
    j = z[:-1, 3]
    f_r = z[:-1, 6]
    a_b = u[:-1, 1]
    vd = np.asarray(v_track, float)[:len(v)] if v_track is not None else w.v_d
    terms = (w.w_v * (v - vd) ** 2 + w.w_a * a_v ** 2 + w.w_b * a_b ** 2
             + w.w_j * j ** 2 + w.w_f * f_r / np.maximum(v, EPS_V))
    return float(dt * np.sum(terms))


def select_candidate(cands: list[Candidate], w: Weights, dt: float,
                     v_track=None) -> Candidate:
    """Feasible candidate with minimal objective; ties keep grid order."""
    best = None
    for cand in cands:
        if not cand.feasible:
            continue
        cand.objective = evaluate_objective(cand.path.z, cand.path.u, w, dt,
                                            v_track=v_track)
        if best is None or cand.objective < best.objective - 1e-12:
            best = cand
    if best is None:
        raise NoFeasibleCandidateError("all candidates infeasible")
    return best


def export_candidate_csv(path, cand: Candidate) -> None:
    """Per-step CSV with global, Frenet, and path-coordinate columns."""
    tr = cand.path
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "x", "y", "yaw", "s", "d", "l", "v", "a_v", "j",
                     "theta", "a_r", "a_t", "a_b", "f_r"])
        for k in range(tr.n_points):
            l, v, a_v, j, th, a_r, f_r = tr.z[k]
            a_t, a_b = tr.u[k]
            row = [tr.t[k], cand.x[k], cand.y[k], cand.yaw[k],
                   cand.s_states[k, 0], cand.d_states[k, 0],
                   l, v, a_v, j, th, a_r, a_t, a_b, f_r]
            wr.writerow([f"{val:.9g}" for val in row])
