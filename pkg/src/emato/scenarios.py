"""Closed-loop scenario harnesses and energy-efficiency metrics.

Three harnesses share the replan-execute-advance pattern:

* cruise/pulse-and-glide: a 1-D course split into fixed-length segments,
  each refined as a boundary-value problem against a constant-speed
  reference;
* adaptive cruise control: car following behind a driving-cycle leader
  with spacing constraints from the algorithm library;
* multi-lane Frenet driving: quintic candidate sampling against constant
  speed traffic, optionally refined by the homotopic NLP.

All runs are deterministic for a fixed config (the seed only shapes the
synthetic traffic layout).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cycles import CycleExhausted, DrivingCycle, lead_prediction
from .dynamics import (KinState, SlopeProfile, make_slope_profile,
                       predict_slope, resistance_accel)
from .powertrain import fuel_rate_model
from .errors import (AlignmentError, InvalidSpecError,
                     NoFeasibleCandidateError, UndefinedMetricError)
from .optimizer import (AccParams, ConstraintSpec, NLPProblem, SolveStats,
                        TrafficPrediction, acc_constraints, build_problem,
                        solve)
from .params import (METERS_PER_MILE, ML_PER_GALLON, VehicleParams,
                     vehicle_params)
from .polytraj import (Candidate, QuinticSegment, SafetyGeometry, Weights,
                       evaluate_objective, feasibility_check,
                       gentle_curve_reference, make_frenet_candidate,
                       path_trajectory_from_l, quintic_fit, select_candidate)
from .trajectory import Trajectory, ZL, ZV, ZA, ZJ, ZFR, UAB

# objective weight vectors per algorithm id
ALGO_WEIGHTS = {
    "png-emato": (0.0, 1e-4, 1e-4, 1e-4, 35.0),
    "quintic": (0.0, 0.0, 0.0, 0.0, 1.0),          # "Energy" policy
    "emato-b": (0.0, 14.51, 14.51, 1.16, 38.91),
    "emato-r": (0.0, 14.51, 14.51, 1.16, 38.91),
    "emato-v": (0.01, 14.51, 14.51, 1.16, 38.91),
    "qf-v": (1.0, 0.0, 0.0, 0.0, 0.0),
    "qf-m": (1.0, 0.0, 0.0, 0.001, 100.0),
    "qf-e": (0.0, 0.0, 0.0, 0.0, 1.0),
    "emato-fv": (0.0, 14.51, 14.51, 1.16, 38.91),
    "emato-fm": (0.0, 14.51, 14.51, 1.16, 38.91),
    "emato-fe": (0.0, 14.51, 14.51, 1.16, 38.91),
}

# ablation weight sets (applied to the EMATO-R horizon objective)
ABLATION_WEIGHTS = {
    "jerk": (0.0, 0.0, 0.0, 1.16, 0.0),
    "general": (0.0, 9.51, 9.51, 1.16, 0.0),
    "efficiency": (0.0, 0.0, 0.0, 0.0, 1.0),
    "holistic": (0.0, 9.51, 9.51, 1.16, 38.91),
}

FRENET_BASE_POLICY = {"emato-fv": "qf-v", "emato-fm": "qf-m",
                      "emato-fe": "qf-e"}

# per-policy end-state freedom of the homotopic refinement (slack_l,
# (slack_v below, slack_v above)); the speed policy stays anchored to its
# candidate timing, the efficiency policies may re-time deeply
HOMOTOPY_SLACK = {"emato-fv": (5.0, (1.5, 0.5)),
                  "emato-fm": (20.0, (5.0, 0.5)),
                  "emato-fe": (20.0, (5.0, 0.5))}

FRENET_V_DESIRED = 70.0 / 3.6  # m/s

ACC_ALGOS = ("quintic", "emato-b", "emato-r", "emato-v")
FRENET_ALGOS = ("qf-v", "qf-m", "qf-e", "emato-fv", "emato-fm", "emato-fe")


def acc_spacing(v_l: float, t_headway: float, dl_safe: float) -> float:
    """Desired leader gap: headway-proportional plus a standstill floor."""
    if v_l < 0:
        raise ValueError("leader speed must be non-negative")
    return t_headway * v_l + dl_safe


@dataclass(frozen=True)
class Metrics:
    avg_speed: float       # m/s
    mean_sq_jerk: float    # (m/s^3)^2
    mean_abs_jerk: float   # m/s^3
    total_fuel_ml: float
    ml_per_m: float
    mpg: float

    def to_dict(self) -> dict:
        return {"avg_speed_mps": self.avg_speed,
                "mean_sq_jerk": self.mean_sq_jerk,
                "mean_abs_jerk": self.mean_abs_jerk,
                "total_fuel_ml": self.total_fuel_ml,
                "ml_per_m": self.ml_per_m,
                "mpg": self.mpg}


def mpg_from_ml_per_m(ml_per_m: float) -> float:
    return (ML_PER_GALLON / METERS_PER_MILE) / ml_per_m


def compute_metrics(traj: Trajectory, distance: float | None = None) -> Metrics:
    """Run-level metrics; ``distance`` overrides the path-length span
    (Frenet runs measure on the road coordinate)."""
    if traj.n_steps < 1:
        raise UndefinedMetricError("empty run")
    if distance is None:
        distance = traj.distance()
    duration = traj.duration
    if distance <= 0:
        raise UndefinedMetricError("zero distance; efficiency undefined")
    j = traj.z[:-1, ZJ]
    fuel = traj.total_fuel()
    ml_per_m = fuel / distance
    return Metrics(avg_speed=distance / duration,
                   mean_sq_jerk=float(np.mean(j ** 2)),
                   mean_abs_jerk=float(np.mean(np.abs(j))),
                   total_fuel_ml=fuel,
                   ml_per_m=ml_per_m,
                   mpg=mpg_from_ml_per_m(ml_per_m))


@dataclass
class ScenarioConfig:
    vehicle: str = "truck"
    slope: SlopeProfile = field(default_factory=lambda: make_slope_profile("flat"))
    algorithm: str = "png"
    horizon_s: float = 5.0
    dt: float = 0.1
    # replan cadence; None picks the per-scenario default (ACC 1 s,
    # Frenet 2 s; PnG replans by distance)
    replan_s: float | None = None
    replan_m: float = 150.0      # PnG replan distance
    v_d: float = 20.0
    distance_m: float = 900.0
    acc: AccParams = field(default_factory=AccParams)
    weights: Weights | None = None   # overrides the per-algorithm default
    lane_offsets: tuple = (0.0, 3.5, 7.0)
    # flow speeds per lane index; the middle lane carries the 50 km/h flow
    # and the ego starts in it at flow speed
    lane_speeds_kmh: tuple = (56.0, 50.0, 60.0)
    vehicles_per_lane: int = 18
    traffic_gap_m: float = 110.0
    geometry: SafetyGeometry = field(default_factory=SafetyGeometry)
    # end-state freedom of the homotopic refinement: how far behind the
    # candidate endpoint the re-timed horizon may finish, and the speed
    # window around the candidate end speed; None picks the per-policy
    # default (tight for the speed policy, deep for efficiency policies,
    # which glide clear of the traffic flow)
    homotopy_slack_l: float | None = None
    homotopy_slack_v: tuple | None = None
    seed: int = 0
    solver: str = "sqp"

    def __post_init__(self):
        n_T = self.horizon_s / self.dt
        if abs(n_T - round(n_T)) > 1e-9:
            raise InvalidSpecError("horizon must be an integral number of steps")
        if self.replan_s is not None and self.replan_s > self.horizon_s + 1e-9:
            raise InvalidSpecError("replan interval must not exceed the horizon")

    @property
    def n_T(self) -> int:
        return int(round(self.horizon_s / self.dt))

    def replan_steps_for(self, default_s: float) -> int:
        replan = self.replan_s if self.replan_s is not None else default_s
        if replan > self.horizon_s + 1e-9:
            raise InvalidSpecError("replan interval must not exceed the horizon")
        return int(round(replan / self.dt))

    def resolve_weights(self, algorithm: str | None = None) -> Weights:
        if self.weights is not None:
            return self.weights
        algo = algorithm or self.algorithm
        key = "png-emato" if algo in ("png", "emato") else algo
        if key not in ALGO_WEIGHTS:
            raise InvalidSpecError(f"no default weights for {algo!r}")
        v_d = FRENET_V_DESIRED if algo in FRENET_ALGOS else self.v_d
        return Weights.from_vector(ALGO_WEIGHTS[key], v_d=v_d)

    def to_dict(self) -> dict:
        d = {
            "vehicle": self.vehicle, "slope": self.slope.to_dict(),
            "algorithm": self.algorithm, "horizon_s": self.horizon_s,
            "dt": self.dt, "replan_s": self.replan_s,
            "replan_m": self.replan_m, "v_d": self.v_d,
            "distance_m": self.distance_m,
            "acc": {"t_headway": self.acc.t_headway,
                    "dl_safe": self.acc.dl_safe, "dl_max": self.acc.dl_max,
                    "dl_relax": self.acc.dl_relax},
            "lane_offsets": list(self.lane_offsets),
            "lane_speeds_kmh": list(self.lane_speeds_kmh),
            "vehicles_per_lane": self.vehicles_per_lane,
            "traffic_gap_m": self.traffic_gap_m,
            "geometry": {"r_safe": self.geometry.r_safe,
                         "kappa_max": self.geometry.kappa_max},
            "homotopy_slack_l": self.homotopy_slack_l,
            "homotopy_slack_v": (None if self.homotopy_slack_v is None
                                 else list(self.homotopy_slack_v)),
            "seed": self.seed, "solver": self.solver,
        }
        if self.weights is not None:
            d["weights"] = list(self.weights.as_vector()) + [self.weights.v_d]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        kw = dict(d)
        if "slope" in kw:
            kw["slope"] = SlopeProfile.from_dict(kw["slope"])
        if "acc" in kw:
            kw["acc"] = AccParams(**kw["acc"])
        if "geometry" in kw:
            kw["geometry"] = SafetyGeometry(**kw["geometry"])
        if kw.get("weights") is not None:
            vec = kw["weights"]
            kw["weights"] = Weights.from_vector(vec[:5], v_d=vec[5])
        for name in ("lane_offsets", "lane_speeds_kmh"):
            if name in kw:
                kw[name] = tuple(kw[name])
        if kw.get("homotopy_slack_v") is not None:
            kw["homotopy_slack_v"] = tuple(kw["homotopy_slack_v"])
        return cls(**kw)


@dataclass
class RunResult:
    algorithm: str
    vehicle: str
    slope_kind: str
    trajectory: Trajectory
    metrics: Metrics
    solve_stats: list = field(default_factory=list)
    events: list = field(default_factory=list)
    s_seq: np.ndarray | None = None
    xy: np.ndarray | None = None

    def mean_solve_time(self) -> float:
        times = [s.wall_time for s in self.solve_stats]
        return float(np.mean(times)) if times else 0.0

    def to_dict(self) -> dict:
        d = {"algorithm": self.algorithm, "vehicle": self.vehicle,
             "slope": self.slope_kind, "metrics": self.metrics.to_dict(),
             "events": self.events,
             "n_rollouts": len(self.solve_stats)}
        return d


class _Recorder:
    """Accumulates executed steps and closes with the final grid point."""

    def __init__(self, dt: float):
        self.dt = dt
        self.z_chunks, self.u_chunks = [], []
        self._tail = None

    def execute(self, traj: Trajectory, n_steps: int):
        self.z_chunks.append(traj.z[:n_steps])
        self.u_chunks.append(traj.u[:n_steps])
        self._tail = (traj.z[n_steps], traj.u[n_steps])

    def close(self) -> Trajectory:
        z = np.vstack(self.z_chunks + [self._tail[0][None, :]])
        u = np.vstack(self.u_chunks + [self._tail[1][None, :]])
        return Trajectory(t0=0.0, dt=self.dt, z=z, u=u)


def _remeter_slope(traj: Trajectory, slope: SlopeProfile,
                   params: VehicleParams, coeffs, s_of_l=None) -> Trajectory:
    """Re-read the grade at the executed positions and refresh the fuel
    columns.

    The solver meters fuel on its frozen grade prediction; executed steps
    bill at the grade actually under the vehicle.  Brake commands are
    kept; traction rebalances through the dynamics identity.
    """
    l = traj.z[:, ZL]
    coord = np.interp(l, *s_of_l) if s_of_l is not None else l
    theta = np.broadcast_to(np.atleast_1d(slope.theta(coord)), l.shape)
    a_r = resistance_accel(traj.z[:, ZV], theta, params)
    a_t = np.clip(traj.z[:, ZA] + a_r + traj.u[:, UAB], 0.0, None)
    f_r = fuel_rate_model(coeffs, traj.z[:, ZV], a_t)
    z = traj.z.copy()
    z[:, 4] = theta
    z[:, 5] = a_r
    z[:, ZFR] = f_r
    u = traj.u.copy()
    u[:, 0] = a_t
    return Trajectory(t0=traj.t0, dt=traj.dt, z=z, u=u)


def _constant_speed_trajectory(state: KinState, n_T: int, dt: float,
                               slope: SlopeProfile, params: VehicleParams
                               ) -> Trajectory:
    l = state.l + state.v * dt * np.arange(n_T + 1)
    n = n_T + 1
    return path_trajectory_from_l(
        l, 0.0, dt, slope.theta(l), params, params.fuel,
        v=np.full(n, state.v), a_v=np.zeros(n), j=np.zeros(n))


def _quintic_path_trajectory(seg: QuinticSegment, n_T: int, dt: float,
                             slope: SlopeProfile, params: VehicleParams
                             ) -> Trajectory:
    t = dt * np.arange(n_T + 1)
    l = seg.position(t)
    return path_trajectory_from_l(
        l, 0.0, dt, slope.theta(l), params, params.fuel,
        v=seg.velocity(t), a_v=seg.acceleration(t), j=seg.jerk(t))


def _limits_ok(traj: Trajectory, params: VehicleParams, tol=1e-6) -> bool:
    lim = params.limits
    z = traj.z
    return bool(np.all(z[:, ZV] <= lim.v_max + tol)
                and np.all(z[:, ZV] >= -tol)
                and np.all(z[:, ZA] <= lim.a_v_max + tol)
                and np.all(z[:, ZA] >= -lim.a_b_max - tol)
                and np.all(np.abs(z[:, ZJ]) <= lim.j_max + tol)
                and np.all(traj.u[:, 0] <= lim.a_t_max + tol))


def _brake_to_stop_trajectory(state: KinState, n_T: int, dt: float,
                              slope: SlopeProfile, params: VehicleParams
                              ) -> Trajectory:
    """Jerk-limited emergency braking segment, holding at standstill."""
    lim = params.limits
    l, v, a = state.l, state.v, state.a_v
    ls, vs, as_, js = [l], [v], [a], []
    for _ in range(n_T):
        if v <= 1e-9:
            j = (0.0 - a) / dt
            j = float(np.clip(j, -lim.j_max, lim.j_max))
        else:
            j = float(np.clip((-lim.a_b_max - a) / dt, -lim.j_max, lim.j_max))
        a_new = a + j * dt
        v_new = v + a * dt + 0.5 * j * dt * dt
        l_new = l + v * dt + 0.5 * a * dt * dt + j * dt ** 3 / 6
        if v_new < 0.0:
            v_new = 0.0
            a_new = 0.0
        js.append(j)
        l, v, a = l_new, v_new, a_new
        ls.append(l), vs.append(v), as_.append(a)
    js.append(js[-1])
    larr = np.asarray(ls)
    return path_trajectory_from_l(larr, 0.0, dt, slope.theta(larr), params,
                                  params.fuel, v=np.asarray(vs),
                                  a_v=np.asarray(as_), j=np.asarray(js))


# ---------------------------------------------------------------- PnG ----

def run_cc_png(cfg: ScenarioConfig) -> dict[str, RunResult]:
    """900-m style 1-D course: CC baseline, NLP refinement, energy quintic."""
    params = vehicle_params(cfg.vehicle)
    slope = cfg.slope
    v_d = cfg.v_d
    seg_len = cfg.replan_m
    n_seg = int(round(cfg.distance_m / seg_len))
    seg_T = seg_len / v_d
    n_T = int(round(seg_T / cfg.dt))
    w_emato = cfg.resolve_weights("png-emato")
    w_energy = Weights.from_vector(ALGO_WEIGHTS["quintic"], v_d=v_d)
    results = {}

    def finish(name, rec, stats, events):
        traj = rec.close()
        results[name] = RunResult(
            algorithm=name, vehicle=cfg.vehicle, slope_kind=slope.kind,
            trajectory=traj, metrics=compute_metrics(traj),
            solve_stats=stats, events=events)

    # constant-speed baseline
    rec = _Recorder(cfg.dt)
    state = KinState(0.0, v_d, 0.0)
    for _ in range(n_seg):
        traj = _constant_speed_trajectory(state, n_T, cfg.dt, slope, params)
        rec.execute(traj, n_T)
        state = KinState(*traj.z[n_T, :3])
    finish("cc", rec, [], [])

    # NLP refinement of the constant-speed reference, one BVP per segment
    rec = _Recorder(cfg.dt)
    state = KinState(0.0, v_d, 0.0)
    stats_list, events = [], []
    for seg_i in range(n_seg):
        l_end = (seg_i + 1) * seg_len
        ref_seg = quintic_fit(state.as_tuple(), (l_end, v_d, 0.0), seg_T)
        ref = _quintic_path_trajectory(ref_seg, n_T, cfg.dt, slope, params)
        pred = predict_slope(slope, ref.z[:, ZL])
        problem = build_problem(ref, pred, ConstraintSpec("bvp"), w_emato,
                                params)
        traj, stats = solve(problem, method=cfg.solver)
        stats_list.append(stats)
        if stats.status == "infeasible":
            events.append({"segment": seg_i, "event": "solver-infeasible",
                           "detail": stats.diagnostic})
            traj = ref
        else:
            traj = _remeter_slope(traj, slope, params, params.fuel)
        rec.execute(traj, n_T)
        state = KinState(*traj.z[n_T, :3])
    finish("emato", rec, stats_list, events)

    # best energy-policy quintic candidate per segment
    rec = _Recorder(cfg.dt)
    state = KinState(0.0, v_d, 0.0)
    events = []
    v_offsets = np.arange(-4.0, 2.01, 0.5)
    for seg_i in range(n_seg):
        l_end = (seg_i + 1) * seg_len
        best, best_obj = None, np.inf
        for v_off in v_offsets:
            v_T = v_d + v_off
            if v_T <= 0 or v_T > params.limits.v_max:
                continue
            seg = quintic_fit(state.as_tuple(), (l_end, v_T, 0.0), seg_T)
            traj = _quintic_path_trajectory(seg, n_T, cfg.dt, slope, params)
            if not _limits_ok(traj, params):
                continue
            obj = evaluate_objective(traj.z, traj.u, w_energy, cfg.dt)
            if obj < best_obj - 1e-12:
                best, best_obj = traj, obj
        if best is None:
            events.append({"segment": seg_i, "event": "no-feasible-candidate"})
            best = _quintic_path_trajectory(
                quintic_fit(state.as_tuple(), (l_end, v_d, 0.0), seg_T),
                n_T, cfg.dt, slope, params)
        rec.execute(best, n_T)
        state = KinState(*best.z[n_T, :3])
    finish("energy-quintic", rec, [], events)
    return results


# ---------------------------------------------------------------- ACC ----

def _shift_plan(prev: Trajectory, shift: int, params: VehicleParams) -> Trajectory:
    """Drop executed steps from a plan and pad the tail with coasting."""
    z = prev.z[shift:].copy()
    u = prev.u[shift:].copy()
    pad = shift
    last_z, last_u = z[-1].copy(), u[-1].copy()
    z_pad = np.tile(last_z, (pad, 1))
    z_pad[:, ZA] = 0.0
    z_pad[:, ZJ] = 0.0
    z_pad[:, ZL] = last_z[ZL] + last_z[ZV] * prev.dt * np.arange(1, pad + 1)
    u_pad = np.tile(last_u, (pad, 1))
    return Trajectory(t0=0.0, dt=prev.dt,
                      z=np.vstack([z, z_pad]), u=np.vstack([u, u_pad]))


def _max_advance(state: KinState, horizon: float, dt: float,
                 params: VehicleParams) -> np.ndarray:
    """Per-step upper bound on distance the ego can add over one horizon."""
    lim = params.limits
    n = int(round(horizon / dt))
    v, a, dist = state.v, state.a_v, 0.0
    out = np.empty(n + 1)
    out[0] = 0.0
    for k in range(n):
        a = min(lim.a_v_max, a + lim.j_max * dt)
        v = min(lim.v_max, v + a * dt)
        dist += v * dt
        out[k + 1] = dist
    return out


def _leader_shaped_reference(state: KinState, pred: TrafficPrediction,
                             slope: SlopeProfile, params: VehicleParams
                             ) -> Trajectory:
    """Initial guess that rides the leader's predicted speed profile.

    Integrating the leader speed from the ego state keeps the guess in the
    moving solution basin even when the ego currently crawls; the solver's
    boundary rows re-anchor the head exactly.
    """
    dt = pred.dt
    n = len(pred.path_v)
    v_ref = np.asarray(pred.path_v, float).copy()
    # blend from the ego speed onto the leader profile over ~1 s
    blend = min(10, n - 1)
    ramp = np.linspace(0.0, 1.0, blend + 1)
    v_ref[:blend + 1] = (1 - ramp) * state.v + ramp * v_ref[:blend + 1]
    l_ref = state.l + np.concatenate(
        [[0.0], np.cumsum(0.5 * (v_ref[1:] + v_ref[:-1]) * dt)])
    a_ref = np.gradient(v_ref, dt, edge_order=1)
    np.clip(a_ref, -params.limits.a_b_max, params.limits.a_v_max, out=a_ref)
    j_ref = np.gradient(a_ref, dt, edge_order=1)
    np.clip(j_ref, -params.limits.j_max, params.limits.j_max, out=j_ref)
    # the head is an equality anchor: it must be the realized ego state
    a_ref[0] = state.a_v
    return path_trajectory_from_l(l_ref, 0.0, dt, slope.theta(l_ref), params,
                                  params.fuel, v=v_ref, a_v=a_ref, j=j_ref)


def _quintic_acc_plan(state: KinState, pred: TrafficPrediction,
                      cfg: ScenarioConfig, params: VehicleParams
                      ) -> Trajectory | None:
    """Energy-policy quintic with the end state inside the spacing band.

    When no candidate lands inside the band (the ego has fallen far
    behind), a catch-up pass keeps only the safety gap and picks the
    fastest feasible candidate.
    """
    acc = cfg.acc
    n_T = cfg.n_T
    dacc_T = acc_spacing(float(pred.path_v[-1]), acc.t_headway, acc.dl_safe)
    w_energy = Weights.from_vector(ALGO_WEIGHTS["quintic"], v_d=cfg.v_d)
    best, best_obj = None, np.inf
    for gap_extra in (0.0, 5.0, 10.0, 15.0, 25.0, 40.0):
        gap_T = dacc_T + gap_extra
        if gap_T > acc.dl_max:
            continue
        l_T = float(pred.path_l[-1]) - gap_T
        if l_T <= state.l + 0.5:
            continue
        for v_off in (-3.0, -2.0, -1.0, 0.0, 1.0):
            v_T = float(np.clip(pred.path_v[-1] + v_off, 0.0,
                                params.limits.v_max))
            seg = quintic_fit(state.as_tuple(), (l_T, v_T, 0.0),
                              cfg.horizon_s)
            traj = _quintic_path_trajectory(seg, n_T, cfg.dt, cfg.slope,
                                            params)
            if not _limits_ok(traj, params):
                continue
            gap = pred.path_l - traj.z[:, ZL]
            if np.min(gap) < acc.dl_safe - 1e-6:
                continue
            obj = evaluate_objective(traj.z, traj.u, w_energy, cfg.dt)
            if obj < best_obj - 1e-12:
                best, best_obj = traj, obj
    if best is not None:
        return best
    # catch-up pass: safety gap only, fastest feasible end speed
    for v_T in np.arange(params.limits.v_max, -0.1, -2.0):
        v_T = float(max(v_T, 0.0))
        l_T = state.l + 0.5 * (state.v + v_T) * cfg.horizon_s
        l_T = min(l_T, float(pred.path_l[-1]) - acc.dl_safe)
        if l_T <= state.l:
            continue
        seg = quintic_fit(state.as_tuple(), (l_T, v_T, 0.0), cfg.horizon_s)
        traj = _quintic_path_trajectory(seg, n_T, cfg.dt, cfg.slope, params)
        if not _limits_ok(traj, params):
            continue
        gap = pred.path_l - traj.z[:, ZL]
        if np.min(gap) < acc.dl_safe - 1e-6:
            continue
        return traj
    return None


def run_acc(cfg: ScenarioConfig, cycle: DrivingCycle) -> RunResult:
    """Closed-loop car following behind a driving-cycle leader."""
    if cfg.algorithm not in ACC_ALGOS:
        raise InvalidSpecError(f"unknown ACC algorithm {cfg.algorithm!r}")
    params = vehicle_params(cfg.vehicle)
    acc = cfg.acc
    n_T, dt = cfg.n_T, cfg.dt
    R = cfg.replan_steps_for(1.0)
    weights = cfg.resolve_weights()
    v_l0 = float(cycle.speed_at(0.0))
    offset = acc_spacing(v_l0, acc.t_headway, acc.dl_safe)
    state = KinState(0.0, v_l0, 0.0)
    rec = _Recorder(dt)
    stats_list, events = [], []
    prev_plan = None
    t0 = 0.0
    while t0 < cycle.total_time - 1e-9:
        pred = lead_prediction(cycle, t0, n_T, dt, l_offset=offset)
        plan, used = None, cfg.algorithm
        if cfg.algorithm == "quintic":
            plan = _quintic_acc_plan(state, pred, cfg, params)
        else:
            variant = cfg.algorithm.split("-")[1]
            # the tracked band can become kinematically unreachable (deep
            # glide while the leader accelerates); relax its ceiling to the
            # best-effort gap so every solve stays feasible and catches up
            reach = _max_advance(state, cfg.horizon_s, dt, params)
            gap_floor = float(np.max(pred.path_l - (state.l + reach))) + 2.0
            acc_eff = acc
            if gap_floor > acc.dl_max:
                acc_eff = replace(acc, dl_max=gap_floor + 1.0)
            cons = acc_constraints(variant, pred, acc_eff)
            ref = _leader_shaped_reference(state, pred, cfg.slope, params)
            slope_pred = predict_slope(cfg.slope, ref.z[:, ZL])
            problem = build_problem(ref, slope_pred, cons, weights, params)
            traj, stats = solve(problem, method=cfg.solver)
            stats_list.append(stats)
            if stats.status == "solved":
                plan = _remeter_slope(traj, cfg.slope, params, params.fuel)
            else:
                events.append({"t": t0, "event": "solver-" + stats.status,
                               "detail": stats.diagnostic})
                plan = _quintic_acc_plan(state, pred, cfg, params)
                used = "quintic-fallback"
        if plan is None and prev_plan is not None and cfg.algorithm != "quintic":
            plan = _shift_plan(prev_plan, R, params)
            used = "previous-tail"
            events.append({"t": t0, "event": "fallback-previous-tail"})
        if plan is None:
            plan = _brake_to_stop_trajectory(state, n_T, dt, cfg.slope, params)
            used = "emergency-brake"
            events.append({"t": t0, "event": "fallback-emergency-brake"})
        # hard safety assert on the steps about to be executed
        gap = pred.path_l[:R + 1] - plan.z[:R + 1, ZL]
        if np.min(gap) < acc.dl_safe - 1e-6:
            brake = _brake_to_stop_trajectory(state, n_T, dt, cfg.slope,
                                              params)
            gap_b = pred.path_l[:R + 1] - brake.z[:R + 1, ZL]
            events.append({"t": t0, "event": "safety-brake",
                           "detail": f"min gap {float(np.min(gap)):.2f} m "
                                     f"with {used}"})
            plan = brake
        rec.execute(plan, R)
        state = KinState(*plan.z[R, :3])
        prev_plan = plan if used != "emergency-brake" else None
        t0 += R * dt
    traj = rec.close()
    return RunResult(algorithm=cfg.algorithm, vehicle=cfg.vehicle,
                     slope_kind=cfg.slope.kind, trajectory=traj,
                     metrics=compute_metrics(traj), solve_stats=stats_list,
                     events=events)


def leader_gap_trace(result: RunResult, cycle: DrivingCycle,
                     cfg: ScenarioConfig) -> np.ndarray:
    """Executed leader-ego gap per step (for safety checks and plots)."""
    v_l0 = float(cycle.speed_at(0.0))
    offset = acc_spacing(v_l0, cfg.acc.t_headway, cfg.acc.dl_safe)
    t = result.trajectory.t
    lead = np.asarray(cycle.position_at(t)) + offset
    return lead - result.trajectory.z[:, ZL]


# -------------------------------------------------------------- Frenet ----

@dataclass(frozen=True)
class TrafficAgent:
    lane: int
    s0: float
    speed: float

    def s_at(self, t):
        return self.s0 + self.speed * np.asarray(t, float)


@dataclass
class FrenetTraffic:
    agents: list[TrafficAgent]

    @classmethod
    def build(cls, cfg: ScenarioConfig) -> "FrenetTraffic":
        rng = np.random.default_rng(cfg.seed)
        agents = []
        stagger = (40.0, 95.0, 150.0)
        for lane, speed_kmh in enumerate(cfg.lane_speeds_kmh):
            speed = speed_kmh / 3.6
            for k in range(cfg.vehicles_per_lane):
                jitter = float(rng.uniform(-10.0, 10.0))
                s0 = stagger[lane % len(stagger)] + k * cfg.traffic_gap_m + jitter
                agents.append(TrafficAgent(lane=lane, s0=s0, speed=speed))
        return cls(agents=agents)


def homotopy_safety_check(l_opt: np.ndarray, ref_xy: np.ndarray,
                          predictions_xy, safety_radius: float,
                          l_ref: np.ndarray) -> tuple[bool, float]:
    """Accept a time-reallocated trajectory when the worst waypoint shift
    still fits inside the reference's clearance to predicted traffic."""
    xi = float(np.max(np.abs(np.asarray(l_opt) - np.asarray(l_ref))))
    if not predictions_xy:
        return True, xi
    clearance = np.full(len(l_ref), np.inf)
    for track in predictions_xy:
        d = np.hypot(track[:, 0] - ref_xy[:, 0], track[:, 1] - ref_xy[:, 1])
        clearance = np.minimum(clearance, d)
    return bool(np.all(clearance >= xi + safety_radius)), xi


def _frenet_candidates(cfg: ScenarioConfig, ref_line, s_state, d_state,
                       l0: float, params: VehicleParams) -> list[Candidate]:
    """Lateral ends at lane centers; longitudinal ends sample speed around
    the desired speed and arrival position around the trapezoidal reach
    (early-acceleration / late-acceleration variants)."""
    n_T, dt = cfg.n_T, cfg.dt
    T = cfg.horizon_s
    v_d = FRENET_V_DESIRED
    cands = []
    idx = 0
    s0, sd0, sdd0 = s_state
    for d_T in cfg.lane_offsets:
        for v_off in np.arange(-4.0, 2.01, 1.0):
            v_T = v_d + v_off
            if v_T <= 0 or v_T > params.limits.v_max:
                continue
            for s_off in (-15.0, 0.0, 15.0):
                s_T = s0 + 0.5 * (sd0 + v_T) * T + s_off
                if s_T <= s0 + 1.0:
                    continue
                s_seg = quintic_fit((s0, sd0, sdd0), (s_T, v_T, 0.0), T)
                d_seg = quintic_fit(tuple(d_state), (d_T, 0.0, 0.0), T)
                cands.append(make_frenet_candidate(
                    idx, s_seg, d_seg, ref_line, cfg.slope, params,
                    params.fuel, 0.0, dt, l0=l0))
                idx += 1
    return cands


def run_frenet(cfg: ScenarioConfig,
               traffic: FrenetTraffic | None = None) -> RunResult:
    """Iterative Frenet framework over a multi-lane constant-speed flow."""
    if cfg.algorithm not in FRENET_ALGOS:
        raise InvalidSpecError(f"unknown Frenet algorithm {cfg.algorithm!r}")
    params = vehicle_params(cfg.vehicle)
    n_T, dt = cfg.n_T, cfg.dt
    R = cfg.replan_steps_for(2.0)
    refine = cfg.algorithm in FRENET_BASE_POLICY
    policy = FRENET_BASE_POLICY.get(cfg.algorithm, cfg.algorithm)
    w_policy = cfg.resolve_weights(policy)
    w_refine = cfg.resolve_weights(cfg.algorithm) if refine else None
    if traffic is None:
        traffic = FrenetTraffic.build(cfg)
    road_len = cfg.distance_m + 60.0 * cfg.horizon_s
    ref_line = gentle_curve_reference(road_len, lane_offsets=cfg.lane_offsets)
    mid = cfg.lane_offsets[len(cfg.lane_offsets) // 2]
    s_state = np.array([0.0, 50.0 / 3.6, 0.0])
    d_state = np.array([mid, 0.0, 0.0])
    l0 = 0.0
    rec = _Recorder(dt)
    stats_list, events = [], []
    s_chunks, xy_chunks = [], []
    prev = None  # (candidate, executed trajectory, step offset)
    t0 = 0.0
    while True:
        t = dt * np.arange(n_T + 1)
        pred_xy = []
        for agent in traffic.agents:
            s_a = np.clip(agent.s_at(t0 + t), 0.0, ref_line.s_max)
            base = ref_line.position(s_a)
            yaw = ref_line.heading(s_a)
            off = cfg.lane_offsets[agent.lane]
            pred_xy.append(np.column_stack([base[:, 0] - off * np.sin(yaw),
                                            base[:, 1] + off * np.cos(yaw)]))
        cands = _frenet_candidates(cfg, ref_line, s_state, d_state, l0, params)
        for cand in cands:
            feasibility_check(cand, params, pred_xy, cfg.geometry)
        plan = None
        try:
            chosen = select_candidate(cands, w_policy, dt)
        except NoFeasibleCandidateError:
            chosen = None
            events.append({"t": t0, "event": "no-feasible-candidate"})
        if chosen is not None:
            exec_traj = chosen.path
            s_of_l = (chosen.path.z[:, ZL], chosen.s_seq)
            d_of_l = (chosen.path.z[:, ZL], chosen.d_seq)
            x_of_l = (chosen.path.z[:, ZL], chosen.x)
            y_of_l = (chosen.path.z[:, ZL], chosen.y)
            if refine:
                slack_l, slack_v = HOMOTOPY_SLACK[cfg.algorithm]
                if cfg.homotopy_slack_l is not None:
                    slack_l = cfg.homotopy_slack_l
                if cfg.homotopy_slack_v is not None:
                    slack_v = tuple(cfg.homotopy_slack_v)
                pred = predict_slope(cfg.slope, chosen.s_seq)
                spec = ConstraintSpec("frenet-homotopy",
                                      end_slack_l=slack_l,
                                      end_slack_v=slack_v)
                problem = build_problem(chosen.path, pred, spec,
                                        w_refine, params)
                traj, stats = solve(problem, method=cfg.solver)
                stats_list.append(stats)
                if stats.status == "solved":
                    ref_xy = np.column_stack([chosen.x, chosen.y])
                    ok, xi = homotopy_safety_check(
                        traj.z[:, ZL], ref_xy, pred_xy,
                        cfg.geometry.r_safe, chosen.path.z[:, ZL])
                    if ok:
                        exec_traj = _remeter_slope(
                            traj, cfg.slope, params, params.fuel,
                            s_of_l=(chosen.path.z[:, ZL], chosen.s_seq))
                    else:
                        events.append({"t": t0, "event": "homotopy-reject",
                                       "detail": f"xi={xi:.3f} m"})
                else:
                    events.append({"t": t0,
                                   "event": "solver-" + stats.status,
                                   "detail": stats.diagnostic})
            plan = (exec_traj, s_of_l, d_of_l, x_of_l, y_of_l)
            prev = (plan, 0)
        elif prev is not None:
            plan_prev, off_prev = prev
            off_new = off_prev + R
            if off_new + R + 1 < plan_prev[0].n_points:
                shifted = Trajectory(
                    t0=0.0, dt=dt,
                    z=plan_prev[0].z[off_new:],
                    u=plan_prev[0].u[off_new:])
                plan = (shifted,) + plan_prev[1:]
                prev = (plan_prev, off_new)
                events.append({"t": t0, "event": "fallback-previous-tail"})
        if plan is None:
            state = KinState(l0, float(s_state[1]), float(s_state[2]))
            brake = _brake_to_stop_trajectory(state, n_T, dt, cfg.slope,
                                              params)
            lane_xy = None
            s_lin = np.clip(
                s_state[0] + (brake.z[:, ZL] - l0), 0.0, ref_line.s_max)
            base = ref_line.position(s_lin)
            yaw = ref_line.heading(s_lin)
            d_here = d_state[0]
            xs = base[:, 0] - d_here * np.sin(yaw)
            ys = base[:, 1] + d_here * np.cos(yaw)
            plan = (brake, (brake.z[:, ZL], s_lin),
                    (brake.z[:, ZL], np.full(n_T + 1, d_here)),
                    (brake.z[:, ZL], xs), (brake.z[:, ZL], ys))
            events.append({"t": t0, "event": "fallback-emergency-brake"})
            prev = None
        exec_traj, s_of_l, d_of_l, x_of_l, y_of_l = plan
        l_exec = exec_traj.z[:R + 1, ZL]
        s_exec = np.interp(l_exec, *s_of_l)
        d_exec = np.interp(l_exec, *d_of_l)
        x_exec = np.interp(l_exec, *x_of_l)
        y_exec = np.interp(l_exec, *y_of_l)
        rec.execute(exec_traj, R)
        s_chunks.append(s_exec[:R])
        xy_chunks.append(np.column_stack([x_exec[:R], y_exec[:R]]))
        # advance ego along the executed motion
        l0 = float(exec_traj.z[R, ZL])
        l_loc = exec_traj.z[:, ZL]
        s_all = np.interp(l_loc[R - 1:R + 2], *s_of_l)
        d_all = np.interp(l_loc[R - 1:R + 2], *d_of_l)
        s_state = np.array([s_all[1], (s_all[2] - s_all[0]) / (2 * dt),
                            (s_all[2] - 2 * s_all[1] + s_all[0]) / dt ** 2])
        d_state = np.array([d_all[1], (d_all[2] - d_all[0]) / (2 * dt),
                            (d_all[2] - 2 * d_all[1] + d_all[0]) / dt ** 2])
        t0 += R * dt
        if s_state[0] >= cfg.distance_m:
            s_chunks.append(s_exec[R:R + 1])
            xy_chunks.append(np.column_stack([x_exec[R:R + 1],
                                              y_exec[R:R + 1]]))
            break
        if t0 > 3600.0:
            events.append({"t": t0, "event": "timeout"})
            s_chunks.append(s_exec[R:R + 1])
            xy_chunks.append(np.column_stack([x_exec[R:R + 1],
                                              y_exec[R:R + 1]]))
            break
    traj = rec.close()
    s_seq = np.concatenate(s_chunks)
    xy = np.vstack(xy_chunks)
    distance = float(s_seq[-1] - s_seq[0])
    metrics = compute_metrics(traj, distance=distance)
    return RunResult(algorithm=cfg.algorithm, vehicle=cfg.vehicle,
                     slope_kind=cfg.slope.kind, trajectory=traj,
                     metrics=metrics, solve_stats=stats_list, events=events,
                     s_seq=s_seq, xy=xy)


def frenet_min_clearance(result: RunResult, cfg: ScenarioConfig,
                         traffic: FrenetTraffic | None = None) -> float:
    """Minimum executed distance to any traffic agent (collision audit)."""
    if traffic is None:
        traffic = FrenetTraffic.build(cfg)
    road_len = cfg.distance_m + 60.0 * cfg.horizon_s
    ref_line = gentle_curve_reference(road_len, lane_offsets=cfg.lane_offsets)
    t = result.trajectory.t[:len(result.xy)]
    dmin = np.inf
    for agent in traffic.agents:
        s_a = np.clip(agent.s_at(t), 0.0, ref_line.s_max)
        base = ref_line.position(s_a)
        yaw = ref_line.heading(s_a)
        off = cfg.lane_offsets[agent.lane]
        ax = base[:, 0] - off * np.sin(yaw)
        ay = base[:, 1] + off * np.cos(yaw)
        d = np.hypot(ax - result.xy[:, 0], ay - result.xy[:, 1])
        dmin = min(dmin, float(np.min(d)))
    return dmin
