"""Direct-transcription NLP for fuel-optimal trajectory refinement.

One problem instance discretizes the horizon into n_T steps with per-point
states (l, v, a_v) and per-step controls (jerk, brake) as decision
variables; the exact constant-jerk update supplies linear dynamics defect
constraints; traction acceleration is eliminated through the balance
a_t = a_v + a_r(v, theta) + a_b and boxed.  The objective is the same
discretization evaluated by polytraj.evaluate_objective.

The solver is a sequential-quadratic-programming loop: each iterate builds
an exact gradient, a positive-semidefinite projection of the exact
Hessian, and linearized constraints, and hands the sparse QP to Clarabel.
Since the dynamics and boundary rows are linear they are satisfied to
solver precision from the first iterate on; only the traction box is
re-linearized.  A scipy SLSQP fallback covers cross-checking.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

import clarabel

from .errors import AlignmentError, InvalidSpecError
from .params import FuelCoeffs, VehicleParams
from .polytraj import EPS_V, Weights, path_trajectory_from_l
from .trajectory import Trajectory, ZJ, UAB

FEAS_TOL = 1e-6
STEP_TOL = 1e-9
STAT_TOL = 1e-5
MAX_ITER_DEFAULT = 200
# proximal diagonal added to the QP Hessian; keeps the subproblem strictly
# convex so zero-cost directions (e.g. brake under zero brake weight) do
# not wander, without moving the KKT points of the outer problem
_REG = 1e-6


@dataclass(frozen=True)
class AccParams:
    """Spacing-policy constants for car following."""

    t_headway: float = 1.5    # s
    dl_safe: float = 50.0     # m, minimum gap
    dl_max: float = 300.0     # m, maximum tracked gap
    dl_relax: float = 10.0    # m, end-state relaxation radius


@dataclass(frozen=True)
class TrafficPrediction:
    """Predicted traffic motion over the ego horizon (same dt, same grid)."""

    dt: float
    t0: float = 0.0
    path_l: np.ndarray | None = None   # leader position on the ego path, (N,)
    path_v: np.ndarray | None = None   # leader speed, (N,)
    agents_xy: tuple = ()              # per-agent (N, 2) global tracks

    @property
    def n_points(self) -> int:
        if self.path_l is not None:
            return len(self.path_l)
        if self.agents_xy:
            return len(self.agents_xy[0])
        return 0


@dataclass(frozen=True)
class ConstraintSpec:
    """Start/end/path constraint family for one solve."""

    kind: str                                 # bvp | acc-b | acc-r | acc-v | frenet-homotopy
    lead_l: np.ndarray | None = None          # leader path positions, (N,)
    gap_itm: tuple[float, float] | None = None
    gap_end: tuple[float, float] | None = None
    v_track: np.ndarray | None = None         # per-step speed target (acc-v)
    # homotopy end box around the reference endpoint: backward slack on l
    # (never ahead of the candidate endpoint) and a speed window
    end_slack_l: float = 0.0
    end_slack_v: tuple[float, float] = (0.0, 0.0)

    KINDS = ("bvp", "acc-b", "acc-r", "acc-v", "frenet-homotopy")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidSpecError(f"unknown constraint kind {self.kind!r}")


def acc_constraints(variant: str, pred: TrafficPrediction,
                    acc: AccParams) -> ConstraintSpec:
    """Build the gap-constraint set for one ACC variant (B, R, or V)."""
    if acc.dl_safe >= acc.dl_max:
        raise InvalidSpecError("need dl_safe < dl_max")
    if pred.path_l is None or pred.path_v is None:
        raise InvalidSpecError("ACC constraints need a leader path prediction")
    variant = variant.upper()
    dl_acc = acc.t_headway * float(pred.path_v[-1]) + acc.dl_safe
    itm = (acc.dl_safe, acc.dl_max)
    if variant == "B":
        return ConstraintSpec("acc-b", lead_l=pred.path_l, gap_itm=itm,
                              gap_end=(dl_acc, dl_acc))
    if variant == "R":
        return ConstraintSpec("acc-r", lead_l=pred.path_l, gap_itm=itm,
                              gap_end=(dl_acc - acc.dl_relax,
                                       dl_acc + acc.dl_relax))
    if variant == "V":
        return ConstraintSpec("acc-v", lead_l=pred.path_l, gap_itm=itm,
                              gap_end=itm, v_track=np.asarray(pred.path_v))
    raise InvalidSpecError(f"unknown ACC variant {variant!r}")


@dataclass
class SolveStats:
    status: str = "solved"          # solved | max-iter | infeasible
    iterations: int = 0
    wall_time: float = 0.0
    objective: float = float("nan")
    max_violation: float = float("inf")
    stationarity: float = float("nan")
    diagnostic: str = ""


class NLPProblem:
    """One transcribed trajectory-refinement problem."""

    def __init__(self, z_ref: np.ndarray, j_ref: np.ndarray,
                 b_ref: np.ndarray, dt: float, theta_seq: np.ndarray,
                 cons: ConstraintSpec, weights: Weights,
                 params: VehicleParams,
                 coeffs: FuelCoeffs | None = None):
        z_ref = np.asarray(z_ref, float)
        if z_ref.ndim != 2 or z_ref.shape[1] != 3:
            raise AlignmentError("z_ref must be (N, 3) [l, v, a_v]")
        N = len(z_ref)
        nT = N - 1
        if len(j_ref) != nT or len(b_ref) != nT:
            raise AlignmentError("controls must have one entry per interval")
        theta_seq = np.asarray(theta_seq, float)
        if len(theta_seq) != N:
            raise AlignmentError("theta_seq must cover all grid points")
        if cons.lead_l is not None and len(cons.lead_l) != N:
            raise AlignmentError("leader prediction must cover all grid points")
        self.n_T = nT
        self.N = N
        self.dt = float(dt)
        self.z_ref = z_ref
        self.j_ref = np.asarray(j_ref, float)
        self.b_ref = np.asarray(b_ref, float)
        self.theta_seq = theta_seq
        self.cons = cons
        self.weights = weights
        self.params = params
        self.coeffs = coeffs if coeffs is not None else params.fuel
        lim = params.limits
        # grade contribution to resistance, frozen for the whole solve
        self.kg = (params.k2 * np.cos(theta_seq)
                   + params.k3 * np.sin(theta_seq))
        if cons.v_track is not None:
            vt = np.asarray(cons.v_track, float)
            if len(vt) < nT:
                raise AlignmentError("v_track shorter than the horizon")
            self.v_track = vt[:nT]
        else:
            self.v_track = np.full(nT, weights.v_d)
        self.n = 3 * N + 2 * nT
        self._iL = slice(0, N)
        self._iV = slice(N, 2 * N)
        self._iA = slice(2 * N, 3 * N)
        self._iJ = slice(3 * N, 3 * N + nT)
        self._iB = slice(3 * N + nT, 3 * N + 2 * nT)
        self.lim = lim
        self._defect_rows = self._build_defect_rows()

    # ---- packing ----
    def warm_start(self) -> np.ndarray:
        x = np.concatenate([self.z_ref[:, 0], self.z_ref[:, 1],
                            self.z_ref[:, 2], self.j_ref, self.b_ref])
        return self.project_bounds(x)

    def unpack(self, x):
        return (x[self._iL], x[self._iV], x[self._iA],
                x[self._iJ], x[self._iB])

    def project_bounds(self, x: np.ndarray) -> np.ndarray:
        lim = self.lim
        x = x.copy()
        x[self._iV] = np.clip(x[self._iV], 0.0, lim.v_max)
        x[self._iA] = np.clip(x[self._iA], -lim.a_b_max, lim.a_v_max)
        x[self._iJ] = np.clip(x[self._iJ], -lim.j_max, lim.j_max)
        x[self._iB] = np.clip(x[self._iB], 0.0, lim.a_b_max)
        return x

    def traction(self, x):
        l, v, a, j, b = self.unpack(x)
        return (a[:-1] + self.params.k1 * v[:-1] ** 2
                + self.kg[:-1] + b)

    # ---- objective ----
    def _fuel_partials(self, v, at):
        o0, o1, o2, o3, o4 = self.coeffs.o
        c0, c1, c2 = self.coeffs.c
        O = o0 + v * (o1 + v * (o2 + v * (o3 + v * o4)))
        Op = o1 + v * (2 * o2 + v * (3 * o3 + v * 4 * o4))
        Opp = 2 * o2 + v * (6 * o3 + v * 12 * o4)
        C = c0 + v * (c1 + v * c2)
        Cp = c1 + 2 * c2 * v
        Cpp = 2 * c2
        fr = O + C * at
        guard = np.maximum(v, EPS_V)
        m = v > EPS_V
        F = fr / guard
        F_v = np.where(m, ((Op * guard - O) + at * (Cp * guard - C)) / guard ** 2,
                       (Op + Cp * at) / guard)
        F_at = C / guard
        F_vv = np.where(
            m,
            ((Opp * guard ** 2 - 2 * Op * guard + 2 * O)
             + at * (Cpp * guard ** 2 - 2 * Cp * guard + 2 * C)) / guard ** 3,
            (Opp + Cpp * at) / guard)
        F_vat = np.where(m, (Cp * guard - C) / guard ** 2, Cp / guard)
        return F, F_v, F_at, F_vv, F_vat

    def objective(self, x: np.ndarray) -> float:
        l, v, a, j, b = self.unpack(x)
        w = self.weights
        at = self.traction(x)
        F, *_ = self._fuel_partials(v[:-1], at)
        terms = (w.w_v * (v[:-1] - self.v_track) ** 2 + w.w_a * a[:-1] ** 2
                 + w.w_b * b ** 2 + w.w_j * j ** 2 + w.w_f * F)
        return float(self.dt * np.sum(terms))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        l, v, a, j, b = self.unpack(x)
        w = self.weights
        k1 = self.params.k1
        at = self.traction(x)
        F, F_v, F_at, _, _ = self._fuel_partials(v[:-1], at)
        g = np.zeros(self.n)
        gv = np.zeros(self.N)
        ga = np.zeros(self.N)
        gv[:-1] = self.dt * (2 * w.w_v * (v[:-1] - self.v_track)
                             + w.w_f * (F_v + F_at * 2 * k1 * v[:-1]))
        ga[:-1] = self.dt * (2 * w.w_a * a[:-1] + w.w_f * F_at)
        g[self._iV] = gv
        g[self._iA] = ga
        g[self._iJ] = self.dt * 2 * w.w_j * j
        g[self._iB] = self.dt * (2 * w.w_b * b + w.w_f * F_at)
        return g

    def hessian_psd(self, x: np.ndarray) -> sp.csc_matrix:
        """Sparse upper-triangular PSD approximation of the exact Hessian.

        The fuel term's per-step 2x2 Hessian in (v, a_t) is projected onto
        the PSD cone before being chained onto (v, a_v, a_b).
        """
        N, nT = self.N, self.n_T
        l, v, a, j, b = self.unpack(x)
        w = self.weights
        k1 = self.params.k1
        at = self.traction(x)
        _, F_v, F_at, F_vv, F_vat = self._fuel_partials(v[:-1], at)
        hvv = F_vv + 4 * k1 * v[:-1] * F_vat + 2 * k1 * F_at
        hvu = F_vat
        # eigen-projection of [[hvv, hvu], [hvu, 0]]: the low eigenvalue is
        # always <= 0, so the projection is the rank-1 part of the high one
        lam1 = hvv / 2 + np.sqrt(hvv ** 2 / 4 + hvu ** 2)
        small = np.abs(hvu) < 1e-14
        n2 = hvu ** 2 + (lam1 - hvv) ** 2
        n2 = np.where(n2 < 1e-30, 1.0, n2)
        p11 = np.where(small, np.maximum(hvv, 0.0), lam1 * hvu ** 2 / n2)
        p12 = np.where(small, 0.0, lam1 * hvu * (lam1 - hvv) / n2)
        p22 = np.where(small, 0.0, lam1 * (lam1 - hvv) ** 2 / n2)
        dt, wf = self.dt, w.w_f
        ks = np.arange(nT)
        iv, ia, ib = N + ks, 2 * N + ks, 3 * N + nT + ks
        rows, cols, vals = [], [], []

        def add(r, c, val):
            r = np.asarray(r)
            rows.append(r)
            cols.append(np.asarray(c))
            vals.append(np.broadcast_to(val, r.shape).astype(float))

        add(iv, iv, dt * (2 * w.w_v + wf * p11))
        add(iv, ia, dt * wf * p12)
        add(iv, ib, dt * wf * p12)
        add(ia, ia, dt * (2 * w.w_a + wf * p22))
        add(ia, ib, dt * wf * p22)
        add(ib, ib, dt * (2 * w.w_b + wf * p22))
        add(3 * N + ks, 3 * N + ks, dt * 2 * w.w_j)
        diag = np.arange(self.n)
        add(diag, diag, _REG)
        P = sp.coo_matrix(
            (np.concatenate(vals),
             (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.n, self.n))
        return sp.triu(P).tocsc()

    # ---- constraints ----
    def _build_defect_rows(self):
        """COO triplets of the (fixed, linear) dynamics defect rows."""
        N, nT, dt = self.N, self.n_T, self.dt
        ks = np.arange(nT)
        rows, cols, vals = [], [], []
        # row blocks: a-defect rows 0..nT-1, v-defect nT..2nT-1, l-defect 2nT..
        def add(r, c, v):
            rows.append(r), cols.append(c), vals.append(np.broadcast_to(v, r.shape).astype(float))
        iL, iV, iA, iJ = 0, N, 2 * N, 3 * N
        add(ks, iA + ks + 1, 1.0)
        add(ks, iA + ks, -1.0)
        add(ks, iJ + ks, -dt)
        add(nT + ks, iV + ks + 1, 1.0)
        add(nT + ks, iV + ks, -1.0)
        add(nT + ks, iA + ks, -dt)
        add(nT + ks, iJ + ks, -dt * dt / 2)
        add(2 * nT + ks, iL + ks + 1, 1.0)
        add(2 * nT + ks, iL + ks, -1.0)
        add(2 * nT + ks, iV + ks, -dt)
        add(2 * nT + ks, iA + ks, -dt * dt / 2)
        add(2 * nT + ks, iJ + ks, -dt ** 3 / 6)
        A = sp.coo_matrix(
            (np.concatenate(vals),
             (np.concatenate(rows), np.concatenate(cols))),
            shape=(3 * nT, self.n)).tocsr()
        return A

    def defects(self, x: np.ndarray) -> np.ndarray:
        """Per-step integration residuals (zero when dynamics hold)."""
        return self._defect_rows @ x

    def equality_system(self, x):
        """(A_eq, r_eq) with rows A_eq d = -r_eq for the QP step d."""
        N, nT = self.N, self.n_T
        blocks = [self._defect_rows]
        resid = [self.defects(x)]
        l, v, a, j, b = self.unpack(x)
        # init rows pin (l, v, a) at k=0 to the reference start
        init = sp.coo_matrix(
            (np.ones(3), (np.arange(3), [0, N, 2 * N])),
            shape=(3, self.n)).tocsr()
        blocks.append(init)
        resid.append(np.array([l[0] - self.z_ref[0, 0],
                               v[0] - self.z_ref[0, 1],
                               a[0] - self.z_ref[0, 2]]))
        kind = self.cons.kind
        if kind == "bvp":
            end = sp.coo_matrix((np.ones(1), ([0], [N - 1])),
                                shape=(1, self.n)).tocsr()
            blocks.append(end)
            resid.append(np.array([l[-1] - self.z_ref[-1, 0]]))
        elif kind == "frenet-homotopy":
            # acceleration stays pinned for a smooth handover; l and v get
            # their (possibly zero-width) boxes in the inequality system
            end = sp.coo_matrix((np.ones(1), ([0], [3 * N - 1])),
                                shape=(1, self.n)).tocsr()
            blocks.append(end)
            resid.append(np.array([a[-1] - self.z_ref[-1, 2]]))
            if self.cons.end_slack_l <= 0.0:
                end_l = sp.coo_matrix((np.ones(1), ([0], [N - 1])),
                                      shape=(1, self.n)).tocsr()
                blocks.append(end_l)
                resid.append(np.array([l[-1] - self.z_ref[-1, 0]]))
            if self.cons.end_slack_v == (0.0, 0.0):
                end_v = sp.coo_matrix((np.ones(1), ([0], [2 * N - 1])),
                                      shape=(1, self.n)).tocsr()
                blocks.append(end_v)
                resid.append(np.array([v[-1] - self.z_ref[-1, 1]]))
        elif kind == "acc-b":
            lo, up = self.cons.gap_end
            end = sp.coo_matrix((-np.ones(1), ([0], [N - 1])),
                                shape=(1, self.n)).tocsr()
            blocks.append(end)
            gap_T = self.cons.lead_l[-1] - l[-1]
            resid.append(np.array([gap_T - lo]))
        A = sp.vstack(blocks, format="csr")
        return A, np.concatenate(resid)

    def inequality_system(self, x):
        """(G, g, families): rows G d <= -g linearize g(x) <= 0."""
        N, nT = self.N, self.n_T
        lim = self.lim
        k1 = self.params.k1
        l, v, a, j, b = self.unpack(x)
        at = self.traction(x)
        ks = np.arange(nT)
        pts = np.arange(N)
        blocks, vals, fams = [], [], []

        def ident(idx, sign):
            n_rows = len(idx)
            return sp.coo_matrix((np.full(n_rows, float(sign)),
                                  (np.arange(n_rows), idx)),
                                 shape=(n_rows, self.n)).tocsr()

        at_jac = sp.coo_matrix(
            (np.concatenate([2 * k1 * v[:-1], np.ones(nT), np.ones(nT)]),
             (np.concatenate([ks, ks, ks]),
              np.concatenate([N + ks, 2 * N + ks, 3 * N + nT + ks]))),
            shape=(nT, self.n)).tocsr()
        blocks += [-at_jac, at_jac]
        vals += [-at, at - lim.a_t_max]
        fams += [("a_t_lo", nT), ("a_t_hi", nT)]

        blocks += [ident(N + pts, -1), ident(N + pts, 1)]
        vals += [-v, v - lim.v_max]
        fams += [("v_lo", N), ("v_hi", N)]
        blocks += [ident(2 * N + pts, -1), ident(2 * N + pts, 1)]
        vals += [-a - lim.a_b_max, a - lim.a_v_max]
        fams += [("a_v_lo", N), ("a_v_hi", N)]
        blocks += [ident(3 * N + ks, -1), ident(3 * N + ks, 1)]
        vals += [-j - lim.j_max, j - lim.j_max]
        fams += [("jerk_lo", nT), ("jerk_hi", nT)]
        blocks += [ident(3 * N + nT + ks, -1), ident(3 * N + nT + ks, 1)]
        vals += [-b, b - lim.a_b_max]
        fams += [("brake_lo", nT), ("brake_hi", nT)]

        if self.cons.lead_l is not None and self.cons.gap_itm is not None:
            gap = self.cons.lead_l - l
            dls, dlm = self.cons.gap_itm
            blocks += [ident(pts, 1), ident(pts, -1)]
            vals += [dls - gap, gap - dlm]
            fams += [("gap_lo", N), ("gap_hi", N)]
        if self.cons.kind in ("acc-r", "acc-v") and self.cons.gap_end is not None:
            lo, up = self.cons.gap_end
            gap_T = self.cons.lead_l[-1] - l[-1]
            blocks += [ident(np.array([N - 1]), 1),
                       ident(np.array([N - 1]), -1)]
            vals += [np.array([lo - gap_T]), np.array([gap_T - up])]
            fams += [("gap_end_lo", 1), ("gap_end_hi", 1)]
        if self.cons.kind == "frenet-homotopy":
            if self.cons.end_slack_l > 0.0:
                lT = self.z_ref[-1, 0]
                blocks += [ident(np.array([N - 1]), -1),
                           ident(np.array([N - 1]), 1)]
                vals += [np.array([lT - self.cons.end_slack_l - l[-1]]),
                         np.array([l[-1] - lT])]
                fams += [("end_l_lo", 1), ("end_l_hi", 1)]
            if self.cons.end_slack_v != (0.0, 0.0):
                vT = self.z_ref[-1, 1]
                lo_s, hi_s = self.cons.end_slack_v
                blocks += [ident(np.array([2 * N - 1]), -1),
                           ident(np.array([2 * N - 1]), 1)]
                vals += [np.array([vT - lo_s - v[-1]]),
                         np.array([v[-1] - (vT + hi_s)])]
                fams += [("end_v_lo", 1), ("end_v_hi", 1)]
        G = sp.vstack(blocks, format="csr")
        return G, np.concatenate(vals), fams

    def violations(self, x) -> tuple[float, float]:
        """(max violation, l1 violation) across all constraint families."""
        _, r_eq = self.equality_system(x)
        _, g_in, _ = self.inequality_system(x)
        vmax = max(np.max(np.abs(r_eq), initial=0.0),
                   np.max(g_in, initial=0.0))
        l1 = float(np.sum(np.abs(r_eq)) + np.sum(np.maximum(g_in, 0.0)))
        return float(vmax), l1

    def worst_family(self, x) -> str:
        _, g_in, fams = self.inequality_system(x)
        _, r_eq = self.equality_system(x)
        worst, worst_val = "equalities", float(np.max(np.abs(r_eq), initial=0.0))
        pos = 0
        for name, count in fams:
            val = float(np.max(g_in[pos:pos + count], initial=0.0))
            if val > worst_val:
                worst, worst_val = name, val
            pos += count
        return worst

    # ---- output ----
    def solution_trajectory(self, x: np.ndarray, t0: float = 0.0) -> Trajectory:
        l, v, a, j, b = self.unpack(x)
        at = np.clip(self.traction(x), 0.0, None)
        j_full = np.concatenate([j, j[-1:]])
        b_full = np.concatenate([b, b[-1:]])
        at_full = np.concatenate([at, at[-1:]])
        a_r = (self.params.k1 * v ** 2 + self.kg)
        o = self.coeffs
        from .powertrain import fuel_rate_model
        f_r = fuel_rate_model(o, v, at_full)
        z = np.column_stack([l, v, a, j_full, self.theta_seq, a_r, f_r])
        u = np.column_stack([at_full, b_full])
        return Trajectory(t0=t0, dt=self.dt, z=z, u=u)

    def to_dict(self) -> dict:
        c = self.cons
        return {
            "version": 1,
            "n_T": self.n_T, "dt": self.dt,
            "theta_seq": self.theta_seq.tolist(),
            "weights": {"w_v": self.weights.w_v, "w_a": self.weights.w_a,
                        "w_b": self.weights.w_b, "w_j": self.weights.w_j,
                        "w_f": self.weights.w_f, "v_d": self.weights.v_d},
            "vehicle": self.params.to_dict(),
            "coeffs": self.coeffs.to_dict(),
            "constraints": {
                "kind": c.kind,
                "lead_l": None if c.lead_l is None else np.asarray(c.lead_l).tolist(),
                "gap_itm": c.gap_itm, "gap_end": c.gap_end,
                "v_track": None if c.v_track is None else np.asarray(c.v_track).tolist(),
            },
            "warm_start": {"z": self.z_ref.tolist(),
                           "jerk": self.j_ref.tolist(),
                           "brake": self.b_ref.tolist()},
        }


def build_problem(ref: Trajectory, slope_pred, cons: ConstraintSpec,
                  weights: Weights, params: VehicleParams,
                  coeffs: FuelCoeffs | None = None) -> NLPProblem:
    """Transcribe one problem around a reference/warm-start trajectory."""
    theta = np.asarray(getattr(slope_pred, "theta_seq", slope_pred), float)
    z_ref = ref.z[:, :3].copy()
    j_ref = ref.z[:-1, ZJ].copy()
    b_ref = ref.u[:-1, UAB].copy()
    return NLPProblem(z_ref, j_ref, b_ref, ref.dt, theta, cons, weights,
                      params, coeffs=coeffs)


def _solve_qp(P, q, A_eq, r_eq, G, g_in):
    A = sp.vstack([A_eq, G], format="csc")
    bvec = np.concatenate([-r_eq, -g_in])
    cones = [clarabel.ZeroConeT(A_eq.shape[0]),
             clarabel.NonnegativeConeT(G.shape[0])]
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    solver = clarabel.DefaultSolver(P, q, A, bvec, cones, settings)
    sol = solver.solve()
    status = str(sol.status)
    return np.asarray(sol.x), np.asarray(sol.z), status


def solve(problem: NLPProblem, method: str = "sqp",
          maxiter: int = MAX_ITER_DEFAULT, t0: float = 0.0,
          ) -> tuple[Trajectory, SolveStats]:
    """Solve one problem from its warm start.

    Returns the solution trajectory and solve statistics.  For feasible
    warm starts the returned objective never exceeds the warm-start
    objective; the best feasible iterate is tracked throughout.
    """
    if method == "slsqp":
        return _solve_slsqp(problem, maxiter=maxiter, t0=t0)
    tic = time.perf_counter()
    x = problem.warm_start()
    stats = SolveStats()
    best_x, best_obj = None, np.inf
    vmax0, _ = problem.violations(x)
    if vmax0 <= FEAS_TOL:
        best_x, best_obj = x.copy(), problem.objective(x)
    mu = 10.0
    y_last = None
    status = "max-iter"
    it = 0
    for it in range(1, maxiter + 1):
        g = problem.gradient(x)
        P = problem.hessian_psd(x)
        A_eq, r_eq = problem.equality_system(x)
        G, g_in, _ = problem.inequality_system(x)
        d, y, qp_status = _solve_qp(P, g, A_eq, r_eq, G, g_in)
        if "Solved" not in qp_status:
            if "PrimalInfeasible" in qp_status and best_x is None:
                status = "infeasible"
                stats.diagnostic = (
                    f"most violated family: {problem.worst_family(x)}")
            else:
                status = "max-iter"
                stats.diagnostic = f"QP returned {qp_status}"
            break
        vmax_here = max(float(np.max(np.abs(r_eq), initial=0.0)),
                        float(np.max(g_in, initial=0.0)))
        if (float(np.max(np.abs(d), initial=0.0))
                <= 1e-6 * (1.0 + float(np.max(np.abs(x))))
                and vmax_here <= FEAS_TOL):
            y_last = y
            obj_here = problem.objective(x)
            if obj_here < best_obj:
                best_x, best_obj = x.copy(), obj_here
            status = "solved"
            break
        mu = max(mu, 2.0 * float(np.max(np.abs(y), initial=1.0)))
        f0 = problem.objective(x)
        _, l1_0 = problem.violations(x)
        merit0 = f0 + mu * l1_0
        descent = float(g @ d) - mu * l1_0
        alpha = 1.0
        xn = x + d
        for _ in range(30):
            xn = x + alpha * d
            fn = problem.objective(xn)
            _, l1_n = problem.violations(xn)
            if fn + mu * l1_n <= merit0 + 1e-4 * alpha * min(descent, 0.0) + 1e-12:
                break
            alpha *= 0.5
        x = xn
        y_last = y
        vmax, _ = problem.violations(x)
        obj = problem.objective(x)
        if vmax <= FEAS_TOL and obj < best_obj:
            best_x, best_obj = x.copy(), obj
        step = float(np.max(np.abs(alpha * d), initial=0.0))
        if step <= STEP_TOL * (1.0 + float(np.max(np.abs(x)))) and vmax <= FEAS_TOL:
            status = "solved"
            break
        # feasible with a stalled merit: stationary up to solver noise
        if vmax <= FEAS_TOL and abs(obj - f0) <= 1e-10 * (1.0 + abs(f0)):
            status = "solved"
            break
    # never return worse than the best feasible iterate seen (incl. warm start)
    if best_x is not None and best_obj < problem.objective(x) - 1e-12:
        x = best_x
    stats.status = status
    stats.iterations = it
    stats.objective = problem.objective(x)
    stats.max_violation = problem.violations(x)[0]
    if y_last is not None:
        A_eq, _ = problem.equality_system(x)
        G, _, _ = problem.inequality_system(x)
        A = sp.vstack([A_eq, G], format="csr")
        g = problem.gradient(x)
        r = g + A.T @ y_last
        stats.stationarity = float(np.max(np.abs(r))
                                   / (1.0 + np.max(np.abs(g))))
    stats.wall_time = time.perf_counter() - tic
    return problem.solution_trajectory(x, t0=t0), stats


def _solve_slsqp(problem: NLPProblem, maxiter: int = MAX_ITER_DEFAULT,
                 t0: float = 0.0) -> tuple[Trajectory, SolveStats]:
    """Reference path through scipy SLSQP; slow but independent."""
    from scipy.optimize import minimize

    tic = time.perf_counter()
    x0 = problem.warm_start()
    lim = problem.lim
    N, nT = problem.N, problem.n_T
    bounds = ([(None, None)] * N
              + [(0.0, lim.v_max)] * N
              + [(-lim.a_b_max, lim.a_v_max)] * N
              + [(-lim.j_max, lim.j_max)] * nT
              + [(0.0, lim.a_b_max)] * nT)

    def eq(x):
        _, r = problem.equality_system(x)
        return r

    def eq_jac(x):
        A, _ = problem.equality_system(x)
        return A.toarray()

    def ineq(x):
        _, g, _ = problem.inequality_system(x)
        return -g

    def ineq_jac(x):
        G, _, _ = problem.inequality_system(x)
        return -G.toarray()

    res = minimize(problem.objective, x0, jac=problem.gradient,
                   bounds=bounds, method="SLSQP",
                   constraints=[{"type": "eq", "fun": eq, "jac": eq_jac},
                                {"type": "ineq", "fun": ineq, "jac": ineq_jac}],
                   options={"maxiter": maxiter, "ftol": 1e-10})
    x = res.x
    vmax, _ = problem.violations(x)
    stats = SolveStats(
        status="solved" if (res.success and vmax <= 1e-5) else "max-iter",
        iterations=res.nit, wall_time=time.perf_counter() - tic,
        objective=problem.objective(x), max_violation=vmax)
    return problem.solution_trajectory(x, t0=t0), stats


@dataclass
class GradientCheckReport:
    max_rel_err_objective: float
    max_rel_err_constraints: float
    n_points: int

    @property
    def passed(self) -> bool:
        return (self.max_rel_err_objective <= STAT_TOL
                and self.max_rel_err_constraints <= STAT_TOL)


def check_gradients(problem: NLPProblem, n_points: int = 5,
                    seed: int = 0, h: float = 1e-6) -> GradientCheckReport:
    """Compare closed-form first derivatives with central differences."""
    rng = np.random.default_rng(seed)
    x_base = problem.warm_start()
    err_obj, err_con = 0.0, 0.0
    for _ in range(n_points):
        x = x_base + rng.uniform(-0.3, 0.3, size=problem.n)
        x = problem.project_bounds(x)
        # keep speeds clear of the fuel-term guard kink
        x[problem._iV] = np.maximum(x[problem._iV], 1.0)
        g = problem.gradient(x)
        A_eq, r0 = problem.equality_system(x)
        G, g0, _ = problem.inequality_system(x)
        scale_g = np.max(np.abs(g)) + 1.0
        for idx in range(problem.n):
            e = np.zeros(problem.n)
            e[idx] = h
            fp = problem.objective(x + e)
            fm = problem.objective(x - e)
            fd = (fp - fm) / (2 * h)
            err_obj = max(err_obj, abs(fd - g[idx]) / scale_g)
            _, rp = problem.equality_system(x + e)
            _, rm = problem.equality_system(x - e)
            col = (rp - rm) / (2 * h)
            err_con = max(err_con, float(np.max(
                np.abs(col - A_eq[:, idx].toarray().ravel()))) / 1.0)
            _, gp, _ = problem.inequality_system(x + e)
            _, gm, _ = problem.inequality_system(x - e)
            coli = (gp - gm) / (2 * h)
            err_con = max(err_con, float(np.max(
                np.abs(coli - G[:, idx].toarray().ravel())))
                / (1.0 + float(np.max(np.abs(g0)))))
    return GradientCheckReport(max_rel_err_objective=float(err_obj),
                               max_rel_err_constraints=float(err_con),
                               n_points=n_points)


def dump_problem(problem: NLPProblem, solution: Trajectory | None = None,
                 stats: SolveStats | None = None) -> dict:
    """JSON-ready dump: dimensions, bounds, warm start, solution, stats."""
    doc = problem.to_dict()
    lim = problem.lim
    doc["bounds"] = {"v": [0.0, lim.v_max], "a_v": [-lim.a_b_max, lim.a_v_max],
                     "jerk": [-lim.j_max, lim.j_max], "brake": [0.0, lim.a_b_max],
                     "a_t": [0.0, lim.a_t_max]}
    if solution is not None:
        doc["solution"] = {"z": solution.z.tolist(), "u": solution.u.tolist()}
    if stats is not None:
        doc["stats"] = {"status": stats.status, "iterations": stats.iterations,
                        "objective": stats.objective,
                        "max_violation": stats.max_violation,
                        "stationarity": stats.stationarity,
                        "wall_time": stats.wall_time}
    return doc


def save_problem(path, problem: NLPProblem, solution=None, stats=None) -> None:
    with open(path, "w") as fh:
        json.dump(dump_problem(problem, solution, stats), fh, sort_keys=True)
        fh.write("\n")
