"""Report emission: per-step CSV, metrics/event JSON, and PNG figures.

Metrics and event files are byte-deterministic for a fixed config (no
wall-clock content); solver timings go to a separate stats file.  Figures
render through the Agg backend straight to disk.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .cycles import DrivingCycle
from .dynamics import SlopeProfile
from .scenarios import (RunResult, ScenarioConfig, acc_spacing,
                        leader_gap_trace)

STEP_COLUMNS = ["t", "l", "v", "a_v", "j", "theta", "a_r", "a_t", "a_b", "f_r"]


def write_steps_csv(path, result: RunResult) -> None:
    """Executed trajectory, one row per grid point."""
    tr = result.trajectory
    extra = []
    if result.s_seq is not None:
        extra.append(("s", result.s_seq))
    if result.xy is not None:
        extra.append(("x", result.xy[:, 0]))
        extra.append(("y", result.xy[:, 1]))
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(STEP_COLUMNS + [name for name, _ in extra])
        for k in range(tr.n_points):
            l, v, a, j, th, ar, fr = tr.z[k]
            at, ab = tr.u[k]
            row = [tr.t[k], l, v, a, j, th, ar, at, ab, fr]
            for _, arr in extra:
                row.append(arr[k] if k < len(arr) else arr[-1])
            wr.writerow([f"{x:.9g}" for x in row])


def write_metrics_json(path, result: RunResult, manifest: str | None = None) -> None:
    doc = result.to_dict()
    if manifest:
        doc["manifest"] = manifest
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_events_json(path, result: RunResult, manifest: str | None = None) -> None:
    doc = {"algorithm": result.algorithm, "events": result.events}
    if manifest:
        doc["manifest"] = manifest
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_solve_stats_json(path, result: RunResult) -> None:
    """Timing-bearing stats; excluded from the determinism contract."""
    rows = [{"status": s.status, "iterations": s.iterations,
             "objective": s.objective, "max_violation": s.max_violation,
             "wall_time": s.wall_time} for s in result.solve_stats]
    doc = {"algorithm": result.algorithm, "n_solves": len(rows),
           "mean_wall_time": result.mean_solve_time(), "solves": rows}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def fig_speed_vs_distance(results: dict[str, RunResult], path) -> None:
    fig, ax = plt.subplots(figsize=(8, 3.2))
    for name, res in results.items():
        z = res.trajectory.z
        ax.plot(z[:, 0], z[:, 1], label=name, lw=1.0)
    ax.set_xlabel("path distance l [m]")
    ax.set_ylabel("speed v [m/s]")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    _finish(fig, path)


def fig_fuel_rate(results: dict[str, RunResult], path) -> None:
    fig, ax = plt.subplots(figsize=(8, 3.2))
    for name, res in results.items():
        tr = res.trajectory
        ax.plot(tr.t, tr.z[:, 6], label=name, lw=0.9)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("fuel rate [mL/s]")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    _finish(fig, path)


def fig_gap_trace(result: RunResult, cycle: DrivingCycle, cfg: ScenarioConfig,
                  path) -> None:
    gap = leader_gap_trace(result, cycle, cfg)
    t = result.trajectory.t
    fig, ax = plt.subplots(figsize=(8, 3.2))
    ax.plot(t, gap, lw=1.0, label="gap")
    v_l = np.asarray(cycle.speed_at(t))
    ax.plot(t, acc_spacing(0.0, 0.0, cfg.acc.dl_safe) + 0 * t, "r--", lw=0.8,
            label="minimum gap")
    ax.plot(t, cfg.acc.t_headway * v_l + cfg.acc.dl_safe, "g:", lw=0.8,
            label="spacing target")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("leader gap [m]")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    _finish(fig, path)


def fig_elevation(slope: SlopeProfile, s_max: float, path) -> None:
    s = np.linspace(0.0, s_max, 400)
    fig, axes = plt.subplots(2, 1, figsize=(8, 4), sharex=True)
    axes[0].plot(s, np.atleast_1d(slope.theta(s)), lw=1.0)
    axes[0].set_ylabel("grade [rad]")
    axes[0].grid(alpha=0.3)
    axes[1].plot(s, np.atleast_1d(slope.elevation(s)), lw=1.0)
    axes[1].set_ylabel("elevation [m]")
    axes[1].set_xlabel("road coordinate s [m]")
    axes[1].grid(alpha=0.3)
    _finish(fig, path)


def fig_frenet_trace(result: RunResult, path) -> None:
    if result.xy is None:
        return
    fig, axes = plt.subplots(2, 1, figsize=(8, 4.6))
    axes[0].plot(result.xy[:, 0], result.xy[:, 1], lw=1.0)
    axes[0].set_xlabel("x [m]")
    axes[0].set_ylabel("y [m]")
    axes[0].set_title("executed global trace", fontsize=9)
    axes[0].grid(alpha=0.3)
    n = min(len(result.s_seq), result.trajectory.n_points)
    axes[1].plot(result.trajectory.t[:n], result.s_seq[:n], lw=1.0)
    axes[1].set_xlabel("time [s]")
    axes[1].set_ylabel("road coordinate s [m]")
    axes[1].grid(alpha=0.3)
    _finish(fig, path)


def fig_engine_map(emap, policy, path) -> None:
    fig, axes = plt.subplots(1, 2, figsize=(9.5, 3.6))
    W, T = np.meshgrid(emap.speed_grid, emap.torque_grid, indexing="ij")
    cs = axes[0].contourf(W, T, emap.bsfc_surface, levels=18, cmap="viridis")
    axes[0].plot(emap.speed_grid, emap.torque_ceiling, "r-", lw=1.2)
    fig.colorbar(cs, ax=axes[0], label="BSFC [g/kWh]")
    axes[0].set_xlabel("engine speed [rad/s]")
    axes[0].set_ylabel("torque [N m]")
    table = np.ma.masked_less(policy.table, 0)
    im = axes[1].pcolormesh(policy.v_grid, policy.at_grid, table.T,
                            cmap="tab10", shading="nearest")
    fig.colorbar(im, ax=axes[1], label="gear index")
    axes[1].set_xlabel("speed v [m/s]")
    axes[1].set_ylabel("traction accel a_t [m/s^2]")
    _finish(fig, path)


def fig_fit_quality(samples, coeffs, path) -> None:
    from .powertrain import fuel_rate_model
    v = np.array([s.v for s in samples])
    at = np.array([s.a_t for s in samples])
    fr = np.array([s.f_r for s in samples])
    pred = fuel_rate_model(coeffs, v, at)
    fig, ax = plt.subplots(figsize=(4.2, 4.0))
    ax.scatter(fr, pred, s=8, alpha=0.6)
    lim = [0.0, max(float(fr.max()), float(pred.max())) * 1.05]
    ax.plot(lim, lim, "k--", lw=0.8)
    ax.set_xlabel("map fuel rate [mL/s]")
    ax.set_ylabel("model fuel rate [mL/s]")
    ax.grid(alpha=0.3)
    _finish(fig, path)


def emit_run_report(out_dir, results: dict[str, RunResult],
                    cfg: ScenarioConfig, cycle: DrivingCycle | None = None,
                    manifest: str | None = None, plots: bool = True) -> list[str]:
    """Write the full per-run artifact set; returns emitted file names."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def emit(name, fn):
        fn(out / name)
        written.append(name)

    for algo, res in results.items():
        tag = algo.replace("/", "-")
        emit(f"metrics_{tag}.json",
             lambda p, r=res: write_metrics_json(p, r, manifest))
        emit(f"steps_{tag}.csv", lambda p, r=res: write_steps_csv(p, r))
        emit(f"events_{tag}.json",
             lambda p, r=res: write_events_json(p, r, manifest))
        if res.solve_stats:
            emit(f"solve_stats_{tag}.json",
                 lambda p, r=res: write_solve_stats_json(p, r))
    if plots:
        emit("speed_vs_distance.png",
             lambda p: fig_speed_vs_distance(results, p))
        emit("fuel_rate.png", lambda p: fig_fuel_rate(results, p))
        emit("elevation.png",
             lambda p: fig_elevation(cfg.slope, max(cfg.distance_m, 100.0), p))
        if cycle is not None:
            for algo, res in results.items():
                emit(f"gap_{algo}.png",
                     lambda p, r=res: fig_gap_trace(r, cycle, cfg, p))
        for algo, res in results.items():
            if res.xy is not None:
                emit(f"trace_{algo}.png",
                     lambda p, r=res: fig_frenet_trace(r, p))
    return written
