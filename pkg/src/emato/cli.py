"""Command-line front end: fit, run, matrix, and check subcommands.

Exit codes: 0 success, 1 runtime scenario failure, 2 config/parse error.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cycles import load_cycle_csv, shipped_cycle
from .dynamics import make_slope_profile, load_slope_profile
from .errors import EmatoError, InvalidSpecError
from .params import (published_fuel_coeffs, save_fuel_coeffs, vehicle_params)
from .polytraj import Weights, quintic_fit
from .powertrain import (EngineMapSpec, build_engine_map, fit_fuel_model,
                         optimize_gear_policy, sample_fit_data,
                         save_powertrain, transmission_spec, truck_map_spec,
                         sedan_map_spec, fuel_rate_exact, fuel_rate_model)
from .scenarios import (ACC_ALGOS, FRENET_ALGOS, ScenarioConfig, run_acc,
                        run_cc_png, run_frenet)

CONFIG_DIR_ENV = "EMATO_CONFIG_DIR"


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _resolve_config_path(name: str | None) -> Path | None:
    if name is None:
        return None
    p = Path(name)
    if p.exists():
        return p
    root = os.environ.get(CONFIG_DIR_ENV)
    if root:
        candidate = Path(root) / name
        if candidate.exists():
            return candidate
        candidate = Path(root) / f"{name}.json"
        if candidate.exists():
            return candidate
    raise InvalidSpecError(f"config {name!r} not found")


def _load_scenario_config(args, scenario: str) -> tuple[ScenarioConfig, dict]:
    doc = {}
    cfg_path = _resolve_config_path(getattr(args, "config", None))
    if cfg_path is not None:
        with open(cfg_path) as fh:
            doc = json.load(fh)
        doc = {**doc, **doc.pop("overrides", {})}
    if getattr(args, "vehicle", None):
        doc["vehicle"] = args.vehicle
    if getattr(args, "slope", None):
        if args.slope in ("flat", "rolling", "steep"):
            doc["slope"] = make_slope_profile(args.slope).to_dict()
        else:
            doc["slope"] = load_slope_profile(args.slope).to_dict()
    if getattr(args, "algo", None):
        doc["algorithm"] = args.algo
    if getattr(args, "distance", None):
        doc["distance_m"] = args.distance
    if getattr(args, "seed", None) is not None:
        doc["seed"] = args.seed
    doc.setdefault("algorithm", {"png": "png", "acc": "emato-r",
                                 "frenet": "emato-fm"}[scenario])
    if scenario == "frenet":
        doc.setdefault("distance_m", 2200.0)
    cfg = ScenarioConfig.from_dict(doc)
    return cfg, doc


def _load_cycle(args):
    name = getattr(args, "cycle", None) or "highway"
    if name in ("highway", "urban", "composite"):
        return shipped_cycle(name)
    return load_cycle_csv(name, mph=bool(getattr(args, "mph", False)))


def _write_manifest(out: Path, config_snapshot: dict, inputs: dict,
                    outputs: list[str]) -> str:
    doc = {"tool": "emato", "version": __version__,
           "config": config_snapshot,
           "input_hashes": inputs,
           "outputs": sorted(outputs)}
    path = out / "manifest.json"
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return "manifest.json"


# ------------------------------------------------------------------ fit ----

def cmd_fit(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    params = vehicle_params(args.vehicle)
    if args.use_appendix:
        coeffs = published_fuel_coeffs(args.vehicle)
        save_fuel_coeffs(out / "fuel_coeffs.json", coeffs)
        print(f"wrote published {args.vehicle} coefficients "
              f"(no fitting) to {out / 'fuel_coeffs.json'}")
        return 0
    if args.map_spec:
        with open(args.map_spec) as fh:
            spec = EngineMapSpec(**json.load(fh))
    else:
        spec = truck_map_spec() if args.vehicle == "truck" else sedan_map_spec()
    emap = build_engine_map(spec)
    trans = transmission_spec(args.vehicle)
    v_grid = np.linspace(2.0, params.limits.v_max, 26)
    at_grid = np.linspace(0.0, params.limits.a_t_max, 16)
    policy = optimize_gear_policy(emap, trans, v_grid, at_grid, params)
    samples = sample_fit_data(emap, policy, params)
    result = fit_fuel_model(samples)
    save_fuel_coeffs(out / "fuel_coeffs.json", result.coeffs)
    save_powertrain(out / "powertrain.json", emap, policy)
    report = {"vehicle": args.vehicle, "n_samples": result.n_samples,
              "accuracy_pct": result.accuracy_pct}
    with open(out / "fit_report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if not args.no_plots:
        from .report import fig_engine_map, fig_fit_quality
        fig_engine_map(emap, policy, out / "engine_map.png")
        fig_fit_quality(samples, result.coeffs, out / "fit_quality.png")
    print(f"fit accuracy: {result.accuracy_pct:.2f}% "
          f"({result.n_samples} samples)")
    return 0


# ------------------------------------------------------------------ run ----

def cmd_run(args) -> int:
    from .report import emit_run_report
    cfg, snapshot = _load_scenario_config(args, args.scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    inputs = {}
    cycle = None
    if args.scenario == "png":
        results = run_cc_png(cfg)
    elif args.scenario == "acc":
        cycle = _load_cycle(args)
        if Path(getattr(args, "cycle", "") or "").exists():
            inputs[str(args.cycle)] = _sha256(args.cycle)
        results = {cfg.algorithm: run_acc(cfg, cycle)}
    elif args.scenario == "frenet":
        results = {cfg.algorithm: run_frenet(cfg)}
    else:
        raise InvalidSpecError(f"unknown scenario {args.scenario!r}")
    outputs = emit_run_report(out, results, cfg, cycle=cycle,
                              manifest="manifest.json",
                              plots=not args.no_plots)
    _write_manifest(out, snapshot, inputs, outputs)
    for algo, res in results.items():
        m = res.metrics
        solved = f" mean_solve={res.mean_solve_time()*1000:.1f} ms" \
            if res.solve_stats else ""
        print(f"{algo}: {m.mpg:.2f} mpg, {m.total_fuel_ml:.1f} mL over "
              f"{m.avg_speed * res.trajectory.duration:.0f} m,"
              f" avg {m.avg_speed:.2f} m/s,{solved}"
              f" events={len(res.events)}")
    if args.scenario == "png":
        fuels = {k: r.metrics.total_fuel_ml for k, r in results.items()}
        print(f"comparison: refined {fuels['emato']:.2f} mL vs constant-speed "
              f"{fuels['cc']:.2f} mL vs energy-quintic "
              f"{fuels['energy-quintic']:.2f} mL")
    return 0


# --------------------------------------------------------------- matrix ----

def _matrix_cell(kind: str, vehicle: str, slope_kind: str, algo: str,
                 cycle_name: str, distance: float, seed: int) -> dict:
    cfg = ScenarioConfig(vehicle=vehicle,
                         slope=make_slope_profile(slope_kind),
                         algorithm=algo, distance_m=distance, seed=seed)
    if kind == "acc":
        res = run_acc(cfg, shipped_cycle(cycle_name))
    else:
        res = run_frenet(cfg)
    return {"vehicle": vehicle, "slope": slope_kind, "algorithm": algo,
            "mpg": res.metrics.mpg, "avg_speed": res.metrics.avg_speed,
            "mean_sq_jerk": res.metrics.mean_sq_jerk,
            "events": len(res.events)}


MATRIX_BASELINE = {"emato-b": "quintic", "emato-r": "quintic",
                   "emato-v": "quintic", "emato-fv": "qf-v",
                   "emato-fm": "qf-m", "emato-fe": "qf-e"}


def cmd_matrix(args) -> int:
    kind = args.kind
    algos = list(ACC_ALGOS if kind == "acc" else FRENET_ALGOS)
    vehicles = ["truck", "sedan"]
    slopes = ["flat", "rolling", "steep"]
    distance = args.distance or 2200.0
    cells = [(kind, v, s, a, args.cycle or "highway", distance, args.seed or 0)
             for v in vehicles for s in slopes for a in algos]
    if not cells:
        raise InvalidSpecError("empty matrix spec")
    rows, failures = [], []
    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(args.jobs) as pool:
            futs = {pool.submit(_matrix_cell, *cell): cell for cell in cells}
            for fut in concurrent.futures.as_completed(futs):
                cell = futs[fut]
                try:
                    rows.append(fut.result())
                except Exception as exc:  # cell failure recorded, matrix continues
                    failures.append({"cell": cell[1:4], "error": str(exc)})
    else:
        for cell in cells:
            try:
                rows.append(_matrix_cell(*cell))
            except Exception as exc:
                failures.append({"cell": cell[1:4], "error": str(exc)})
    rows.sort(key=lambda r: (r["vehicle"], r["slope"], r["algorithm"]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"matrix_{kind}.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["vehicle", "slope", "algorithm", "mpg", "avg_speed",
                     "mean_sq_jerk", "events"])
        for r in rows:
            wr.writerow([r["vehicle"], r["slope"], r["algorithm"],
                         f"{r['mpg']:.4f}", f"{r['avg_speed']:.4f}",
                         f"{r['mean_sq_jerk']:.6f}", r["events"]])
    # improvement table in the shape of the published comparisons
    by_key = {(r["vehicle"], r["slope"], r["algorithm"]): r["mpg"] for r in rows}
    with open(out / f"improvement_{kind}.csv", "w", newline="") as fh:
        wr = csv.writer(fh)
        pairs = [(a, b) for a, b in MATRIX_BASELINE.items() if a in algos]
        wr.writerow(["slope", "vehicle"]
                    + [f"{a} vs {b} [%]" for a, b in pairs])
        for s in slopes:
            for v in vehicles:
                row = [s, v]
                for a, b in pairs:
                    try:
                        imp = 100.0 * (by_key[(v, s, a)] / by_key[(v, s, b)] - 1.0)
                        row.append(f"{imp:.2f}")
                    except KeyError:
                        row.append("n/a")
                wr.writerow(row)
    if failures:
        with open(out / f"failures_{kind}.json", "w") as fh:
            json.dump(failures, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(f"{len(rows)} cells done, {len(failures)} failed; "
          f"wrote {out / f'matrix_{kind}.csv'}")
    return 0


# ---------------------------------------------------------------- check ----

def cmd_check(args) -> int:
    ok = True
    if args.kind in ("gradients", "all"):
        from .dynamics import predict_slope
        from .optimizer import ConstraintSpec, build_problem, check_gradients
        from .polytraj import path_trajectory_from_l
        for vehicle in ("truck", "sedan"):
            params = vehicle_params(vehicle)
            dt, n_T = 0.1, 20
            t = dt * np.arange(n_T + 1)
            l = 18.0 * t
            ref = path_trajectory_from_l(
                l, 0.0, dt, np.zeros(n_T + 1), params, params.fuel,
                v=np.full(n_T + 1, 18.0), a_v=np.zeros(n_T + 1),
                j=np.zeros(n_T + 1))
            prob = build_problem(ref, np.full(n_T + 1, 0.01),
                                 ConstraintSpec("bvp"),
                                 Weights(0.5, 1.0, 1.0, 1.0, 10.0, v_d=18.0),
                                 params)
            rep = check_gradients(prob, n_points=5, seed=7)
            status = "pass" if rep.passed else "FAIL"
            print(f"gradients[{vehicle}]: obj {rep.max_rel_err_objective:.2e} "
                  f"con {rep.max_rel_err_constraints:.2e} -> {status}")
            ok &= rep.passed
    if args.kind in ("units", "all"):
        params = vehicle_params("truck")
        emap = build_engine_map(truck_map_spec())
        trans = transmission_spec("truck")
        v_grid = np.linspace(4.0, 26.0, 8)
        at_grid = np.linspace(0.1, 1.5, 6)
        policy = optimize_gear_policy(emap, trans, v_grid, at_grid, params)
        worst = 0.0
        for s in sample_fit_data(emap, policy, params):
            gear = policy.lookup(s.v, s.a_t)
            from .powertrain import engine_state
            omega, torque = engine_state(s.v, s.a_t, gear, policy, params)
            expected = (emap.power(omega, torque) * emap.bsfc(omega, torque)
                        / (3.6e6 * params.fuel.rho_g))
            worst = max(worst, abs(expected - s.f_r))
        passed = worst < 1e-9
        print(f"units: max |identity error| {worst:.2e} -> "
              f"{'pass' if passed else 'FAIL'}")
        ok &= passed
    if args.kind in ("quintic", "all"):
        rng = np.random.default_rng(11)
        worst = 0.0
        for _ in range(1000):
            x0 = rng.uniform(-10, 10, 3)
            xT = rng.uniform(-10, 10, 3)
            T = rng.uniform(0.5, 10.0)
            seg = quintic_fit(x0, xT, T)
            err = max(abs(seg.position(0) - x0[0]), abs(seg.velocity(0) - x0[1]),
                      abs(seg.acceleration(0) - x0[2]),
                      abs(seg.position(T) - xT[0]), abs(seg.velocity(T) - xT[1]),
                      abs(seg.acceleration(T) - xT[2]))
            worst = max(worst, err)
        passed = worst <= 1e-9 * 100  # scaled by state magnitudes up to ~1e2
        print(f"quintic: max boundary error {worst:.2e} over 1000 trials -> "
              f"{'pass' if passed else 'FAIL'}")
        ok &= passed
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="emato",
        description="energy-model-aware trajectory optimization toolkit")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="build a synthetic engine map, optimize "
                                   "the gear policy, and fit the fuel model")
    p.add_argument("--vehicle", choices=("sedan", "truck"), default="truck")
    p.add_argument("--map-spec", help="JSON engine-map spec")
    p.add_argument("--use-appendix", action="store_true",
                   help="emit the published coefficients verbatim, no fitting")
    p.add_argument("--out", default="fit_out")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(fn=cmd_fit)

    p = sub.add_parser("run", help="run one scenario and emit reports")
    p.add_argument("scenario", choices=("png", "acc", "frenet"))
    p.add_argument("--config", help="scenario config JSON (or a name under "
                                    f"${CONFIG_DIR_ENV})")
    p.add_argument("--vehicle", choices=("sedan", "truck"))
    p.add_argument("--slope", help="flat|rolling|steep or a profile JSON file")
    p.add_argument("--algo", help="algorithm id")
    p.add_argument("--cycle", help="highway|urban|composite or a CSV path")
    p.add_argument("--mph", action="store_true",
                   help="cycle CSV speeds are in mph")
    p.add_argument("--distance", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="run_out")
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("matrix", help="run the vehicles x slopes x algorithms "
                                      "matrix and emit summary tables")
    p.add_argument("kind", choices=("acc", "frenet"))
    p.add_argument("--cycle", help="shipped cycle name (ACC)")
    p.add_argument("--distance", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="matrix_out")
    p.set_defaults(fn=cmd_matrix)

    p = sub.add_parser("check", help="validation suites")
    p.add_argument("kind", choices=("gradients", "units", "quintic", "all"))
    p.set_defaults(fn=cmd_check)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors already
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except (InvalidSpecError, FileNotFoundError, json.JSONDecodeError,
            KeyError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except EmatoError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
