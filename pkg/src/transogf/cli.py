"""Command-line entry point: opf / gas / compare subcommands.

Exit codes: 0 success, 1 solver failed to reach a usable optimum,
2 input error.  Bare network/scenario names resolve against the directory
in TRANSOGF_FIXTURES (defaulting to the packaged fixtures).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, analysis, backend, fileio, power, relaxation, steady
from . import transient
from .fileio import InputError

GAS_MODELS = ("weymouth", "scp", "simple-sdp", "standard-rankmin", "proposed")


def _resolve(path: str) -> Path:
    p = Path(path)
    if p.exists():
        return p
    base = os.environ.get("TRANSOGF_FIXTURES")
    if base is None:
        base = Path(__file__).parent / "fixtures"
    cand = Path(base) / path
    if cand.exists():
        return cand
    raise InputError(f"no such file: {path} (also tried {cand})")


def _manifest(args, extra=None) -> dict:
    man = {
        "tool": "transogf",
        "version": __version__,
        "command": args.command,
        "network": str(args.network),
        "scenario": str(args.scenario),
        "dt": args.dt,
        "dx": args.dx,
        "tol_feas": args.tol_feas,
        "tol_gap": args.tol_gap,
        "threads": args.threads,
        "seed": getattr(args, "seed", None),
    }
    man.update(extra or {})
    return man


def _write(outdir, files: dict, manifest: dict):
    files = dict(files)
    files["manifest.json"] = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    fileio.write_bundle(outdir, files)


def _load(args):
    gas, pw = fileio.load_network(_resolve(args.network))
    overrides = {"dt_s": args.dt, "dx_m": args.dx}
    if getattr(args, "hours", None) is not None:
        overrides["horizon_hours"] = args.hours
    scen = fileio.load_scenario(_resolve(args.scenario), **overrides)
    return gas, pw, scen


def unserved_windows(sol, gas, scenario, tol: float = 1e-4) -> list:
    """Contiguous [start_minute, end_minute] spans with d < F per unit."""
    fuel = {u.id: np.asarray(sol.meta.get("fuel_kcfhr", {}).get(u.id))
            for u in gas.units} if "fuel_kcfhr" in sol.meta else None
    spans = []
    for u in gas.units:
        if fuel is None or fuel[u.id] is None:
            continue
        short = sol.d[u.id] < fuel[u.id] - tol
        start = None
        for t, s in enumerate(short):
            if s and start is None:
                start = t
            if not s and start is not None:
                spans.append((u.id, scenario.minute_of(start),
                              scenario.minute_of(t - 1)))
                start = None
        if start is not None:
            spans.append((u.id, scenario.minute_of(start),
                          scenario.minute_of(len(short) - 1)))
    return spans


def cmd_opf(args) -> int:
    gas, pw, scen = _load(args)
    if pw is None:
        raise InputError("network file has no power section")
    if scen.horizon_hours == 0:
        _write(args.out, {"dispatch.csv": "hour,unit_id,P_MW,fuel_kcf_hr\n",
                          "fuel.csv": "unit,minute,F_kcf_hr\n"},
               _manifest(args, {"status": "empty-horizon"}))
        return 0
    try:
        schedule = power.solve_dcopf(pw, scen.horizon_hours,
                                     kappa_e=scen.kappa_e,
                                     feas_tol=args.tol_feas,
                                     gap_tol=args.tol_gap)
    except power.DispatchError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    dispatch = power.gas_fired_dispatch(gas, pw, schedule) if gas.units else {}
    fuel = transient.hourly_dispatch_to_fuel(gas, scen, dispatch)
    lines = ["unit,minute,F_kcf_hr"]
    for u in gas.units:
        for t in range(scen.n_steps + 1):
            lines.append(f"{u.id},{scen.minute_of(t):.2f},{fuel[u.id][t]:.6f}")
    _write(args.out, {
        "dispatch.csv": power.dispatch_csv(gas, dispatch, scen.horizon_hours),
        "fuel.csv": "\n".join(lines) + "\n",
    }, _manifest(args, {"objective": schedule.objective,
                        "max_residual": schedule.max_residual,
                        "status": schedule.meta["status"]}))
    print(f"opf objective {schedule.objective:.2f} $, "
          f"max residual {schedule.max_residual:.2e}")
    return 0


def _fuel_series(gas, pw, scen, args):
    if scen.unit_dispatch or not gas.units:
        return power.fuel_series(gas, scen) if gas.units else {}
    if pw is None:
        raise InputError("no power section and no unit_dispatch in scenario")
    return power.fuel_series(gas, scen, power=pw)


def run_gas_model(gas, pw, scen, model: str, args) -> dict:
    """Run one gas model, returning a summary dict plus CSV payloads."""
    fuel = _fuel_series(gas, pw, scen, args)
    t0 = time.perf_counter()
    if model == "weymouth":
        sol = steady.solve_weymouth(gas, scen, fuel)
        wall = time.perf_counter() - t0
        files = fileio.steady_csvs(sol, gas, scen)
        nph = scen.steps_per_hour
        fuel_hourly = {u: steady.hourly_average(
            np.asarray(fuel[u], dtype=float)[1:], nph) for u in fuel}
        req = sum(float(np.sum(fuel_hourly[u])) for u in fuel_hourly)
        srv = sum(float(np.sum(sol.d[u])) for u in sol.d)
        summary = {"model": model, "status": "optimal",
                   "objective": sol.objective, "wall_s": wall,
                   "cone_gap": sol.cone_gap,
                   "served_fuel_fraction": srv / req if req else 1.0,
                   "hourly_supply": {g: list(map(float, sol.v[g]))
                                     for g in sol.v}}
        return {"summary": summary, "files": files, "solution": sol}
    if model == "scp":
        sol = transient.scp_solve(gas, scen, fuel, max_iter=args.max_iter)
        wall = time.perf_counter() - t0
        sol.meta["fuel_kcfhr"] = {u: list(map(float, np.asarray(fuel[u])))
                                  for u in fuel}
        files = fileio.transient_csvs(sol, gas, scen)
        summary = {"model": model,
                   "status": "optimal" if sol.converged else "non-converged",
                   "objective": sol.objective, "wall_s": wall,
                   "converged": sol.converged,
                   "iterations": sol.meta["iterations"],
                   "feasibility_error": sol.meta["feasibility_error"],
                   "unserved_windows": unserved_windows(sol, gas, scen)}
        return {"summary": summary, "files": files, "solution": sol}
    bundle = relaxation.solve_relaxation(
        gas, scen, fuel, variant=model,
        rankmin_weight=args.rankmin_weight,
        eq8="corrected" if args.eq8_corrected else "verbatim",
        cone_kind=args.cone, feas_tol=args.tol_feas, gap_tol=args.tol_gap)
    wall = time.perf_counter() - t0
    if bundle["solution"] is None:
        return {"summary": {"model": model, "status": bundle["status"],
                            "wall_s": wall}, "files": {}, "solution": None}
    sol, rep = bundle["solution"], bundle["recovery"]
    sol.meta["fuel_kcfhr"] = {u: list(map(float, np.asarray(fuel[u])))
                              for u in fuel}
    tight = analysis.aggregate(sol)
    files = fileio.transient_csvs(sol, gas, scen)
    files["tightness.csv"] = analysis.surface_csv(
        tight, scen.dt_s, start_minute=scen.start_hour * 60.0)
    files["recovery.json"] = json.dumps({
        "max_error": float(rep.max_error), "mean_error": float(rep.mean_error),
        "n_checked": int(rep.n_checked), "tight": bool(rep.tight),
        "worst": list(rep.worst) if rep.worst else None}, indent=2) + "\n"
    summary = {"model": model, "status": bundle["status"],
               "objective": sol.objective, "wall_s": wall,
               "recovery_max_error": rep.max_error,
               "tightness_mean": tight.network_mean,
               "tightness_per_pipe": tight.pipe_mean,
               "feasibility_error": sol.meta["feasibility_error"],
               "unserved_windows": unserved_windows(sol, gas, scen),
               "program_rows": bundle["info"]["n_rows"],
               "program_vars": bundle["info"]["n_vars"],
               "program_cones": bundle["info"]["n_cones"]}
    if model == "proposed":
        # program objective is the scaled sum of lifting variables
        summary["sum_gamma"] = float(bundle["result"].objective) / 1e6
    return {"summary": summary, "files": files, "solution": sol}


def cmd_gas(args) -> int:
    gas, pw, scen = _load(args)
    run = run_gas_model(gas, pw, scen, args.model, args)
    files = dict(run["files"])
    files["summary.json"] = json.dumps(run["summary"], indent=2,
                                       sort_keys=True) + "\n"
    _write(args.out, files, _manifest(args, {"model": args.model}))
    s = run["summary"]
    if s["status"] == "non-converged":
        print("warning: scp did not converge; best iterate kept",
              file=sys.stderr)
    if "objective" not in s:
        print(f"error: {args.model} solve ended with status {s['status']}",
              file=sys.stderr)
        return 1
    print(f"{args.model}: objective {s['objective']:.2f} $ "
          f"({s['status']}, {s['wall_s']:.1f} s)")
    return 0


def cmd_compare(args) -> int:
    gas, pw, scen = _load(args)
    if scen.horizon_hours == 0:
        raise InputError("empty scenario: horizon is zero hours")
    order = ("simple-sdp", "standard-rankmin", "proposed", "scp")
    rows, summaries = [], {}
    for model in order:
        run = run_gas_model(gas, pw, scen, model, args)
        s = run["summary"]
        summaries[model] = s
        rows.append((model, s.get("status", "?"), s.get("wall_s", 0.0),
                     s.get("objective"), s.get("tightness_mean"),
                     s.get("recovery_max_error")))
    ok12 = (summaries["simple-sdp"].get("objective", np.inf)
            <= summaries["standard-rankmin"].get("objective", -np.inf)
            * (1 + 1e-6) + 1e-9)
    ok23 = (summaries["standard-rankmin"].get("objective", np.inf)
            <= summaries["scp"].get("objective", -np.inf) * (1 + 1e-6) + 1e-9)
    lines = ["model,status,wall_s,objective,tightness_mean,recovery_max_error"]
    print(f"{'model':18s} {'status':12s} {'wall_s':>8s} {'objective':>12s} "
          f"{'tightness':>10s} {'recovery':>10s}")
    for model, st, wall, obj, tm, rec in rows:
        fm = lambda x, f: (f % x) if x is not None else ""
        lines.append(f"{model},{st},{wall:.2f},{fm(obj, '%.4f')},"
                     f"{fm(tm, '%.4f')},{fm(rec, '%.3e')}")
        print(f"{model:18s} {st:12s} {wall:8.1f} {fm(obj, '%12.2f'):>12s} "
              f"{fm(tm, '%10.2f'):>10s} {fm(rec, '%10.1e'):>10s}")
    marks = []
    if not ok12:
        marks.append("ordering violation: simple-sdp > standard-rankmin")
    if not ok23:
        marks.append("ordering violation: standard-rankmin > scp")
    for m in marks:
        print("warning:", m, file=sys.stderr)
    _write(args.out, {
        "compare.csv": "\n".join(lines) + "\n",
        "summaries.json": json.dumps(summaries, indent=2, sort_keys=True,
                                     default=str) + "\n",
    }, _manifest(args, {"ordering_ok": ok12 and ok23, "violations": marks}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="transogf",
        description="Transient optimal gas flow toolkit: DC-OPF coupling, "
                    "lifted conic relaxations, Weymouth and SCP baselines.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--network", required=True,
                       help="network JSON (path or fixture name)")
        p.add_argument("--scenario", required=True,
                       help="scenario JSON (path or fixture name)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--dt", type=float, default=None,
                       help="time step override (s)")
        p.add_argument("--dx", type=float, default=None,
                       help="segment length override (m)")
        p.add_argument("--hours", type=int, default=None,
                       help="horizon override (h)")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads (1 = deterministic)")
        p.add_argument("--tol-feas", type=float, default=1e-10)
        p.add_argument("--tol-gap", type=float, default=1e-12)
        p.add_argument("--rankmin-weight", type=float, default=1.0)
        p.add_argument("--max-iter", type=int, default=25,
                       help="scp iteration cap")
        p.add_argument("--eq8-corrected", action="store_true",
                       help="weight the fuel term of the objective-link row "
                            "by the shed-bound multipliers")
        p.add_argument("--cone", choices=("rsoc", "psd2"), default="rsoc")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("opf", help="hourly DC optimal power flow")
    common(p)
    p.set_defaults(func=cmd_opf)
    p = sub.add_parser("gas", help="one gas model run")
    common(p)
    p.add_argument("--model", choices=GAS_MODELS, required=True)
    p.set_defaults(func=cmd_gas)
    p = sub.add_parser("compare", help="all four transient-capable variants")
    common(p)
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except backend.SolveError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
