"""JSON input loading and CSV result export.

Network files hold {"gas": ..., "power": ...}; scenario files hold the
horizon, discretization, pricing and optional externally fixed unit
dispatch.  All lengths are metres, pressures Pa, gas volumes kcf/hr.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import (Branch, Bus, GasFiredUnit, GasLoad, GasNetwork, Generator,
                    Junction, ModelError, Pipe, PowerNetwork, Scenario,
                    Supplier, validate)


class InputError(ValueError):
    """Malformed or missing input file."""


def _require(d: dict, key: str, ctx: str):
    if key not in d:
        raise InputError(f"{ctx}: missing field {key!r}")
    return d[key]


def load_json(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise InputError(f"no such file: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise InputError(f"{p}: invalid JSON ({e})") from None


def gas_from_dict(d: dict) -> GasNetwork:
    junctions = tuple(
        Junction(id=str(_require(j, "id", "junction")),
                 pr_min=float(_require(j, "pr_min", "junction")),
                 pr_max=float(_require(j, "pr_max", "junction")),
                 is_compressor_inlet=bool(j.get("compressor", False)),
                 compression_ratio=float(j.get("ratio", 1.1)))
        for j in d.get("junctions", []))
    pipes = tuple(
        Pipe(id=str(_require(p, "id", "pipe")),
             from_junction=str(_require(p, "from", "pipe")),
             to_junction=str(_require(p, "to", "pipe")),
             length=float(_require(p, "length", "pipe")),
             diameter=float(_require(p, "diameter", "pipe")),
             friction=float(p.get("friction", 0.01)))
        for p in d.get("pipes", []))
    suppliers = tuple(
        Supplier(id=str(_require(s, "id", "supplier")),
                 junction=str(_require(s, "junction", "supplier")),
                 v_min=float(s.get("v_min", 0.0)),
                 v_max=float(_require(s, "v_max", "supplier")),
                 cost=float(_require(s, "cost", "supplier")))
        for s in d.get("suppliers", []))
    loads = tuple(
        GasLoad(id=str(_require(l, "id", "load")),
                junction=str(_require(l, "junction", "load")),
                profile=tuple((float(a), float(b))
                              for a, b in _require(l, "profile", "load")))
        for l in d.get("loads", []))
    units = tuple(
        GasFiredUnit(id=str(_require(u, "id", "unit")),
                     bus=str(u.get("bus", "")),
                     junction=str(_require(u, "junction", "unit")),
                     heat_rate=float(_require(u, "heat_rate", "unit")),
                     fuel_quad=float(u.get("fuel_quad", 0.0)))
        for u in d.get("units", []))
    return GasNetwork(junctions=junctions, pipes=pipes, suppliers=suppliers,
                      loads=loads, units=units)


def power_from_dict(d: dict) -> PowerNetwork:
    buses = tuple(Bus(id=str(_require(b, "id", "bus")),
                      demand=tuple(float(x) for x in b.get("demand", [])))
                  for b in d.get("buses", []))
    branches = tuple(
        Branch(id=str(_require(b, "id", "branch")),
               from_bus=str(_require(b, "from", "branch")),
               to_bus=str(_require(b, "to", "branch")),
               reactance=float(_require(b, "reactance", "branch")),
               limit=float(_require(b, "limit", "branch")))
        for b in d.get("branches", []))
    generators = tuple(
        Generator(id=str(_require(g, "id", "generator")),
                  bus=str(_require(g, "bus", "generator")),
                  p_min=float(g.get("p_min", 0.0)),
                  p_max=float(_require(g, "p_max", "generator")),
                  cost_a=float(g.get("cost", [0, 0, 0])[0]),
                  cost_b=float(g.get("cost", [0, 0, 0])[1]),
                  cost_c=float(g.get("cost", [0, 0, 0])[2]),
                  kind=str(g.get("kind", "thermal")),
                  profile=tuple(float(x) for x in g.get("profile", [])))
        for g in d.get("generators", []))
    return PowerNetwork(buses=buses, branches=branches, generators=generators)


def load_network(path) -> tuple:
    """Returns (gas, power); power may be None.  Validation findings raise."""
    d = load_json(path)
    if "gas" not in d:
        raise InputError(f"{path}: network file lacks a 'gas' section")
    gas = gas_from_dict(d["gas"])
    power = power_from_dict(d["power"]) if "power" in d else None
    rep = validate(gas, power)
    if not rep.ok:
        raise InputError(f"{path}: " + "; ".join(rep.findings))
    return gas, power


def load_scenario(path, **overrides) -> Scenario:
    d = load_json(path)
    d.update({k: v for k, v in overrides.items() if v is not None})
    known = {"horizon_hours", "dt_s", "dx_m", "kappa_e", "kappa_g", "c_sound",
             "rho_std", "start_hour", "initial_mode", "init_pressure_frac",
             "unit_dispatch"}
    extra = set(d) - known
    if extra:
        raise InputError(f"{path}: unknown scenario fields {sorted(extra)}")
    if "horizon_hours" not in d:
        raise InputError(f"{path}: scenario lacks horizon_hours")
    try:
        return Scenario(**d)
    except ModelError as e:
        raise InputError(f"{path}: {e}") from None


# -- CSV export ----------------------------------------------------------------

def transient_csvs(sol, gas, scenario) -> dict:
    """Solution CSVs keyed by file name; minutes are minutes of day."""
    minute = [scenario.minute_of(t) for t in range(scenario.n_steps + 1)]
    out = {}
    lines = ["pipe,segment,minute,pr_Pa,m_kg_s,gamma"]
    for p in gas.pipes:
        pr, m = sol.pr[p.id], sol.m[p.id]
        for s in range(pr.shape[0]):
            for t in range(pr.shape[1]):
                if sol.gamma is not None and s < sol.gamma[p.id].shape[0] \
                        and t < sol.gamma[p.id].shape[1]:
                    gtxt = f"{sol.gamma[p.id][s, t]:.10e}"
                else:
                    gtxt = ""
                lines.append(f"{p.id},{s + 1},{minute[t]:.2f},"
                             f"{pr[s, t]:.4f},{m[s, t]:.6f},{gtxt}")
    out["pipes.csv"] = "\n".join(lines) + "\n"
    lines = ["junction,minute,pr_J_Pa"]
    for j in gas.junctions:
        for t, mn in enumerate(minute):
            lines.append(f"{j.id},{mn:.2f},{sol.prJ[j.id][t]:.4f}")
    out["junctions.csv"] = "\n".join(lines) + "\n"
    lines = ["supplier,minute,v_kcf_hr"]
    for g in gas.suppliers:
        for t, mn in enumerate(minute):
            lines.append(f"{g.id},{mn:.2f},{sol.v[g.id][t]:.6f}")
    out["suppliers.csv"] = "\n".join(lines) + "\n"
    lines = ["unit,minute,d_kcf_hr"]
    for u in gas.units:
        for t, mn in enumerate(minute):
            lines.append(f"{u.id},{mn:.2f},{sol.d[u.id][t]:.6f}")
    out["units.csv"] = "\n".join(lines) + "\n"
    return out


def steady_csvs(sol, gas, scenario) -> dict:
    """Weymouth CSVs: transient schema with an hour column."""
    H = scenario.horizon_hours
    out = {}
    lines = ["pipe,segment,hour,pr_Pa,m_kg_s,gamma"]
    for p in gas.pipes:
        for h in range(1, H + 1):
            inlet_pr = sol.pr_J[p.from_junction][h - 1]
            lines.append(f"{p.id},0,{h},{inlet_pr:.4f},"
                         f"{sol.Q[p.id][h - 1]:.6f},")
    out["pipes.csv"] = "\n".join(lines) + "\n"
    lines = ["junction,hour,pr_J_Pa"]
    for j in gas.junctions:
        for h in range(1, H + 1):
            lines.append(f"{j.id},{h},{sol.pr_J[j.id][h - 1]:.4f}")
    out["junctions.csv"] = "\n".join(lines) + "\n"
    lines = ["supplier,hour,v_kcf_hr"]
    for g in gas.suppliers:
        for h in range(1, H + 1):
            lines.append(f"{g.id},{h},{sol.v[g.id][h - 1]:.6f}")
    out["suppliers.csv"] = "\n".join(lines) + "\n"
    lines = ["unit,hour,d_kcf_hr"]
    for u in gas.units:
        for h in range(1, H + 1):
            lines.append(f"{u.id},{h},{sol.d[u.id][h - 1]:.6f}")
    out["units.csv"] = "\n".join(lines) + "\n"
    return out


def write_bundle(outdir, files: dict):
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text)
    return out
