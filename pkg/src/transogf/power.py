"""Hourly DC optimal power flow with load shedding.

Solved once over the horizon (hours are decoupled); gas-fired dispatch is
converted into the per-step fuel-demand series consumed by the gas solvers.
The power problem is solved first, its dispatch is then a fixed input to the
gas side.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import backend
from .backend import ConicProgram
from .model import (GasFiredUnit, GasNetwork, ModelError, PowerNetwork,
                    Scenario)
from .transient import hourly_dispatch_to_fuel


class DispatchError(RuntimeError):
    """Raised when no usable dispatch can be produced."""


@dataclass
class DispatchSchedule:
    """Hour-indexed dispatch; hour h = 1..H maps to array slot h-1."""

    p_gen: dict  # generator id -> (H,) MW
    served: dict  # bus id -> (H,) MW
    flow: dict  # branch id -> (H,) MW
    theta: dict  # bus id -> (H,) rad
    objective: float
    max_residual: float = 0.0
    meta: dict = field(default_factory=dict)


def _bus_demand(bus, h: int, H: int) -> float:
    prof = bus.demand
    if not prof:
        return 0.0
    if len(prof) == 1:
        return float(prof[0])
    if len(prof) < H:
        raise ModelError(
            f"bus {bus.id}: demand profile covers {len(prof)} of {H} hours")
    return float(prof[h - 1])


def _gen_cap(gen, h: int, H: int) -> float:
    cap = gen.p_max
    if gen.kind in ("PV", "WT") and gen.profile:
        prof = gen.profile
        if len(prof) == 1:
            cap = min(cap, float(prof[0]))
        elif len(prof) < H:
            raise ModelError(
                f"generator {gen.id}: profile covers {len(prof)} of {H} hours")
        else:
            cap = min(cap, float(prof[h - 1]))
    return cap


def _components(power: PowerNetwork) -> list:
    parent = {b.id: b.id for b in power.buses}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for br in power.branches:
        parent[find(br.from_bus)] = find(br.to_bus)
    comps: dict = {}
    for b in power.buses:
        comps.setdefault(find(b.id), []).append(b.id)
    return list(comps.values())


def build_dcopf(power: PowerNetwork, horizon_hours: int,
                kappa_e: float = 1000.0) -> ConicProgram:
    """Angles, generation, served demand and branch flows per hour, with the
    standard flow-angle rows and a reference angle per connected component."""
    H = horizon_hours
    prog = ConicProgram()
    obj_const = 0.0
    for h in range(1, H + 1):
        for b in power.buses:
            prog.add_variable(f"th[{b.id},{h}]")
            dem = _bus_demand(b, h, H)
            prog.add_variable(f"pd[{b.id},{h}]", 0.0, dem)
            prog.add_objective_term(f"pd[{b.id},{h}]", -kappa_e)
            obj_const += kappa_e * dem
        for g in power.generators:
            cap = _gen_cap(g, h, H)
            prog.add_variable(f"pg[{g.id},{h}]", min(g.p_min, cap), cap)
            prog.add_objective_term(f"pg[{g.id},{h}]", g.cost_b, quad=g.cost_a)
            obj_const += g.cost_c
        for br in power.branches:
            prog.add_variable(f"f[{br.id},{h}]", -br.limit, br.limit)
            prog.add_row([(f"f[{br.id},{h}]", 1.0),
                          (f"th[{br.from_bus},{h}]", -1.0 / br.reactance),
                          (f"th[{br.to_bus},{h}]", 1.0 / br.reactance)],
                         "=", 0.0, name=f"ang[{br.id},{h}]")
        for b in power.buses:
            coeffs = [(f"pd[{b.id},{h}]", -1.0)]
            for g in power.generators:
                if g.bus == b.id:
                    coeffs.append((f"pg[{g.id},{h}]", 1.0))
            for br in power.branches:
                if br.to_bus == b.id:
                    coeffs.append((f"f[{br.id},{h}]", 1.0))
                if br.from_bus == b.id:
                    coeffs.append((f"f[{br.id},{h}]", -1.0))
            prog.add_row(coeffs, "=", 0.0, name=f"pbal[{b.id},{h}]")
        for comp in _components(power):
            ref = min(comp)
            prog.add_row([(f"th[{ref},{h}]", 1.0)], "=", 0.0,
                         name=f"ref[{ref},{h}]")
    prog.obj_const += obj_const
    return prog.freeze()


def extract_dispatch(power: PowerNetwork, horizon_hours: int,
                     prog: ConicProgram, res,
                     residual_tol: float = 1e-6) -> DispatchSchedule:
    """Typed schedule; re-checks every balance/flow row before returning."""
    if res.status not in ("optimal", "numerical-limit") or res.x is None:
        raise DispatchError(f"dispatch solve ended with status {res.status}")
    H = horizon_hours

    def val(name):
        try:
            return float(res.x[prog.var_index[name]])
        except KeyError:
            raise DispatchError(f"stale variable map: missing {name!r}") from None

    p_gen = {g.id: np.array([val(f"pg[{g.id},{h}]") for h in range(1, H + 1)])
             for g in power.generators}
    served = {b.id: np.array([val(f"pd[{b.id},{h}]") for h in range(1, H + 1)])
              for b in power.buses}
    flow = {br.id: np.array([val(f"f[{br.id},{h}]") for h in range(1, H + 1)])
            for br in power.branches}
    theta = {b.id: np.array([val(f"th[{b.id},{h}]") for h in range(1, H + 1)])
             for b in power.buses}
    worst = 0.0
    for row in prog.rows:
        worst = max(worst, abs(prog.row_residual(res.x, row)))
    if worst > residual_tol:
        raise DispatchError(f"dispatch violates rows by {worst:.2e}")
    return DispatchSchedule(p_gen=p_gen, served=served, flow=flow, theta=theta,
                            objective=float(res.objective),
                            max_residual=float(worst),
                            meta={"status": res.status,
                                  "iterations": res.iterations})


def solve_dcopf(power: PowerNetwork, horizon_hours: int,
                kappa_e: float = 1000.0, feas_tol: float = 1e-9,
                gap_tol: float = 1e-9) -> DispatchSchedule:
    prog = build_dcopf(power, horizon_hours, kappa_e=kappa_e)
    res = backend.solve(prog, feas_tol=feas_tol, gap_tol=gap_tol)
    return extract_dispatch(power, horizon_hours, prog, res)


def fuel_demand(unit: GasFiredUnit, p_mw: float) -> float:
    """Fuel (kcf/hr) a unit burns to deliver p_mw."""
    return unit.fuel(p_mw)


def gas_fired_dispatch(gas: GasNetwork, power: PowerNetwork,
                       schedule: DispatchSchedule) -> dict:
    """Hourly MW per gas-fired unit; a unit aggregates all gas-fired
    generation at its bus."""
    out = {}
    for u in gas.units:
        total = None
        for g in power.generators:
            if g.kind == "gas-fired" and g.bus == u.bus:
                arr = schedule.p_gen[g.id]
                total = arr.copy() if total is None else total + arr
        if total is None:
            raise DispatchError(
                f"unit {u.id}: no gas-fired generator at bus {u.bus!r}")
        out[u.id] = list(total)
    return out


def fuel_series(gas: GasNetwork, scenario: Scenario,
                power: PowerNetwork | None = None,
                schedule: DispatchSchedule | None = None) -> dict:
    """Per-step fuel demand (kcf/hr) for every gas-fired unit.

    Dispatch is taken from ``scenario.unit_dispatch`` when supplied, else
    from a DC-OPF schedule (solved here when not passed in).
    """
    if scenario.unit_dispatch:
        dispatch = scenario.unit_dispatch
    else:
        if power is None:
            raise DispatchError("no dispatch source: need a power network or "
                                "scenario.unit_dispatch")
        if schedule is None:
            schedule = solve_dcopf(power, scenario.horizon_hours,
                                   kappa_e=scenario.kappa_e)
        dispatch = gas_fired_dispatch(gas, power, schedule)
    return hourly_dispatch_to_fuel(gas, scenario, dispatch)


def dispatch_csv(gas: GasNetwork, schedule_or_dispatch, horizon_hours: int) -> str:
    """CSV text with columns (hour, unit_id, P_MW, fuel_kcf_hr)."""
    lines = ["hour,unit_id,P_MW,fuel_kcf_hr"]
    if isinstance(schedule_or_dispatch, DispatchSchedule):
        raise ModelError("pass the per-unit hourly MW mapping, not a schedule")
    for u in gas.units:
        hours = schedule_or_dispatch.get(u.id, [])
        for h in range(1, horizon_hours + 1):
            p = float(hours[h - 1]) if h - 1 < len(hours) else 0.0
            lines.append(f"{h},{u.id},{p:.6f},{u.fuel(p):.6f}")
    return "\n".join(lines) + "\n"
