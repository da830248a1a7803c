"""Hourly steady-state gas dispatch with the Weymouth pressure-flow law.

Each hour is an independent problem in squared-pressure variables
pi = (pr/P0)^2 with the relaxed cone Q^2 <= k (pi_in - pi_out) under a fixed
flow orientation per pipe.  A tiny downward pressure incentive keeps the
cones tight at optimality on tree-like supplying paths.  There is no
temporal state: linepack effects are invisible to this model by design.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .backend import ConicProgram
from .model import (GasNetwork, ModelError, Scenario, build_grid,
                    kcf_per_hr_to_kg_per_s, kg_per_s_to_kcf_per_hr)
from .transient import P0, fuel_series_kgs, load_series_kgs

PI_TIEBREAK = 1e-2  # $ per squared-pressure unit, pushes pi down onto the cone


def weymouth_k(diameter: float, friction: float, c_sound: float,
               length: float) -> float:
    """Pipe constant k with m^2 = k (pr_in^2 - pr_out^2), SI units."""
    if min(diameter, friction, c_sound, length) <= 0:
        raise ModelError("pipe parameters must be positive")
    return math.pi ** 2 * diameter ** 5 / (16.0 * friction * c_sound ** 2 * length)


def weymouth_flow(k: float, p_m: float, p_n: float) -> float:
    """Signed steady flow between endpoint pressures: the printed law extended
    by sign(p_m^2 - p_n^2) so reversed pipes are representable."""
    if k <= 0:
        raise ModelError(f"k must be positive, got {k}")
    dsq = p_m * p_m - p_n * p_n
    return math.copysign(math.sqrt(k * abs(dsq)), dsq) if dsq != 0.0 else 0.0


def hourly_average(samples, per_hour: int) -> np.ndarray:
    """Arithmetic mean over consecutive blocks of ``per_hour`` samples."""
    arr = np.asarray(samples, dtype=float)
    if per_hour <= 0:
        raise ModelError("per_hour must be positive")
    if arr.size % per_hour:
        raise ModelError(
            f"series length {arr.size} is not a multiple of {per_hour}")
    return arr.reshape(-1, per_hour).mean(axis=1)


@dataclass
class SteadySolution:
    """Hourly Weymouth dispatch; hour index h = 1..H maps to array slot h-1."""

    Q: dict  # pipe id -> (H,) signed kg/s along the pipe's from->to axis
    pr_J: dict  # junction id -> (H,) Pa
    v: dict  # supplier id -> (H,) kcf/hr
    d: dict  # unit id -> (H,) kcf/hr
    objective: float
    cone_gap: float = 0.0  # max relative slack of the Weymouth cones
    meta: dict = field(default_factory=dict)


def hourly_demands(gas: GasNetwork, scenario: Scenario, fuel_kcfhr: dict):
    """Hour-averaged firm loads per junction and fuel per unit (kg/s)."""
    nph = scenario.steps_per_hour
    loads = load_series_kgs(gas, scenario)
    fuels = fuel_series_kgs(gas, scenario, fuel_kcfhr)
    hl = {j: hourly_average(loads[j][1:], nph) for j in loads}
    hf = {u: hourly_average(fuels[u][1:], nph) for u in fuels}
    return hl, hf


def _transport_orientation(gas, scenario, hl, hf, H):
    """Orient pipes by a pressure-free min-cost transport solve."""
    prog = ConicProgram()
    for p in gas.pipes:
        for h in range(1, H + 1):
            prog.add_variable(f"q[{p.id},{h}]")
    for g in gas.suppliers:
        vmin = kcf_per_hr_to_kg_per_s(g.v_min, scenario.rho_std)
        vmax = kcf_per_hr_to_kg_per_s(g.v_max, scenario.rho_std)
        for h in range(1, H + 1):
            prog.add_variable(f"v[{g.id},{h}]", vmin, vmax)
            prog.add_objective_term(f"v[{g.id},{h}]", g.cost)
    for u in gas.units:
        for h in range(1, H + 1):
            prog.add_variable(f"d[{u.id},{h}]", 0.0, float(hf[u.id][h - 1]))
            prog.add_objective_term(f"d[{u.id},{h}]", -scenario.kappa_g)
    for j in gas.junctions:
        for h in range(1, H + 1):
            coeffs = [(f"v[{g.id},{h}]", 1.0) for g in gas.suppliers
                      if g.junction == j.id]
            coeffs += [(f"q[{p.id},{h}]", 1.0) for p in gas.pipes_to(j.id)]
            coeffs += [(f"q[{p.id},{h}]", -1.0) for p in gas.pipes_from(j.id)]
            coeffs += [(f"d[{u.id},{h}]", -1.0) for u in gas.units
                       if u.junction == j.id]
            prog.add_row(coeffs, "=", float(hl[j.id][h - 1]))
    res = backend.solve(prog.freeze())
    orient = {}
    for p in gas.pipes:
        qs = [res.value(prog, f"q[{p.id},{h}]") for h in range(1, H + 1)] \
            if res.x is not None else [1.0]
        orient[p.id] = -1 if sum(qs) < 0 else 1
    return orient


def build_weymouth_ogf(gas: GasNetwork, scenario: Scenario, hl: dict, hf: dict,
                       fuel_kcfhr_hourly: dict, orientation: dict | None = None
                       ) -> ConicProgram:
    """One conic program covering all hours (they remain fully decoupled)."""
    H = scenario.horizon_hours
    orientation = orientation or {p.id: 1 for p in gas.pipes}
    prog = ConicProgram()
    for j in gas.junctions:
        lo, hi = (j.pr_min / P0) ** 2, (j.pr_max / P0) ** 2
        for h in range(1, H + 1):
            prog.add_variable(f"pi[{j.id},{h}]", lo, hi)
    for p in gas.pipes:
        k_scaled = weymouth_k(p.diameter, p.friction, scenario.c_sound,
                              p.length) * P0 * P0
        prog.add_variable(f"wk[{p.id}]", k_scaled, k_scaled)
        inlet = p.from_junction if orientation[p.id] > 0 else p.to_junction
        outlet = p.to_junction if orientation[p.id] > 0 else p.from_junction
        inj = gas.junction(inlet)
        boosted = inj.is_compressor_inlet and orientation[p.id] > 0
        for h in range(1, H + 1):
            prog.add_variable(f"Q[{p.id},{h}]", 0.0)
            prog.add_variable(f"dpi[{p.id},{h}]", 0.0)
            coeffs = [(f"dpi[{p.id},{h}]", 1.0), (f"pi[{outlet},{h}]", 1.0)]
            if boosted:
                # compressed inlet pressure: pi_J <= pic <= ratio^2 pi_J
                prog.add_variable(f"pic[{p.id},{h}]", 0.0)
                prog.add_row([(f"pic[{p.id},{h}]", 1.0),
                              (f"pi[{inlet},{h}]", -1.0)], ">=", 0.0,
                             name=f"wlo[{p.id},{h}]")
                prog.add_row([(f"pic[{p.id},{h}]", 1.0),
                              (f"pi[{inlet},{h}]", -inj.compression_ratio ** 2)],
                             "<=", 0.0, name=f"whi[{p.id},{h}]")
                coeffs.append((f"pic[{p.id},{h}]", -1.0))
            else:
                coeffs.append((f"pi[{inlet},{h}]", -1.0))
            prog.add_row(coeffs, "=", 0.0, name=f"wdrop[{p.id},{h}]")
            prog.add_rotated_cone(f"dpi[{p.id},{h}]", f"wk[{p.id}]",
                                  f"Q[{p.id},{h}]")
    for g in gas.suppliers:
        vmin = kcf_per_hr_to_kg_per_s(g.v_min, scenario.rho_std)
        vmax = kcf_per_hr_to_kg_per_s(g.v_max, scenario.rho_std)
        coef = g.cost * kg_per_s_to_kcf_per_hr(1.0, scenario.rho_std)
        for h in range(1, H + 1):
            prog.add_variable(f"v[{g.id},{h}]", vmin, vmax)
            prog.add_objective_term(f"v[{g.id},{h}]", coef)
    for u in gas.units:
        coef = scenario.kappa_g * kg_per_s_to_kcf_per_hr(1.0, scenario.rho_std)
        for h in range(1, H + 1):
            prog.add_variable(f"d[{u.id},{h}]", 0.0, float(hf[u.id][h - 1]))
            prog.add_objective_term(f"d[{u.id},{h}]", -coef)
            prog.obj_const += scenario.kappa_g * float(
                fuel_kcfhr_hourly[u.id][h - 1])
    for j in gas.junctions:
        for h in range(1, H + 1):
            coeffs = [(f"v[{g.id},{h}]", 1.0) for g in gas.suppliers
                      if g.junction == j.id]
            for p in gas.pipes_to(j.id):
                coeffs.append((f"Q[{p.id},{h}]", float(orientation[p.id])))
            for p in gas.pipes_from(j.id):
                coeffs.append((f"Q[{p.id},{h}]", -float(orientation[p.id])))
            coeffs += [(f"d[{u.id},{h}]", -1.0) for u in gas.units
                       if u.junction == j.id]
            prog.add_row(coeffs, "=", float(hl[j.id][h - 1]),
                         name=f"bal[{j.id},{h}]")
    # downward pressure incentive: makes the relaxed cones bind; boosted
    # inlet pressures need it too, or their drop variables float freely
    for j in gas.junctions:
        for h in range(1, H + 1):
            prog.add_objective_term(f"pi[{j.id},{h}]", PI_TIEBREAK)
    for name in prog.var_index:
        if name.startswith("pic["):
            prog.add_objective_term(name, PI_TIEBREAK)
    return prog.freeze()


def _extract(gas, scenario, prog, res, orientation, hf):
    H = scenario.horizon_hours
    val = lambda n: float(res.x[prog.var_index[n]])
    Q = {p.id: np.array([val(f"Q[{p.id},{h}]") * orientation[p.id]
                         for h in range(1, H + 1)]) for p in gas.pipes}
    pr_J = {j.id: np.array([math.sqrt(max(val(f"pi[{j.id},{h}]"), 0.0)) * P0
                            for h in range(1, H + 1)]) for j in gas.junctions}
    v = {g.id: np.array([kg_per_s_to_kcf_per_hr(val(f"v[{g.id},{h}]"),
                                                scenario.rho_std)
                         for h in range(1, H + 1)]) for g in gas.suppliers}
    d = {u.id: np.array([kg_per_s_to_kcf_per_hr(val(f"d[{u.id},{h}]"),
                                                scenario.rho_std)
                         for h in range(1, H + 1)]) for u in gas.units}
    gap = 0.0
    for p in gas.pipes:
        for h in range(1, H + 1):
            q = val(f"Q[{p.id},{h}]")
            lhs = q * q
            rhs = val(f"dpi[{p.id},{h}]") * val(f"wk[{p.id}]")
            gap = max(gap, abs(rhs - lhs) / max(abs(rhs), abs(lhs), 1e-9))
    # physical cost without the pressure tie-break
    obj = prog.obj_const
    for g in gas.suppliers:
        obj += g.cost * float(np.sum(v[g.id]))
    for u in gas.units:
        obj -= scenario.kappa_g * float(np.sum(d[u.id]))
    return SteadySolution(Q=Q, pr_J=pr_J, v=v, d=d, objective=float(obj),
                          cone_gap=float(gap),
                          meta={"orientation": dict(orientation),
                                "solver_objective": res.objective})


def solve_weymouth(gas: GasNetwork, scenario: Scenario, fuel_kcfhr: dict,
                   feas_tol: float = 1e-11, gap_tol: float = 1e-12) -> SteadySolution:
    """Solve with the nominal pipe orientation; when that fails (cycle flows
    that must reverse), retry with a transport-based orientation and keep the
    better feasible candidate."""
    H = scenario.horizon_hours
    hl, hf = hourly_demands(gas, scenario, fuel_kcfhr)
    nph = scenario.steps_per_hour
    fuels_hourly = {
        u.id: hourly_average(np.asarray(
            fuel_kcfhr.get(u.id, np.zeros(scenario.n_steps + 1)),
            dtype=float)[1:], nph)
        for u in gas.units}
    nominal = {p.id: 1 for p in gas.pipes}
    candidates = [nominal]
    alt = _transport_orientation(gas, scenario, hl, hf, H)
    if alt != nominal:
        candidates.append(alt)
    best = None
    statuses = []
    for orient in candidates:
        prog = build_weymouth_ogf(gas, scenario, hl, hf, fuels_hourly, orient)
        res = backend.solve(prog, feas_tol=feas_tol, gap_tol=gap_tol)
        statuses.append(res.status)
        if res.x is None:
            continue
        sol = _extract(gas, scenario, prog, res, orient, hf)
        if best is None or sol.objective < best.objective:
            best = sol
    if best is None:
        raise backend.SolveError(
            f"weymouth model infeasible under both orientations: {statuses}")
    best.meta["candidate_statuses"] = statuses
    return best
