"""Shared assembly of the transient gas network program.

Builds the linear part of the discretized problem once, in two momentum
flavours: ``lifted`` keeps the friction term as a separate gamma variable
(to be tied to m^2/pr by cones downstream), ``scp`` replaces it by a
first-order expansion around a supplied linearization point.

Scaling used inside programs: pressures are expressed in units of ``P0``
(1 MPa), mass flows in kg/s, and gamma in SI times ``P0`` so that the cone
identity  pr_hat * gam_hat >= m^2  matches the physical  pr * gamma >= m^2.
Continuity rows are multiplied by 2*dt/P0 and momentum rows by dx/P0 so the
pressure stencil enters with unit coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backend import ConicProgram
from .model import GasNetwork, Grid, Scenario, kg_per_s_to_kcf_per_hr
from .transient import (
    P0, SteadyField, TransientSolution, cont_coef, friction_coef,
    fuel_series_kgs, inertia_coef, load_series_kgs,
)


def prj_name(j, t):
    return f"prJ[{j},{t}]"


def pr_name(p, s, t):
    return f"pr[{p},{s},{t}]"


def m_name(p, s, t):
    return f"m[{p},{s},{t}]"


def gam_name(p, s, t):
    return f"gam[{p},{s},{t}]"


def v_name(g, t):
    return f"v[{g},{t}]"


def d_name(u, t):
    return f"d[{u},{t}]"


@dataclass
class GasAssembly:
    """A built gas program plus everything needed to interpret it."""

    program: ConicProgram
    gas: GasNetwork
    scenario: Scenario
    grid: Grid
    init: SteadyField
    fuel_kcfhr: dict
    fuel_kgs: dict
    loads_kgs: dict
    mode: str
    gamma_set: list = field(default_factory=list)  # (pipe, s, t) with gamma vars
    meta: dict = field(default_factory=dict)


def build_gas_program(gas: GasNetwork, scenario: Scenario, grid: Grid,
                      fuel_kcfhr: dict, init: SteadyField, mode: str = "lifted",
                      lin_point: dict | None = None,
                      prox_center: dict | None = None,
                      prox_weight: float = 0.0) -> GasAssembly:
    if mode not in ("lifted", "scp"):
        raise ValueError(f"unknown momentum mode {mode!r}")
    if mode == "scp" and lin_point is None:
        raise ValueError("scp mode needs a linearization point")
    T = grid.n_steps
    prog = ConicProgram(sense="min")
    fuel_kgs = fuel_series_kgs(gas, scenario, fuel_kcfhr)
    loads = load_series_kgs(gas, scenario)

    for j in gas.junctions:
        for t in range(1, T + 1):
            prog.add_variable(prj_name(j.id, t), j.pr_min / P0, j.pr_max / P0)
    for p in gas.pipes:
        for t in range(1, T + 1):
            for s in grid.segments(p.id):
                prog.add_variable(pr_name(p.id, s, t), 0.0)
                prog.add_variable(m_name(p.id, s, t), 0.0)
    from .model import kcf_per_hr_to_kg_per_s
    for g in gas.suppliers:
        vmin = kcf_per_hr_to_kg_per_s(g.v_min, scenario.rho_std)
        vmax = kcf_per_hr_to_kg_per_s(g.v_max, scenario.rho_std)
        for t in range(1, T + 1):
            prog.add_variable(v_name(g.id, t), vmin, vmax)
    for u in gas.units:
        for t in range(1, T + 1):
            prog.add_variable(d_name(u.id, t), 0.0, float(fuel_kgs[u.id][t]))
    gamma_set = []
    if mode == "lifted":
        for p in gas.pipes:
            for s, t in grid.dyn_rows(p.id):
                prog.add_variable(gam_name(p.id, s, t), 0.0)
                gamma_set.append((p.id, s, t))

    # junction coupling and compressor window, t = 1..T
    for p in gas.pipes:
        n = grid.n_seg[p.id]
        fj = gas.junction(p.from_junction)
        for t in range(1, T + 1):
            if fj.is_compressor_inlet:
                prog.add_row([(pr_name(p.id, 1, t), 1.0), (prj_name(fj.id, t), -1.0)],
                             ">=", 0.0, name=f"clo[{p.id},{t}]")
                prog.add_row([(pr_name(p.id, 1, t), 1.0),
                              (prj_name(fj.id, t), -fj.compression_ratio)],
                             "<=", 0.0, name=f"chi[{p.id},{t}]")
            else:
                prog.add_row([(pr_name(p.id, 1, t), 1.0), (prj_name(fj.id, t), -1.0)],
                             "=", 0.0, name=f"cfr[{p.id},{t}]")
            prog.add_row([(pr_name(p.id, n, t), 1.0),
                          (prj_name(p.to_junction, t), -1.0)],
                         "=", 0.0, name=f"cto[{p.id},{t}]")

    # nodal mass balance in kg/s, t = 1..T
    for j in gas.junctions:
        for t in range(1, T + 1):
            coeffs = []
            for g in gas.suppliers:
                if g.junction == j.id:
                    coeffs.append((v_name(g.id, t), 1.0))
            for p in gas.pipes_to(j.id):
                coeffs.append((m_name(p.id, grid.n_seg[p.id], t), 1.0))
            for p in gas.pipes_from(j.id):
                coeffs.append((m_name(p.id, 1, t), -1.0))
            for u in gas.units:
                if u.junction == j.id:
                    coeffs.append((d_name(u.id, t), -1.0))
            prog.add_row(coeffs, "=", float(loads[j.id][t]),
                         name=f"bal[{j.id},{t}]")

    # dynamics rows over (s, t), t = 0..T-1
    dt, dx, c = scenario.dt_s, scenario.dx_m, scenario.c_sound
    for p in gas.pipes:
        a = cont_coef(c, p.diameter, dx)
        b = inertia_coef(p.diameter, dt)
        cf = friction_coef(p.friction, c, p.diameter)
        km = 2.0 * dt * a / P0  # flow coefficient in the scaled continuity row
        kb = dx * b / P0  # flow coefficient in the scaled momentum row
        pr0 = init.pr[p.id]
        m0 = init.m[p.id]
        for s, t in grid.dyn_rows(p.id):
            # continuity, scaled by 2*dt/P0
            coeffs = [(pr_name(p.id, s + 1, t + 1), 1.0),
                      (pr_name(p.id, s, t + 1), 1.0),
                      (m_name(p.id, s + 1, t + 1), km),
                      (m_name(p.id, s, t + 1), -km)]
            rhs = 0.0
            if t == 0:
                rhs += (pr0[s] + pr0[s - 1]) / P0
            else:
                coeffs += [(pr_name(p.id, s + 1, t), -1.0),
                           (pr_name(p.id, s, t), -1.0)]
            prog.add_row(coeffs, "=", rhs, name=f"cont[{p.id},{s},{t}]")

            # momentum, scaled by dx/P0 then by wm = P0^2/(dx*cf) so the
            # lifted friction variable enters with a unit coefficient (this
            # keeps gam_hat well resolved at the solver's row tolerance)
            wm = P0 * P0 / (dx * cf)
            cmap = {pr_name(p.id, s + 1, t + 1): wm,
                    pr_name(p.id, s, t + 1): -wm,
                    m_name(p.id, s + 1, t + 1): kb * wm,
                    m_name(p.id, s, t + 1): kb * wm}

            def acc(name, c):
                cmap[name] = cmap.get(name, 0.0) + c

            rhs = 0.0
            if t == 0:
                rhs += kb * wm * (m0 + m0)
            else:
                acc(m_name(p.id, s + 1, t), -kb * wm)
                acc(m_name(p.id, s, t), -kb * wm)
            if mode == "lifted":
                # gam_hat = gamma * P0; coefficient (dx*cf/P0^2) * wm = 1
                acc(gam_name(p.id, s, t), 1.0)
            else:
                if t == 0:
                    rhs -= P0 * m0 * m0 / pr0[s - 1]
                else:
                    mb = float(lin_point["m"][p.id][s - 1, t])
                    pb = float(lin_point["pr"][p.id][s - 1, t])
                    acc(m_name(p.id, s, t), P0 * 2.0 * mb / pb)
                    acc(pr_name(p.id, s, t), -P0 * P0 * mb * mb / (pb * pb))
            prog.add_row(cmap, "=", rhs, name=f"mom[{p.id},{s},{t}]")

    # objective: supply cost minus shed-fuel credit, in dollars
    hours_per_step = dt / 3600.0
    to_kcfhr = kg_per_s_to_kcf_per_hr(1.0, scenario.rho_std)
    obj_const = 0.0
    for g in gas.suppliers:
        coef = g.cost * to_kcfhr * hours_per_step
        for t in range(1, T + 1):
            prog.add_objective_term(v_name(g.id, t), coef)
    for u in gas.units:
        coef = scenario.kappa_g * to_kcfhr * hours_per_step
        for t in range(1, T + 1):
            prog.add_objective_term(d_name(u.id, t), -coef)
            obj_const += scenario.kappa_g * float(fuel_kcfhr_value(
                fuel_kcfhr, u.id, t)) * hours_per_step
    prog.obj_const += obj_const

    # optional proximal pull toward a reference point (SCP stabilization)
    if prox_weight > 0.0 and prox_center is not None:
        for p in gas.pipes:
            for s in range(1, grid.n_seg[p.id]):
                for t in range(1, T):
                    for stem, center, scale in (
                            ("m", float(prox_center["m"][p.id][s - 1, t]), 1.0),
                            ("pr", float(prox_center["pr"][p.id][s - 1, t]) / P0, 1.0)):
                        xn = f"{stem}[{p.id},{s},{t}]"
                        en = f"prox_{xn}"
                        prog.add_variable(en, 0.0)
                        prog.add_row([(en, 1.0), (xn, -1.0)], ">=", -center,
                                     name=f"px_lo_{xn}")
                        prog.add_row([(en, 1.0), (xn, 1.0)], ">=", center,
                                     name=f"px_hi_{xn}")
                        prog.add_objective_term(en, prox_weight * scale)

    return GasAssembly(program=prog, gas=gas, scenario=scenario, grid=grid,
                       init=init, fuel_kcfhr={
                           u.id: np.asarray(fuel_kcfhr.get(u.id, np.zeros(T + 1)),
                                            dtype=float) for u in gas.units},
                       fuel_kgs=fuel_kgs, loads_kgs=loads, mode=mode,
                       gamma_set=gamma_set)


def fuel_kcfhr_value(fuel_kcfhr: dict, uid: str, t: int) -> float:
    arr = fuel_kcfhr.get(uid)
    return float(np.asarray(arr, dtype=float)[t]) if arr is not None else 0.0


def extract_solution(asm: GasAssembly, res) -> TransientSolution:
    """Unscale a solver point into physical fields, t=0 from the steady init."""
    gas, grid, scen = asm.gas, asm.grid, asm.scenario
    T = grid.n_steps
    val = {name: float(res.x[j]) for name, j in asm.program.var_index.items()} \
        if res.x is not None else {}

    prJ = {}
    for j in gas.junctions:
        arr = np.empty(T + 1)
        arr[0] = asm.init.prJ[j.id]
        for t in range(1, T + 1):
            arr[t] = val[prj_name(j.id, t)] * P0
        prJ[j.id] = arr
    pr, m = {}, {}
    for p in gas.pipes:
        n = grid.n_seg[p.id]
        apr = np.empty((n, T + 1))
        am = np.empty((n, T + 1))
        apr[:, 0] = asm.init.pr[p.id]
        am[:, 0] = asm.init.m[p.id]
        for t in range(1, T + 1):
            for s in range(1, n + 1):
                apr[s - 1, t] = val[pr_name(p.id, s, t)] * P0
                am[s - 1, t] = val[m_name(p.id, s, t)]
        pr[p.id] = apr
        m[p.id] = am
    gamma = None
    if asm.mode == "lifted":
        gamma = {}
        for p in gas.pipes:
            g = np.zeros((grid.n_seg[p.id] - 1, T))
            gamma[p.id] = g
        for (pid, s, t) in asm.gamma_set:
            gamma[pid][s - 1, t] = val[gam_name(pid, s, t)] / P0
    # supply and served series are projected into their declared bounds:
    # interior-point points sit within tolerance of the bounds, and the
    # kappa_g penalty would otherwise amplify that slop in the objective
    v, d = {}, {}
    for g in gas.suppliers:
        arr = np.empty(T + 1)
        arr[0] = kg_per_s_to_kcf_per_hr(asm.init.v[g.id], scen.rho_std)
        for t in range(1, T + 1):
            arr[t] = kg_per_s_to_kcf_per_hr(val[v_name(g.id, t)], scen.rho_std)
        v[g.id] = np.clip(arr, g.v_min, g.v_max)
    for u in gas.units:
        arr = np.empty(T + 1)
        arr[0] = float(asm.fuel_kcfhr[u.id][0])
        for t in range(1, T + 1):
            arr[t] = kg_per_s_to_kcf_per_hr(val[d_name(u.id, t)], scen.rho_std)
        d[u.id] = np.clip(arr, 0.0, np.asarray(asm.fuel_kcfhr[u.id], dtype=float))
    # report the physical cost (supply cost plus unserved-fuel penalty),
    # independent of whatever surrogate the program itself minimized
    obj = 0.0
    for g in gas.suppliers:
        coef = g.cost * scen.dt_s / 3600.0
        obj += coef * float(np.sum(v[g.id][1:]))
    for u in gas.units:
        coef = scen.kappa_g * scen.dt_s / 3600.0
        fuel = np.asarray(asm.fuel_kcfhr[u.id], dtype=float)
        obj += coef * float(np.sum(fuel[1:] - d[u.id][1:]))
    return TransientSolution(prJ=prJ, pr=pr, m=m, gamma=gamma, v=v, d=d,
                             objective=float(obj),
                             meta={"mode": asm.mode,
                                   "solver_objective": res.objective})
