"""Lifted conic relaxation of the transient gas problem and the single-level
rank-minimizing reformulation.

Three variants are assembled from the shared linear core:

* ``simple-sdp``       minimize operating cost subject to the lifted rows and
                       the 2x2 cones.
* ``standard-rankmin`` the same plus a weighted trace-style penalty on the
                       lifted variables.
* ``proposed``         minimize the sum of lifted variables subject to the
                       primal rows, full LP dual feasibility of the linear
                       relaxation, a primal-dual objective-link row, and the
                       cones.

The objective-link row comes in two transcriptions selected by ``eq8``:
``verbatim`` carries the total gas-fired fuel requirement as a constant
term, which makes the row act as a cost cap; ``corrected`` weights each
fuel term by its shed-bound multiplier instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import assembly, backend
from .assembly import (GasAssembly, build_gas_program, d_name, extract_solution,
                       gam_name, m_name, pr_name, prj_name, v_name)
from .backend import ConicProgram, DualMap, lp_dual
from .model import GasNetwork, Scenario, build_grid, kcf_per_hr_to_kg_per_s
from .transient import (P0, SingularityError, SteadyField, TransientSolution,
                        feasibility_error, initial_steady_state,
                        t0_demands_kgs)

VARIANTS = ("simple-sdp", "standard-rankmin", "proposed")


def lift(pr: float, m: float) -> float:
    """The lifted friction variable gamma = m^2 / pr (SI units)."""
    if pr <= 0:
        raise SingularityError(f"nonpositive pressure {pr}")
    return m * m / pr


def build_relaxed_primal(gas: GasNetwork, scenario: Scenario, fuel_kcfhr: dict,
                         init: SteadyField | None = None) -> GasAssembly:
    """Linear part of the lifted relaxation (no cones yet, not frozen)."""
    grid = build_grid(gas, scenario)
    if init is None:
        init = initial_steady_state(
            gas, scenario, t0_demands_kgs(gas, scenario, fuel_kcfhr), grid)
    return build_gas_program(gas, scenario, grid, fuel_kcfhr, init,
                             mode="lifted")


def add_cones(asm: GasAssembly, kind: str = "rsoc") -> int:
    """Attach pr*gam >= m^2 per lifted triple; at t=0 the pressure and flow
    are fixed so the cone degenerates to a lower bound on gamma."""
    n = 0
    prog = asm.program
    for (p, s, t) in asm.gamma_set:
        if t == 0:
            j = prog.var_index[gam_name(p, s, t)]
            g0 = lift(asm.init.pr[p][s - 1], asm.init.m[p]) * P0
            prog.lb[j] = max(prog.lb[j], g0)
        else:
            prog.add_rotated_cone(pr_name(p, s, t), gam_name(p, s, t),
                                  m_name(p, s, t), kind=kind)
            n += 1
    return n


def build_dual(asm: GasAssembly) -> tuple[ConicProgram, DualMap]:
    """Exact LP dual of the linear relaxation (must precede add_cones)."""
    if asm.program.cones:
        raise backend.BuildError("dual must be built before cones are added")
    return lp_dual(asm.program)


@dataclass
class DualSolution:
    """Named multipliers of the linear relaxation."""

    lam: dict = field(default_factory=dict)   # (junction, t) -> balance dual
    lam_fr: dict = field(default_factory=dict)  # (pipe, t) -> inlet coupling dual
    lam_to: dict = field(default_factory=dict)  # (pipe, t) -> outlet coupling dual
    mu_comp: dict = field(default_factory=dict)  # (pipe, t) -> (lower, upper)
    eta: dict = field(default_factory=dict)   # (pipe, s, t) -> continuity dual
    zeta: dict = field(default_factory=dict)  # (pipe, s, t) -> momentum dual
    mu_pr: dict = field(default_factory=dict)  # (junction, t) -> (lower, upper)
    mu_v: dict = field(default_factory=dict)   # (supplier, t) -> (lower, upper)
    mu_d: dict = field(default_factory=dict)   # (unit, t) -> upper bound dual
    f_i: dict = field(default_factory=dict)    # (pipe, t) -> inlet sign dual
    f_o: dict = field(default_factory=dict)    # (pipe, t) -> outlet sign dual
    objective: float = 0.0


def extract_dual(asm: GasAssembly, value) -> DualSolution:
    """Collect named multipliers; ``value`` maps dual variable name -> float."""
    gas, grid = asm.gas, asm.grid
    T = grid.n_steps
    out = DualSolution()
    for j in gas.junctions:
        for t in range(1, T + 1):
            out.lam[(j.id, t)] = value.get(f"y[bal[{j.id},{t}]]", 0.0)
            out.mu_pr[(j.id, t)] = (value.get(f"lo[{prj_name(j.id, t)}]", 0.0),
                                    value.get(f"up[{prj_name(j.id, t)}]", 0.0))
    for g in gas.suppliers:
        for t in range(1, T + 1):
            out.mu_v[(g.id, t)] = (value.get(f"lo[{v_name(g.id, t)}]", 0.0),
                                   value.get(f"up[{v_name(g.id, t)}]", 0.0))
    for u in gas.units:
        for t in range(1, T + 1):
            out.mu_d[(u.id, t)] = value.get(f"up[{d_name(u.id, t)}]", 0.0)
    for p in gas.pipes:
        n = grid.n_seg[p.id]
        for s, t in grid.dyn_rows(p.id):
            out.eta[(p.id, s, t)] = value.get(f"y[cont[{p.id},{s},{t}]]", 0.0)
            out.zeta[(p.id, s, t)] = value.get(f"y[mom[{p.id},{s},{t}]]", 0.0)
        comp = gas.junction(p.from_junction).is_compressor_inlet
        for t in range(1, T + 1):
            out.f_i[(p.id, t)] = value.get(f"lo[{m_name(p.id, 1, t)}]", 0.0)
            out.f_o[(p.id, t)] = value.get(f"lo[{m_name(p.id, n, t)}]", 0.0)
            out.lam_to[(p.id, t)] = value.get(f"y[cto[{p.id},{t}]]", 0.0)
            if comp:
                out.mu_comp[(p.id, t)] = (value.get(f"y[clo[{p.id},{t}]]", 0.0),
                                          value.get(f"y[chi[{p.id},{t}]]", 0.0))
            else:
                out.lam_fr[(p.id, t)] = value.get(f"y[cfr[{p.id},{t}]]", 0.0)
    return out


def merge_programs(target: ConicProgram, other: ConicProgram):
    """Copy the variables and rows of ``other`` into ``target`` (names must
    not collide); the objective of ``other`` is ignored."""
    for name, lo, hi in zip(other.var_names, other.lb, other.ub):
        target.add_variable(name, lo, hi)
    for row in other.rows:
        coeffs = [(other.var_names[j], c) for j, c in row.coeffs.items()]
        target.add_row(coeffs, row.sense, row.rhs, name=row.name)


def primal_dual_equality_row(asm: GasAssembly, dmap: DualMap,
                             corrected: bool = False):
    """Coefficients and rhs of the objective-link row over combined names.

    The row carries the demand multipliers, supply-bound and
    junction-pressure-bound dual terms, and the fuel-requirement term, set
    equal to the operating cost.  With ``corrected=False`` the fuel term is
    the plain constant total; with ``corrected=True`` it is weighted by the
    fuel upper-bound multipliers instead.
    """
    prog = asm.program
    coeffs: dict = {}

    def add(name, c):
        if c != 0.0:
            coeffs[name] = coeffs.get(name, 0.0) + c

    # minus the primal objective expression on both forms
    for j, c in prog.obj_lin.items():
        add(prog.var_names[j], -c)

    gas, grid, scen = asm.gas, asm.grid, asm.scenario
    T = grid.n_steps
    for j in gas.junctions:
        for t in range(1, T + 1):
            add(f"y[bal[{j.id},{t}]]", float(asm.loads_kgs[j.id][t]))
            add(f"lo[{prj_name(j.id, t)}]", j.pr_min / P0)
            add(f"up[{prj_name(j.id, t)}]", -j.pr_max / P0)
    for g in gas.suppliers:
        vmin = kcf_per_hr_to_kg_per_s(g.v_min, scen.rho_std)
        vmax = kcf_per_hr_to_kg_per_s(g.v_max, scen.rho_std)
        for t in range(1, T + 1):
            add(f"lo[{v_name(g.id, t)}]", vmin)
            add(f"up[{v_name(g.id, t)}]", -vmax)
    rhs = prog.obj_const
    if corrected:
        for u in gas.units:
            for t in range(1, T + 1):
                add(f"up[{d_name(u.id, t)}]", -float(asm.fuel_kgs[u.id][t]))
    else:
        for u in gas.units:
            rhs += float(np.sum(asm.fuel_kgs[u.id][1:]))
    return list(coeffs.items()), rhs


def assemble_single_level(gas: GasNetwork, scenario: Scenario, fuel_kcfhr: dict,
                          variant: str = "proposed",
                          init: SteadyField | None = None,
                          rankmin_weight: float = 1.0,
                          eq8: str = "verbatim",
                          cone_kind: str = "rsoc"):
    """Build one frozen solvable program for the requested variant.

    Returns (assembly, info) where info records structural counts and, for
    the proposed variant, the dual bookkeeping.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if eq8 not in ("verbatim", "corrected"):
        raise ValueError(f"unknown eq8 transcription {eq8!r}")
    asm = build_relaxed_primal(gas, scenario, fuel_kcfhr, init)
    prog = asm.program
    info = {"variant": variant, "n_primal_rows": prog.n_rows,
            "n_primal_vars": prog.n_vars}

    dmap = None
    if variant == "proposed":
        dual, dmap = build_dual(asm)
        info["n_dual_vars"] = dual.n_vars
        info["n_dual_rows"] = dual.n_rows
        coeffs, rhs = primal_dual_equality_row(asm, dmap,
                                               corrected=(eq8 == "corrected"))
        merge_programs(prog, dual)
        prog.add_row(coeffs, "=", rhs, name="obj-link")
        prog.obj_lin = {}
        prog.obj_const = 0.0
        # minimize the lifting variables in their scaled form: same argmin
        # as the physical sum, but unit coefficients keep tiny entries
        # resolved at the solver's complementarity level
        for (p, s, t) in asm.gamma_set:
            prog.add_objective_term(gam_name(p, s, t), 1.0)
    elif variant == "standard-rankmin":
        for (p, s, t) in asm.gamma_set:
            prog.add_objective_term(gam_name(p, s, t), rankmin_weight / P0)

    info["n_cones"] = add_cones(asm, kind=cone_kind)
    prog.freeze()
    info["n_rows"] = prog.n_rows
    info["n_vars"] = prog.n_vars
    asm.meta.update(info)
    asm.meta["dmap"] = dmap
    return asm, info


@dataclass
class RecoveryReport:
    max_error: float
    mean_error: float
    n_checked: int
    tight: bool
    worst: tuple | None = None  # (pipe, s, t)


def recover(asm: GasAssembly, res, eps: float = 1e-9,
            tight_tol: float = 1e-5) -> tuple[TransientSolution, RecoveryReport]:
    """Read the physical solution back and audit the lifting identity
    gamma = m^2/pr on every lifted triple with t >= 1."""
    sol = extract_solution(asm, res)
    errs, worst, wkey = [], -1.0, None
    for (p, s, t) in asm.gamma_set:
        if t == 0:
            continue
        g = sol.gamma[p][s - 1, t]
        pr = sol.pr[p][s - 1, t]
        m = sol.m[p][s - 1, t]
        truth = m * m / pr if pr > 0 else math.inf
        err = abs(g - truth) / max(abs(truth), eps) if math.isfinite(truth) \
            else math.inf
        errs.append(err)
        if err > worst:
            worst, wkey = err, (p, s, t)
    mx = max(errs) if errs else 0.0
    rep = RecoveryReport(max_error=mx,
                         mean_error=float(np.mean(errs)) if errs else 0.0,
                         n_checked=len(errs), tight=mx <= tight_tol, worst=wkey)
    return sol, rep


def solve_relaxation(gas: GasNetwork, scenario: Scenario, fuel_kcfhr: dict,
                     variant: str = "proposed", init: SteadyField | None = None,
                     rankmin_weight: float = 1.0, eq8: str = "verbatim",
                     cone_kind: str = "rsoc", feas_tol: float = 1e-10,
                     gap_tol: float = 1e-12, max_iter: int = 300,
                     verbose: bool = False) -> dict:
    """Assemble, solve, and audit one variant; returns a result bundle."""
    asm, info = assemble_single_level(
        gas, scenario, fuel_kcfhr, variant=variant, init=init,
        rankmin_weight=rankmin_weight, eq8=eq8, cone_kind=cone_kind)
    res = backend.solve(asm.program, feas_tol=feas_tol, gap_tol=gap_tol,
                        max_iter=max_iter, verbose=verbose)
    if res.x is None:
        return {"status": res.status, "assembly": asm, "info": info,
                "result": res, "solution": None, "recovery": None}
    sol, rep = recover(asm, res)
    sol.meta.update({"variant": variant, "status": res.status,
                     "iterations": res.iterations,
                     "wall_time": res.wall_time})
    sol.meta["feasibility_error"] = feasibility_error(
        sol, gas, scenario, asm.grid)
    bundle = {"status": res.status, "assembly": asm, "info": info,
              "result": res, "solution": sol, "recovery": rep}
    if variant == "proposed":
        value = {n: float(res.x[j]) for n, j in asm.program.var_index.items()}
        bundle["dual"] = extract_dual(asm, value)
    return bundle
