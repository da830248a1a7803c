"""Discretized transient gas dynamics: residual kernels, steady-state
initialization, the nonconvex constraint system, and a sequential convex
programming (SCP) baseline that produces feasible upper-bound solutions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .model import (
    GasNetwork, Grid, ModelError, Scenario, build_grid,
    kcf_per_hr_to_kg_per_s, kg_per_s_to_kcf_per_hr,
)

P0 = 1.0e6  # pressure unit used inside conic programs (Pa)


class SingularityError(ValueError):
    """Nonpositive pressure in a friction denominator."""


class InfeasibleInitializationError(ValueError):
    """The t=0 demand cannot be balanced by the suppliers."""


def cont_coef(c: float, D: float, dx: float) -> float:
    """Flow-difference coefficient 4c^2/(pi D^2 dx) of the continuity row."""
    return 4.0 * c * c / (math.pi * D * D * dx)


def inertia_coef(D: float, dt: float) -> float:
    """Flow time-difference coefficient 2/(pi D^2 dt) of the momentum row."""
    return 2.0 / (math.pi * D * D * dt)


def friction_coef(f: float, c: float, D: float) -> float:
    """Friction coefficient 8 f c^2 / (pi^2 D^5)."""
    return 8.0 * f * c * c / (math.pi ** 2 * D ** 5)


@dataclass(frozen=True)
class Stencil:
    """Field values on the 2x2 space-time stencil (s, s+1) x (t, t+1)."""

    pr_s_t: float
    pr_s_t1: float
    pr_s1_t: float
    pr_s1_t1: float
    m_s_t: float
    m_s_t1: float
    m_s1_t: float
    m_s1_t1: float


def continuity_terms(st: Stencil, dt, dx, c, D):
    a = cont_coef(c, D, dx)
    return (
        (st.pr_s1_t1 - st.pr_s1_t) / (2.0 * dt),
        (st.pr_s_t1 - st.pr_s_t) / (2.0 * dt),
        (st.m_s1_t1 - st.m_s_t1) * a,
    )


def continuity_residual(st: Stencil, dt: float, dx: float, c: float, D: float) -> float:
    """Pressure-time / flow-space balance residual (Pa/s)."""
    if dt <= 0 or dx <= 0 or c <= 0 or D <= 0:
        raise ModelError("dt, dx, c, D must be positive")
    return sum(continuity_terms(st, dt, dx, c, D))


def momentum_terms(st: Stencil, dt, dx, c, D, f, friction_at_new_time=False):
    b = inertia_coef(D, dt)
    cf = friction_coef(f, c, D)
    if friction_at_new_time:
        m_fr, pr_fr = st.m_s_t1, st.pr_s_t1
    else:
        m_fr, pr_fr = st.m_s_t, st.pr_s_t
    if pr_fr <= 0:
        raise SingularityError(f"nonpositive pressure {pr_fr} in friction term")
    return (
        (st.pr_s1_t1 - st.pr_s_t1) / dx,
        (st.m_s1_t1 - st.m_s1_t) * b,
        (st.m_s_t1 - st.m_s_t) * b,
        cf * m_fr * m_fr / pr_fr,
    )


def continuity_scale(st: Stencil, dt, dx, c, D):
    """Componentwise magnitude |A||x| of the continuity row (Pa/s)."""
    a = cont_coef(c, D, dx)
    return ((abs(st.pr_s1_t1) + abs(st.pr_s1_t)
             + abs(st.pr_s_t1) + abs(st.pr_s_t)) / (2.0 * dt)
            + (abs(st.m_s1_t1) + abs(st.m_s_t1)) * a)


def momentum_scale(st: Stencil, dt, dx, c, D, f, friction_at_new_time=False):
    """Componentwise magnitude |A||x| of the momentum row (Pa/m)."""
    b = inertia_coef(D, dt)
    cf = friction_coef(f, c, D)
    m_fr, pr_fr = (st.m_s_t1, st.pr_s_t1) if friction_at_new_time \
        else (st.m_s_t, st.pr_s_t)
    fric = cf * m_fr * m_fr / pr_fr if pr_fr > 0 else 0.0
    return ((abs(st.pr_s1_t1) + abs(st.pr_s_t1)) / dx
            + (abs(st.m_s1_t1) + abs(st.m_s1_t)
               + abs(st.m_s_t1) + abs(st.m_s_t)) * b
            + abs(fric))


def momentum_residual(st: Stencil, dt: float, dx: float, c: float, D: float,
                      f: float, friction_at_new_time: bool = False) -> float:
    """Pressure-gradient / inertia / friction balance residual (Pa/m).

    The friction term is evaluated at the old time level by default; the
    flag switches it to the new level for sensitivity studies.
    """
    if dt <= 0 or dx <= 0 or c <= 0 or D <= 0:
        raise ModelError("dt, dx, c, D must be positive")
    return sum(momentum_terms(st, dt, dx, c, D, f, friction_at_new_time))


# -- solutions ---------------------------------------------------------------

@dataclass
class SteadyField:
    """Time-invariant network state used as the t=0 condition."""

    prJ: dict  # junction id -> Pa
    pr: dict  # pipe id -> np.ndarray (n_seg,) Pa
    m: dict  # pipe id -> kg/s (uniform along the pipe)
    v: dict  # supplier id -> kg/s
    d: dict  # unit id -> kg/s


@dataclass
class TransientSolution:
    """Primal point of the transient problem over the full grid.

    Pressures in Pa, mass flows in kg/s, supplier/served series in kcf/hr,
    gamma (when present) in SI units kg^2/(s^2 Pa) indexed (s=1..n-1,
    t=0..T-1).
    """

    prJ: dict  # j -> (T+1,)
    pr: dict  # p -> (n_seg, T+1)
    m: dict  # p -> (n_seg, T+1)
    gamma: dict | None  # p -> (n_seg-1, T)
    v: dict  # g -> (T+1,) kcf/hr
    d: dict  # u -> (T+1,) kcf/hr
    objective: float
    converged: bool = True
    meta: dict = field(default_factory=dict)


# -- demand series ------------------------------------------------------------

def load_series_kgs(gas: GasNetwork, scenario: Scenario) -> dict:
    """Per-junction firm load (kg/s) sampled on the grid, t = 0..T."""
    T = scenario.n_steps
    out = {j.id: np.zeros(T + 1) for j in gas.junctions}
    for load in gas.loads:
        for t in range(T + 1):
            out[load.junction][t] += kcf_per_hr_to_kg_per_s(
                load.value_at(scenario.minute_of(t)), scenario.rho_std)
    return out


def fuel_series_kgs(gas: GasNetwork, scenario: Scenario, fuel_kcfhr: dict) -> dict:
    """Per-unit fuel requirement (kg/s), t = 0..T, from a kcf/hr series."""
    T = scenario.n_steps
    out = {}
    for u in gas.units:
        arr = np.asarray(fuel_kcfhr.get(u.id, np.zeros(T + 1)), dtype=float)
        if arr.shape[0] != T + 1:
            raise ModelError(f"fuel series for unit {u.id} does not cover the grid")
        out[u.id] = np.array([
            kcf_per_hr_to_kg_per_s(x, scenario.rho_std) for x in arr])
    return out


def hourly_dispatch_to_fuel(gas: GasNetwork, scenario: Scenario,
                            dispatch_mw: dict) -> dict:
    """Expand hourly unit dispatch (MW) into a stepwise kcf/hr fuel series."""
    T = scenario.n_steps
    nph = scenario.steps_per_hour
    out = {}
    for u in gas.units:
        hours = list(dispatch_mw.get(u.id, []))
        series = np.zeros(T + 1)
        for t in range(T + 1):
            h = min(max(0, (t - 1) // nph if t > 0 else 0), max(0, len(hours) - 1))
            p = hours[h] if hours else 0.0
            series[t] = u.fuel(p)
        out[u.id] = series
    return out


# -- initial steady state ------------------------------------------------------

def allocate_supplies(gas: GasNetwork, total_kgs: float, rho_std: float) -> dict:
    """Min-cost static allocation of t=0 supply, respecting bounds."""
    vmin = {g.id: kcf_per_hr_to_kg_per_s(g.v_min, rho_std) for g in gas.suppliers}
    vmax = {g.id: kcf_per_hr_to_kg_per_s(g.v_max, rho_std) for g in gas.suppliers}
    lo, hi = sum(vmin.values()), sum(vmax.values())
    if total_kgs > hi + 1e-12:
        raise InfeasibleInitializationError(
            f"t=0 demand {total_kgs:.3f} kg/s exceeds supply capacity {hi:.3f}")
    if total_kgs < lo - 1e-12:
        raise InfeasibleInitializationError(
            f"t=0 demand {total_kgs:.3f} kg/s is below the supply floor {lo:.3f}")
    alloc = dict(vmin)
    rest = total_kgs - lo
    for g in sorted(gas.suppliers, key=lambda s: s.cost):
        take = min(rest, vmax[g.id] - vmin[g.id])
        alloc[g.id] += take
        rest -= take
    return alloc


def initial_steady_state(gas: GasNetwork, scenario: Scenario,
                         demands_kgs: dict, grid: Grid | None = None) -> SteadyField:
    """Solve the time-invariant dynamics: uniform flow per pipe and the
    per-segment friction pressure drop, via Newton iteration to 1e-8.

    ``demands_kgs`` maps junction id -> kg/s of total draw at t=0.
    """
    if grid is None:
        grid = build_grid(gas, scenario)
    jids = [j.id for j in gas.junctions]
    jpos = {j: k for k, j in enumerate(jids)}
    pipes = list(gas.pipes)
    total = sum(demands_kgs.get(j, 0.0) for j in jids)
    alloc = allocate_supplies(gas, total, scenario.rho_std)
    inj = {j: -demands_kgs.get(j, 0.0) for j in jids}
    for g in gas.suppliers:
        inj[g.junction] += alloc[g.id]

    # reference junction: cheapest supplier's junction
    ref_j = min(gas.suppliers, key=lambda s: s.cost).junction if gas.suppliers \
        else jids[0]
    ref_pr = scenario.init_pressure_frac * gas.junction(ref_j).pr_max

    nJ = len(jids)
    seg_off, off = {}, nJ
    for p in pipes:
        seg_off[p.id] = off
        off += grid.n_seg[p.id]
    m_off = {p.id: off + k for k, p in enumerate(pipes)}
    n_unk = off + len(pipes)

    # initial flow guess: least squares on the incidence matrix
    A = np.zeros((nJ, len(pipes)))
    for k, p in enumerate(pipes):
        A[jpos[p.from_junction], k] = -1.0
        A[jpos[p.to_junction], k] = 1.0
    b = -np.array([inj[j] for j in jids])
    m_guess = np.linalg.lstsq(A, b, rcond=None)[0]

    x0 = np.empty(n_unk)
    x0[:nJ] = ref_pr / P0
    for p in pipes:
        x0[seg_off[p.id]:seg_off[p.id] + grid.n_seg[p.id]] = ref_pr / P0
    for k, p in enumerate(pipes):
        x0[m_off[p.id]] = m_guess[k]

    bal_rows = [j for j in jids if j != ref_j]

    def residuals(x):
        res = []
        res.append(x[jpos[ref_j]] - ref_pr / P0)
        for j in bal_rows:
            r = inj[j]
            for p in gas.pipes_to(j):
                r += x[m_off[p.id]]
            for p in gas.pipes_from(j):
                r -= x[m_off[p.id]]
            res.append(r)
        for p in pipes:
            n = grid.n_seg[p.id]
            o = seg_off[p.id]
            cf = friction_coef(p.friction, scenario.c_sound, p.diameter)
            m = x[m_off[p.id]]
            # compressor boost is off at t=0: inlet couples at ratio 1
            res.append(x[o] - x[jpos[p.from_junction]])
            res.append(x[o + n - 1] - x[jpos[p.to_junction]])
            for s in range(n - 1):
                ps = x[o + s]
                drop = scenario.dx_m * cf * m * m / (P0 * P0 * max(ps, 1e-9))
                res.append(x[o + s + 1] - ps + drop)
        return np.asarray(res)

    sol = scipy.optimize.root(residuals, x0, method="hybr",
                              options={"xtol": 1e-12, "maxfev": 40000})
    err = float(np.max(np.abs(residuals(sol.x))))
    if err > 1e-8:
        raise InfeasibleInitializationError(
            f"steady-state solve did not reach 1e-8 (residual {err:.2e})")
    x = sol.x
    prJ = {j: float(x[jpos[j]] * P0) for j in jids}
    pr = {p.id: x[seg_off[p.id]:seg_off[p.id] + grid.n_seg[p.id]] * P0
          for p in pipes}
    m = {p.id: float(x[m_off[p.id]]) for p in pipes}
    d = {}
    for u in gas.units:
        d[u.id] = 0.0  # unit fuel enters demands_kgs by the caller's choice
    return SteadyField(prJ=prJ, pr=pr, m=m, v=alloc, d=d)


def t0_demands_kgs(gas: GasNetwork, scenario: Scenario, fuel_kcfhr: dict) -> dict:
    """Total junction draw at t=0: firm loads plus unit fuel (fully served)."""
    loads = load_series_kgs(gas, scenario)
    fuels = fuel_series_kgs(gas, scenario, fuel_kcfhr)
    out = {j.id: float(loads[j.id][0]) for j in gas.junctions}
    for u in gas.units:
        out[u.junction] += float(fuels[u.id][0])
    return out


# -- nonconvex constraint system ------------------------------------------------

@dataclass
class ConstraintSystem:
    """Structural description of the nonconvex problem (4a)-style system."""

    counts: dict
    rows: list  # (name, family, kind)
    n_rows: int

    def family(self, fam: str):
        return [r for r in self.rows if r[1] == fam]


def build_nonconvex_constraints(gas: GasNetwork, scenario: Scenario,
                                grid: Grid | None = None) -> ConstraintSystem:
    """Enumerate the constraint system of the transient problem: bounds,
    coupling, compressor, shedding, balance, and the dynamics rows (the
    momentum family carries the nonlinear friction term).
    """
    if grid is None:
        grid = build_grid(gas, scenario)
    T = grid.n_steps
    rows = []
    for j in gas.junctions:
        for t in range(1, T + 1):
            rows.append((f"prj_bounds[{j.id},{t}]", "pressure-bounds", "bound"))
    for g in gas.suppliers:
        for t in range(1, T + 1):
            rows.append((f"v_bounds[{g.id},{t}]", "supply-bounds", "bound"))
    for u in gas.units:
        for t in range(1, T + 1):
            rows.append((f"d_bounds[{u.id},{t}]", "shed-bounds", "bound"))
    for p in gas.pipes:
        comp = gas.junction(p.from_junction).is_compressor_inlet
        gamma = gas.junction(p.from_junction).compression_ratio
        for t in range(1, T + 1):
            if comp:
                rows.append((
                    f"comp[{p.id},{t}]: prJ <= pr[{p.id},1] <= {gamma}*prJ",
                    "compressor", "linear"))
            else:
                rows.append((f"cfr[{p.id},{t}]", "coupling-from", "linear"))
            rows.append((f"cto[{p.id},{t}]", "coupling-to", "linear"))
    for j in gas.junctions:
        for t in range(1, T + 1):
            rows.append((f"bal[{j.id},{t}]", "balance", "linear"))
    for p in gas.pipes:
        for s, t in grid.dyn_rows(p.id):
            rows.append((f"cont[{p.id},{s},{t}]", "continuity", "linear"))
            rows.append((f"mom[{p.id},{s},{t}]", "momentum", "nonlinear"))
    counts: dict = {}
    for _, fam, _ in rows:
        counts[fam] = counts.get(fam, 0) + 1
    return ConstraintSystem(counts=counts, rows=rows, n_rows=len(rows))


# -- feasibility metric ----------------------------------------------------------

def feasibility_error(sol: TransientSolution, gas: GasNetwork,
                      scenario: Scenario, grid: Grid | None = None) -> float:
    """Max relative dynamics residual over all (pipe, segment pair, step).

    Each row residual is normalized backward-error style by the sum of the
    magnitudes of its constituent terms (the componentwise |A||x| scale);
    lifted gamma values are replaced by m^2/pr first (i.e. the nonconvex
    momentum form is evaluated).
    """
    if grid is None:
        grid = build_grid(gas, scenario)
    worst = 0.0
    for p in gas.pipes:
        prf, mf = sol.pr[p.id], sol.m[p.id]
        for s, t in grid.dyn_rows(p.id):
            st = Stencil(
                pr_s_t=prf[s - 1, t], pr_s_t1=prf[s - 1, t + 1],
                pr_s1_t=prf[s, t], pr_s1_t1=prf[s, t + 1],
                m_s_t=mf[s - 1, t], m_s_t1=mf[s - 1, t + 1],
                m_s1_t=mf[s, t], m_s1_t1=mf[s, t + 1],
            )
            args = (scenario.dt_s, scenario.dx_m, scenario.c_sound, p.diameter)
            res = continuity_residual(st, *args)
            denom = max(continuity_scale(st, *args), 1e-9)
            worst = max(worst, abs(res) / denom)
            res = momentum_residual(st, *args, p.friction)
            denom = max(momentum_scale(st, *args, p.friction), 1e-9)
            worst = max(worst, abs(res) / denom)
    return worst


# -- SCP baseline ------------------------------------------------------------------

def scp_solve(gas: GasNetwork, scenario: Scenario, fuel_kcfhr: dict,
              init: SteadyField | None = None, max_iter: int = 25,
              tol: float = 1e-4, feas_tol: float = 1e-10,
              gap_tol: float = 1e-10) -> TransientSolution:
    """Sequential convex programming on the nonconvex transient problem.

    The quadratic friction term is replaced by its first-order expansion
    around the previous iterate and the resulting LP is re-solved until the
    maximum field change drops below ``tol``.  The returned point's dynamics
    residuals are reported in ``meta``, not assumed zero.
    """
    from . import assembly  # deferred: assembly depends on this module's types

    grid = build_grid(gas, scenario)
    if init is None:
        init = initial_steady_state(
            gas, scenario, t0_demands_kgs(gas, scenario, fuel_kcfhr), grid)

    # linearization point: the steady field held constant in time
    lin = {
        "pr": {p.id: np.tile(init.pr[p.id][:, None], grid.n_steps + 1)
               for p in gas.pipes},
        "m": {p.id: np.full((grid.n_seg[p.id], grid.n_steps + 1), init.m[p.id])
              for p in gas.pipes},
    }
    best = None
    converged = False
    history = []
    iterations = 0
    for it in range(max_iter):
        iterations = it + 1
        asm = assembly.build_gas_program(
            gas, scenario, grid, fuel_kcfhr, init, mode="scp", lin_point=lin,
            prox_center=lin, prox_weight=1e-3)
        from . import backend
        asm.program.freeze()
        res = backend.solve(asm.program, feas_tol=feas_tol, gap_tol=gap_tol)
        if res.status not in ("optimal", "numerical-limit") or res.x is None:
            if best is None:
                raise RuntimeError(f"SCP subproblem status: {res.status}")
            break
        sol = assembly.extract_solution(asm, res)
        change = 0.0
        for p in gas.pipes:
            change = max(change, float(np.max(np.abs(sol.pr[p.id] - lin["pr"][p.id]))) / P0)
            change = max(change, float(np.max(np.abs(sol.m[p.id] - lin["m"][p.id])))
                         / max(1.0, float(np.max(np.abs(sol.m[p.id])))))
        history.append((sol.objective, change,
                        feasibility_error(sol, gas, scenario, grid)))
        best = sol
        lin = {"pr": sol.pr, "m": sol.m}
        if change < tol:
            converged = True
            break
    best.converged = converged
    best.gamma = None
    best.meta.update({
        "method": "scp",
        "iterations": iterations,
        "history": history,
        "feasibility_error": feasibility_error(best, gas, scenario, grid),
    })
    return best
