"""Backend-agnostic conic program container and its interior-point solve.

A :class:`ConicProgram` holds variables with bounds, sparse linear rows,
3-variable cones (rotated-quadratic or 2x2-semidefinite, the latter rewritten
to the former at solve time) and a linear + diagonal-quadratic objective.
Quadratic objective terms are reduced to epigraph cones so the solver deals
with a single problem class.

The solve path is the Clarabel primal-dual interior-point method.

Dual sign convention (used everywhere, including the explicit LP dual built
by :func:`lp_dual`): for a minimization program

    min c'x + k  s.t.  a_r'x {=,<=,>=} b_r,   l <= x <= u

the dual is

    max  sum_r y_r b_r + sum_j (lo_j l_j - up_j u_j) + k
    s.t. sum_r y_r a_rj + lo_j - up_j = c_j          for every variable j
         y_r >= 0 for '>=' rows, y_r <= 0 for '<=' rows, free for '=' rows
         lo, up >= 0   (absent when the matching bound is infinite)
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

try:
    import clarabel
except ImportError:  # pragma: no cover
    clarabel = None

INF = float("inf")

SENSES = ("=", "<=", ">=")
CONE_KINDS = ("rsoc", "psd2")


class BuildError(ValueError):
    """Raised on malformed program construction."""


class SolveError(RuntimeError):
    """Raised when a solve cannot produce a usable result."""


@dataclass
class Row:
    name: str
    coeffs: dict  # var index -> coefficient
    sense: str
    rhs: float


@dataclass
class Cone:
    kind: str  # rsoc: x*y >= z^2, x,y >= 0 ; psd2: [[x,z],[z,y]] >= 0
    x: int
    y: int
    z: int


@dataclass
class SolveResult:
    status: str  # optimal | infeasible | unbounded | numerical-limit
    x: np.ndarray | None
    objective: float | None
    row_duals: np.ndarray | None
    lower_duals: np.ndarray | None
    upper_duals: np.ndarray | None
    iterations: int = 0
    wall_time: float = 0.0
    max_residual: float = 0.0

    def value(self, program: "ConicProgram", name: str) -> float:
        return float(self.x[program.var_index[name]])


class ConicProgram:
    def __init__(self, sense: str = "min"):
        if sense not in ("min", "max"):
            raise BuildError(f"unknown sense {sense!r}")
        self.sense = sense
        self.var_index: dict = {}
        self.var_names: list = []
        self.lb: list = []
        self.ub: list = []
        self.rows: list = []
        self.row_index: dict = {}
        self.cones: list = []
        self.obj_lin: dict = {}
        self.obj_quad: dict = {}
        self.obj_const: float = 0.0
        self.frozen = False

    # -- construction -------------------------------------------------------

    def _check_open(self):
        if self.frozen:
            raise BuildError("program is frozen")

    def add_variable(self, name: str, lb: float = -INF, ub: float = INF) -> int:
        self._check_open()
        if name in self.var_index:
            raise BuildError(f"duplicate variable {name!r}")
        if lb > ub:
            raise BuildError(f"variable {name!r}: lb > ub")
        idx = len(self.var_names)
        self.var_index[name] = idx
        self.var_names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        return idx

    def _resolve(self, key) -> int:
        if isinstance(key, str):
            try:
                return self.var_index[key]
            except KeyError:
                raise BuildError(f"unknown variable {key!r}") from None
        idx = int(key)
        if not 0 <= idx < len(self.var_names):
            raise BuildError(f"variable index {idx} out of range")
        return idx

    def add_row(self, coeffs, sense: str, rhs: float, name: str | None = None) -> int:
        """coeffs: mapping or iterable of (variable, coefficient) pairs."""
        self._check_open()
        if sense not in SENSES:
            raise BuildError(f"unknown row sense {sense!r}")
        pairs = coeffs.items() if isinstance(coeffs, dict) else coeffs
        cmap: dict = {}
        for key, coef in pairs:
            idx = self._resolve(key)
            if idx in cmap:
                raise BuildError(
                    f"duplicate coefficient for variable {self.var_names[idx]!r}"
                )
            cmap[idx] = float(coef)
        rid = len(self.rows)
        if name is None:
            name = f"r{rid}"
        if name in self.row_index:
            raise BuildError(f"duplicate row name {name!r}")
        self.row_index[name] = rid
        self.rows.append(Row(name, cmap, sense, float(rhs)))
        return rid

    def add_rotated_cone(self, x, y, z, kind: str = "rsoc") -> int:
        """Add x*y >= z^2 with x, y >= 0 (or the equivalent 2x2 PSD block)."""
        self._check_open()
        if kind not in CONE_KINDS:
            raise BuildError(f"unknown cone kind {kind!r}")
        cone = Cone(kind, self._resolve(x), self._resolve(y), self._resolve(z))
        self.cones.append(cone)
        return len(self.cones) - 1

    def set_objective(self, linear=None, quad=None, constant: float = 0.0,
                      sense: str | None = None):
        self._check_open()
        if sense is not None:
            if sense not in ("min", "max"):
                raise BuildError(f"unknown sense {sense!r}")
            self.sense = sense
        self.obj_lin = {self._resolve(k): float(v) for k, v in (linear or {}).items()}
        self.obj_quad = {self._resolve(k): float(v) for k, v in (quad or {}).items()}
        self.obj_const = float(constant)

    def add_objective_term(self, var, coef: float, quad: float = 0.0):
        self._check_open()
        idx = self._resolve(var)
        self.obj_lin[idx] = self.obj_lin.get(idx, 0.0) + float(coef)
        if quad:
            self.obj_quad[idx] = self.obj_quad.get(idx, 0.0) + float(quad)

    def freeze(self):
        self.frozen = True
        return self

    # -- introspection -------------------------------------------------------

    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_cones(self) -> int:
        return len(self.cones)

    def objective_value(self, x: np.ndarray) -> float:
        val = self.obj_const
        for j, c in self.obj_lin.items():
            val += c * x[j]
        for j, q in self.obj_quad.items():
            val += q * x[j] * x[j]
        return float(val)

    def row_residual(self, x: np.ndarray, row: Row) -> float:
        """Signed violation of one row (0 when satisfied)."""
        lhs = sum(c * x[j] for j, c in row.coeffs.items())
        if row.sense == "=":
            return lhs - row.rhs
        if row.sense == "<=":
            return max(0.0, lhs - row.rhs)
        return max(0.0, row.rhs - lhs)

    # -- serialization -------------------------------------------------------

    def dump(self) -> str:
        """Human-readable sparse listing, also the serialization format."""
        out = [f"conic-program {self.sense}"]
        for name, lo, hi in zip(self.var_names, self.lb, self.ub):
            out.append(f"var {name} {lo!r} {hi!r}")
        for row in self.rows:
            terms = " ".join(f"{j}:{c!r}" for j, c in sorted(row.coeffs.items()))
            out.append(f"row {row.name} {row.sense} {row.rhs!r} {terms}")
        for cone in self.cones:
            out.append(f"cone {cone.kind} {cone.x} {cone.y} {cone.z}")
        out.append(f"objconst {self.obj_const!r}")
        for j, c in sorted(self.obj_lin.items()):
            out.append(f"objlin {j} {c!r}")
        for j, q in sorted(self.obj_quad.items()):
            out.append(f"objquad {j} {q!r}")
        return "\n".join(out) + "\n"

    @classmethod
    def parse(cls, text: str) -> "ConicProgram":
        prog = None
        for line in text.splitlines():
            parts = line.split()
            if not parts:
                continue
            tag = parts[0]
            if tag == "conic-program":
                prog = cls(sense=parts[1])
            elif tag == "var":
                prog.add_variable(parts[1], float(parts[2]), float(parts[3]))
            elif tag == "row":
                coeffs = [
                    (int(t.split(":")[0]), float(t.split(":")[1])) for t in parts[4:]
                ]
                prog.add_row(coeffs, parts[2], float(parts[3]), name=parts[1])
            elif tag == "cone":
                prog.add_rotated_cone(int(parts[2]), int(parts[3]), int(parts[4]),
                                      kind=parts[1])
            elif tag == "objconst":
                prog.obj_const = float(parts[1])
            elif tag == "objlin":
                prog.obj_lin[int(parts[1])] = float(parts[2])
            elif tag == "objquad":
                prog.obj_quad[int(parts[1])] = float(parts[2])
            else:
                raise BuildError(f"unknown line tag {tag!r}")
        if prog is None:
            raise BuildError("empty program text")
        return prog.freeze()


# -- solving ----------------------------------------------------------------

_STATUS_MAP = {
    "Solved": "optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
    "AlmostSolved": "numerical-limit",
    "MaxIterations": "numerical-limit",
    "MaxTime": "numerical-limit",
    "NumericalError": "numerical-limit",
    "InsufficientProgress": "numerical-limit",
}


def solve(program: ConicProgram, feas_tol: float = 1e-8, gap_tol: float = 1e-8,
          verbose: bool = False, max_iter: int = 200) -> SolveResult:
    """Solve a frozen program with the interior-point backend."""
    if clarabel is None:  # pragma: no cover
        raise SolveError("clarabel backend is not installed")
    if not program.frozen:
        raise SolveError("program must be frozen before solving")

    flip = -1.0 if program.sense == "max" else 1.0
    n = program.n_vars
    q = np.zeros(n)
    for j, c in program.obj_lin.items():
        q[j] = flip * c

    # epigraph variables for diagonal quadratic objective terms
    quad_items = []
    for j, coef in program.obj_quad.items():
        qq = flip * coef
        if qq < 0:
            raise SolveError("nonconvex quadratic objective term")
        if qq > 0:
            quad_items.append((j, qq))
    n_tot = n + len(quad_items)
    q = np.concatenate([q, np.ones(len(quad_items))])

    rows_a, rhs_b, cones = [], [], []

    def push(coeffs, b):
        rows_a.append(coeffs)
        rhs_b.append(b)

    # zero cone: equality rows, then fixed variables
    eq_rows = [r for r in program.rows if r.sense == "="]
    ineq_rows = [r for r in program.rows if r.sense != "="]
    for r in eq_rows:
        push(list(r.coeffs.items()), r.rhs)
    fixed = [j for j in range(n)
             if program.lb[j] == program.ub[j] and math.isfinite(program.lb[j])]
    for j in fixed:
        push([(j, 1.0)], program.lb[j])
    n_zero = len(rows_a)
    cones.append(clarabel.ZeroConeT(n_zero))

    # nonnegative cone: inequality rows then finite, non-fixed bounds
    for r in ineq_rows:
        sgn = 1.0 if r.sense == "<=" else -1.0
        push([(j, sgn * c) for j, c in r.coeffs.items()], sgn * r.rhs)
    lo_rows, up_rows = {}, {}
    for j in range(n):
        if j in fixed:
            continue
        if math.isfinite(program.lb[j]):
            lo_rows[j] = len(rows_a)
            push([(j, -1.0)], -program.lb[j])
        if math.isfinite(program.ub[j]):
            up_rows[j] = len(rows_a)
            push([(j, 1.0)], program.ub[j])
    n_nonneg = len(rows_a) - n_zero
    cones.append(clarabel.NonnegativeConeT(n_nonneg))

    # second-order cones: program cones (rsoc and psd2 share the SOC image)
    for cone in program.cones:
        push([(cone.x, -1.0), (cone.y, -1.0)], 0.0)
        push([(cone.x, -1.0), (cone.y, 1.0)], 0.0)
        push([(cone.z, -2.0)], 0.0)
        cones.append(clarabel.SecondOrderConeT(3))
    # epigraph cones t*1 >= (sqrt(q) x)^2
    for k, (j, qq) in enumerate(quad_items):
        tj = n + k
        push([(tj, -1.0)], 1.0)
        push([(tj, -1.0)], -1.0)
        push([(j, -2.0 * math.sqrt(qq))], 0.0)
        cones.append(clarabel.SecondOrderConeT(3))

    data, ri, ci = [], [], []
    for i, coeffs in enumerate(rows_a):
        for j, c in coeffs:
            if c != 0.0:
                ri.append(i)
                ci.append(j)
                data.append(c)
    A = sp.csc_matrix((data, (ri, ci)), shape=(len(rows_a), n_tot))
    b = np.asarray(rhs_b)
    P = sp.csc_matrix((n_tot, n_tot))

    settings = clarabel.DefaultSettings()
    settings.verbose = verbose
    settings.max_iter = max_iter
    settings.tol_feas = feas_tol
    settings.tol_gap_rel = gap_tol
    settings.tol_gap_abs = max(gap_tol * 1e-2, 1e-12)

    t0 = time.perf_counter()
    solver = clarabel.DefaultSolver(P, q, A, b, cones, settings)
    sol = solver.solve()
    wall = time.perf_counter() - t0

    status = _STATUS_MAP.get(str(sol.status), "numerical-limit")
    if status in ("infeasible", "unbounded"):
        return SolveResult(status, None, None, None, None, None,
                           iterations=sol.iterations, wall_time=wall)

    x = np.asarray(sol.x)[:n]
    z = np.asarray(sol.z)

    row_duals = np.zeros(program.n_rows)
    k_eq = 0
    for r in eq_rows:
        row_duals[program.row_index[r.name]] = -z[k_eq]
        k_eq += 1
    k_in = n_zero
    for r in ineq_rows:
        # '<=' rows were pushed as-is (dual y = -z <= 0); '>=' rows negated
        row_duals[program.row_index[r.name]] = (-z[k_in] if r.sense == "<=" else z[k_in])
        k_in += 1
    lower_duals = np.zeros(n)
    upper_duals = np.zeros(n)
    for j, i in lo_rows.items():
        lower_duals[j] = z[i]
    for j, i in up_rows.items():
        upper_duals[j] = z[i]
    for k, j in enumerate(fixed):
        yfix = -z[n_zero - len(fixed) + k] * flip
        lower_duals[j] = max(yfix, 0.0)
        upper_duals[j] = max(-yfix, 0.0)

    max_res = 0.0
    for r in program.rows:
        max_res = max(max_res, abs(program.row_residual(x, r)))
    for j in range(n):
        if math.isfinite(program.lb[j]):
            max_res = max(max_res, program.lb[j] - x[j])
        if math.isfinite(program.ub[j]):
            max_res = max(max_res, x[j] - program.ub[j])

    if status == "numerical-limit":
        # the solver can stall one step short of its own certificate; accept
        # the point if its recomputed residuals and duality gap are near the
        # requested tolerances
        xt = np.asarray(sol.x)
        p_int = float(q @ xt)
        d_int = -float(b @ z)
        rel_gap = abs(p_int - d_int) / max(1.0, abs(p_int))
        if max_res <= 10.0 * feas_tol and rel_gap <= 10.0 * gap_tol:
            status = "optimal"

    return SolveResult(
        status=status,
        x=x,
        objective=program.objective_value(x),
        row_duals=row_duals * flip,
        lower_duals=lower_duals * (1.0 if flip > 0 else flip),
        upper_duals=upper_duals * (1.0 if flip > 0 else flip),
        iterations=sol.iterations,
        wall_time=wall,
        max_residual=float(max_res),
    )


# -- explicit LP dual --------------------------------------------------------

@dataclass
class DualMap:
    """Name bookkeeping for the mechanically built LP dual."""

    y_name: dict = field(default_factory=dict)    # primal row name -> dual var
    lo_name: dict = field(default_factory=dict)   # primal var name -> mu_lower
    up_name: dict = field(default_factory=dict)   # primal var name -> mu_upper
    stat_row: dict = field(default_factory=dict)  # primal var name -> dual row


def lp_dual(program: ConicProgram) -> tuple[ConicProgram, DualMap]:
    """Exact dual of a pure-LP minimization program (see module docstring)."""
    if program.cones or program.obj_quad:
        raise BuildError("lp_dual requires a pure LP")
    if program.sense != "min":
        raise BuildError("lp_dual requires a minimization primal")
    dual = ConicProgram(sense="max")
    dmap = DualMap()
    obj = {}
    for row in program.rows:
        name = f"y[{row.name}]"
        lo, hi = -INF, INF
        if row.sense == ">=":
            lo = 0.0
        elif row.sense == "<=":
            hi = 0.0
        dual.add_variable(name, lo, hi)
        dmap.y_name[row.name] = name
        if row.rhs != 0.0:
            obj[name] = row.rhs
    for j, vname in enumerate(program.var_names):
        if math.isfinite(program.lb[j]):
            name = f"lo[{vname}]"
            dual.add_variable(name, 0.0, INF)
            dmap.lo_name[vname] = name
            if program.lb[j] != 0.0:
                obj[name] = program.lb[j]
        if math.isfinite(program.ub[j]):
            name = f"up[{vname}]"
            dual.add_variable(name, 0.0, INF)
            dmap.up_name[vname] = name
            if program.ub[j] != 0.0:
                obj[name] = -program.ub[j]
    # stationarity: one dual row per primal variable
    cols: dict = {j: [] for j in range(program.n_vars)}
    for row in program.rows:
        yn = dmap.y_name[row.name]
        for j, c in row.coeffs.items():
            cols[j].append((yn, c))
    for j, vname in enumerate(program.var_names):
        coeffs = list(cols[j])
        if vname in dmap.lo_name:
            coeffs.append((dmap.lo_name[vname], 1.0))
        if vname in dmap.up_name:
            coeffs.append((dmap.up_name[vname], -1.0))
        rid = dual.add_row(coeffs, "=", program.obj_lin.get(j, 0.0),
                           name=f"stat[{vname}]")
        dmap.stat_row[vname] = dual.rows[rid].name
    dual.set_objective(linear=obj, constant=program.obj_const)
    return dual.freeze(), dmap


def dual_objective_value(program: ConicProgram, dual: ConicProgram,
                         y: np.ndarray) -> float:
    """Evaluate the dual objective at a dual point (array over dual vars)."""
    val = dual.obj_const
    for j, c in dual.obj_lin.items():
        val += c * y[j]
    return float(val)
