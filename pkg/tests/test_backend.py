"""Conic program container, solve contract, serialization, and LP duality."""

import numpy as np
import pytest

from transogf import backend
from transogf.backend import (BuildError, ConicProgram, dual_objective_value,
                              lp_dual)


def test_empty_program_one_variable():
    prog = ConicProgram()
    prog.add_variable("x")
    prog.freeze()
    assert prog.n_vars == 1 and prog.n_rows == 0 and prog.n_cones == 0


def test_duplicate_coefficient_rejected():
    prog = ConicProgram()
    prog.add_variable("x")
    with pytest.raises(BuildError):
        prog.add_row([("x", 1.0), ("x", 2.0)], "=", 0.0)
    with pytest.raises(BuildError):
        prog.add_variable("x")
    with pytest.raises(BuildError):
        prog.add_row([("nope", 1.0)], "=", 0.0)


def test_frozen_program_rejects_changes():
    prog = ConicProgram()
    prog.add_variable("x")
    prog.freeze()
    with pytest.raises(BuildError):
        prog.add_variable("y")


def test_min_x_bound():
    prog = ConicProgram()
    prog.add_variable("x", 1.0)
    prog.add_objective_term("x", 1.0)
    res = backend.solve(prog.freeze())
    assert res.status == "optimal"
    assert res.objective == pytest.approx(1.0, abs=1e-8)
    assert res.value(prog, "x") == pytest.approx(1.0, abs=1e-8)


def test_min_gamma_on_cone_boundary():
    prog = ConicProgram()
    prog.add_variable("pr", 4.0, 4.0)
    prog.add_variable("gam", 0.0)
    prog.add_variable("m", 2.0, 2.0)
    prog.add_rotated_cone("pr", "gam", "m")
    prog.add_objective_term("gam", 1.0)
    res = backend.solve(prog.freeze())
    assert res.status == "optimal"
    assert res.value(prog, "gam") == pytest.approx(1.0, abs=1e-7)


def test_psd2_cone_matches_rsoc():
    for kind in ("rsoc", "psd2"):
        prog = ConicProgram()
        prog.add_variable("pr", 2.0, 2.0)
        prog.add_variable("gam", 0.0)
        prog.add_variable("m", 3.0, 3.0)
        prog.add_rotated_cone("pr", "gam", "m", kind=kind)
        prog.add_objective_term("gam", 1.0)
        res = backend.solve(prog.freeze())
        assert res.value(prog, "gam") == pytest.approx(4.5, abs=1e-7)


def test_infeasible_status():
    prog = ConicProgram()
    prog.add_variable("x", 1.0)
    prog.add_row([("x", 1.0)], "<=", 0.0)
    res = backend.solve(prog.freeze())
    assert res.status == "infeasible"
    assert res.x is None


def test_unfrozen_program_rejected():
    prog = ConicProgram()
    prog.add_variable("x", 0.0, 1.0)
    with pytest.raises(backend.SolveError):
        backend.solve(prog)


def _sample_program():
    prog = ConicProgram()
    prog.add_variable("x", 0.0, 10.0)
    prog.add_variable("y", -2.0)
    prog.add_variable("z")
    prog.add_row([("x", 1.0), ("y", 2.0)], ">=", 3.0, name="r1")
    prog.add_row([("y", 1.0), ("z", -1.0)], "=", 0.5, name="r2")
    prog.add_rotated_cone("x", "y", "z")
    prog.add_objective_term("x", 1.5)
    prog.add_objective_term("y", 1.0)
    prog.add_objective_term("z", 0.0, quad=0.25)
    prog.obj_const = 2.0
    return prog.freeze()


def test_dump_parse_round_trip():
    prog = _sample_program()
    text = prog.dump()
    back = ConicProgram.parse(text)
    assert back.dump() == text
    r1 = backend.solve(prog)
    r2 = backend.solve(back)
    assert r1.status == r2.status
    assert r1.objective == pytest.approx(r2.objective, abs=1e-10)


def test_determinism():
    prog = _sample_program()
    r1 = backend.solve(prog)
    r2 = backend.solve(prog)
    assert r1.status == r2.status
    assert abs(r1.objective - r2.objective) <= 1e-12 * max(1.0, abs(r1.objective))


def _toy_lp():
    prog = ConicProgram()
    prog.add_variable("a", 0.0, 4.0)
    prog.add_variable("b", 0.0)
    prog.add_variable("c", -1.0, 5.0)
    prog.add_row([("a", 1.0), ("b", 1.0)], ">=", 3.0, name="cover")
    prog.add_row([("b", 1.0), ("c", 2.0)], "=", 4.0, name="tie")
    prog.add_row([("a", 2.0), ("c", 1.0)], "<=", 7.0, name="cap")
    prog.add_objective_term("a", 1.0)
    prog.add_objective_term("b", 2.0)
    prog.add_objective_term("c", 0.5)
    prog.obj_const = 1.0
    return prog.freeze()


def test_lp_dual_strong_duality():
    prog = _toy_lp()
    dual, dmap = lp_dual(prog)
    rp = backend.solve(prog)
    rd = backend.solve(dual)
    assert rp.status == "optimal" and rd.status == "optimal"
    assert rp.objective == pytest.approx(rd.objective, abs=1e-8)
    # dual-of-dual structure: one stationarity row per primal variable
    assert dual.n_rows == prog.n_vars
    assert set(dmap.stat_row) == set(prog.var_names)


def test_returned_duals_satisfy_stationarity():
    """Solver duals plugged into the documented convention: for every
    variable j, sum_r y_r a_rj + lo_j - up_j = c_j within 1e-7."""
    prog = _toy_lp()
    res = backend.solve(prog)
    cols = {j: 0.0 for j in range(prog.n_vars)}
    for i, row in enumerate(prog.rows):
        for j, c in row.coeffs.items():
            cols[j] += res.row_duals[i] * c
    for j, name in enumerate(prog.var_names):
        lhs = cols[j] + res.lower_duals[j] - res.upper_duals[j]
        assert lhs == pytest.approx(prog.obj_lin.get(j, 0.0), abs=1e-7), name
    # sign conditions
    for i, row in enumerate(prog.rows):
        if row.sense == ">=":
            assert res.row_duals[i] >= -1e-9
        elif row.sense == "<=":
            assert res.row_duals[i] <= 1e-9
    assert np.all(res.lower_duals >= -1e-9)
    assert np.all(res.upper_duals >= -1e-9)


def test_dual_objective_matches_primal_at_optimum():
    prog = _toy_lp()
    dual, _ = lp_dual(prog)
    rd = backend.solve(dual)
    val = dual_objective_value(prog, dual, rd.x)
    rp = backend.solve(prog)
    assert val == pytest.approx(rp.objective, abs=1e-8)
