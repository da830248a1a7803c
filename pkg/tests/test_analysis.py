"""Eigenvalue-ratio tightness scoring."""

import math

import numpy as np
import pytest

from transogf import analysis
from transogf.analysis import (aggregate, eig2x2, surface_csv,
                               tightness_ratio, triple_ratio)
from transogf.transient import TransientSolution


def test_eig2x2_examples():
    assert eig2x2(1.0, 0.0, 0.0) == pytest.approx((1.0, 0.0), abs=1e-15)
    lam = eig2x2(2.0, 1.0, 1.0)
    root5 = math.sqrt(5.0)
    assert lam[0] == pytest.approx((3.0 + root5) / 2.0, rel=1e-14)
    assert lam[1] == pytest.approx((3.0 - root5) / 2.0, rel=1e-14)
    assert eig2x2(4.0, 2.0, 1.0) == pytest.approx((5.0, 0.0), abs=1e-14)


def test_eig2x2_against_numpy():
    rng = np.random.default_rng(7)
    for _ in range(10000):
        pr = rng.uniform(0.1, 10.0)
        gam = rng.uniform(0.0, 10.0)
        m = rng.uniform(-5.0, 5.0)
        ref = np.linalg.eigvalsh([[pr, m], [m, gam]])
        lam1, lam2 = eig2x2(pr, m, gam)
        assert lam1 == pytest.approx(ref[1], abs=1e-10)
        assert lam2 == pytest.approx(ref[0], abs=1e-10)


def test_tightness_ratio_values():
    # lam1=100, lam2=14.59 -> log10 ratio
    assert tightness_ratio(100.0, 14.59) == pytest.approx(0.8360, abs=1e-4)
    assert tightness_ratio(1.0, 0.0) == analysis.CAP
    assert tightness_ratio(1.0, 1e-30) == analysis.CAP
    assert tightness_ratio(0.0, 0.0) == analysis.CAP
    # round-off negative lam2 is treated as rank deficiency
    assert tightness_ratio(1.0, -1e-13) == analysis.CAP
    with pytest.raises(ValueError):
        tightness_ratio(1.0, 2.0)


def test_triple_ratio_scale_covariance():
    """Balanced scoring is invariant under (pr,gamma) -> (a*pr, gamma/a)."""
    base = triple_ratio(3.0e6, 40.0, 40.0 ** 2 / 3.0e6 * 1.05)
    for a in (10.0, 1e-3, 137.0):
        scaled = triple_ratio(a * 3.0e6, 40.0, 40.0 ** 2 / 3.0e6 * 1.05 / a)
        assert scaled == pytest.approx(base, rel=1e-9)


def test_triple_ratio_rank1():
    # exact lift gamma = m^2/pr gives a rank-1 matrix -> capped score
    assert triple_ratio(4.0e6, 30.0, 30.0 ** 2 / 4.0e6) == analysis.CAP
    # 1% slack: balanced matrix [[g, m], [m, g]] with g = m*sqrt(1.01)
    r = triple_ratio(4.0e6, 30.0, 30.0 ** 2 / 4.0e6 * 1.01)
    g = 30.0 * math.sqrt(1.01)
    expect = math.log10((g + 30.0) / (g - 30.0))
    assert r == pytest.approx(expect, rel=1e-10)
    # slack ~ log10(4/eps) heuristic within 1%
    assert r == pytest.approx(math.log10(4.0 / 0.01), rel=0.02)
    # nonpositive pressure or negative gamma scores zero
    assert triple_ratio(0.0, 1.0, 1.0) == 0.0
    assert triple_ratio(1.0, 1.0, -0.5) == 0.0


def _toy_solution(gammas):
    """One pipe, 2 interior segments x 2 steps, constant pr/m."""
    pr = np.full((2, 2), 4.0e6)
    m = np.full((2, 2), 20.0)
    sol = TransientSolution(
        prJ={}, pr={"P": pr}, m={"P": m},
        gamma={"P": np.asarray(gammas, dtype=float)},
        v={}, d={}, objective=0.0, converged=True, meta={})
    return sol


def test_aggregate_synthetic():
    exact = 20.0 ** 2 / 4.0e6
    gam = [[exact, exact * 1.01], [exact * 1.01, exact]]
    rep = aggregate(_toy_solution(gam))
    assert rep.n_entries == 4
    assert rep.capped_count == 2
    slack_score = triple_ratio(4.0e6, 20.0, exact * 1.01)
    expect = (2 * analysis.CAP + 2 * slack_score) / 4.0
    assert rep.pipe_mean["P"] == pytest.approx(expect, rel=1e-12)
    assert rep.network_mean == pytest.approx(expect, rel=1e-12)


def test_aggregate_requires_lift():
    sol = TransientSolution(prJ={}, pr={}, m={}, gamma=None, v={}, d={},
                            objective=0.0, converged=True, meta={})
    with pytest.raises(ValueError):
        aggregate(sol)


def test_surface_csv_shape():
    exact = 20.0 ** 2 / 4.0e6
    rep = aggregate(_toy_solution([[exact, exact], [exact, exact]]))
    text = surface_csv(rep, dt_s=300.0, start_minute=660.0)
    lines = text.strip().split("\n")
    assert lines[0] == "pipe,segment,minute,ratio"
    assert len(lines) == 1 + 4
    assert lines[1] == "P,1,660.00,16.0000"
    assert lines[2].startswith("P,1,665.00,")
