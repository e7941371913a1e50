import math

import numpy as np
import pytest

from conftest import design_of, random_incidence
from elblock import BlockDesign, ScoreTable, el_log_ratio, hull_contains_zero, mele, solve_dual
from elblock.el_core import CONVERGED, INFEASIBLE_HULL, score_table
from oracles import dense_el, interior, scalar_el


def test_score_table_examples():
    d = design_of([{0: 1.0, 1: 2.0}, {0: 3.0}])
    assert score_table(d, [0.0, 0.0]).scores.tolist() == [[1.0, 2.0], [3.0, 0.0]]
    one = BlockDesign.from_arrays([[1, 1]], [[4.0, 7.0]])
    assert (score_table(one, [4.0, 7.0]).scores == 0).all()
    a = score_table(d, [0.0, 0.0]).scores[1]
    b = score_table(d, [0.0, 99.0]).scores[1]
    assert (a == b).all()


def test_score_table_validates():
    d = design_of([{0: 1.0}])
    with pytest.raises(ValueError):
        score_table(d, [0.0, 1.0])
    with pytest.raises(ValueError):
        score_table(d, [np.nan])


def test_zero_table():
    sol = solve_dual(ScoreTable.from_array(np.zeros((4, 2))))
    assert sol.status == CONVERGED and sol.log_el == 0.0
    assert (sol.lam == 0).all()


def test_scalar_centred():
    sol = solve_dual(ScoreTable.from_array([[-1.0], [-0.5], [0.5], [1.0]]))
    assert sol.converged
    assert abs(sol.log_el) < 1e-12 and abs(sol.lam[0]) < 1e-12


@pytest.mark.parametrize("shift", [0.1, -0.3, 0.7])
def test_scalar_shifted_matches_bisection(shift):
    g = np.array([-1.0, -0.5, 0.5, 1.0]) + shift
    sol = solve_dual(ScoreTable.from_array(g[:, None]))
    assert sol.log_el == pytest.approx(scalar_el(g), abs=1e-10)


def test_one_signed_scores_infeasible():
    sol = solve_dual(ScoreTable.from_array([[1.0], [2.0], [3.0]]))
    assert sol.status == INFEASIBLE_HULL and sol.log_el == math.inf


def test_mele_point_is_zero():
    d = design_of([{0: 0.0}, {0: 2.0}])
    sol = el_log_ratio(d, [1.0])
    assert sol.log_el == pytest.approx(0.0, abs=1e-14)
    assert np.allclose(sol.weights, 0.5)


def test_three_point_scalar():
    d = design_of([{0: 0.0}, {0: 1.0}, {0: 2.0}])
    assert el_log_ratio(d, [0.5]).log_el == pytest.approx(scalar_el([-0.5, 0.5, 1.5]), abs=1e-10)


def test_hull_examples():
    assert hull_contains_zero(ScoreTable.from_array([[-1.0], [1.0]]))
    assert not hull_contains_zero(ScoreTable.from_array([[1.0], [2.0]]))
    sq = [[1, 1], [1, -1], [-1, 1], [-1, -1]]
    assert hull_contains_zero(ScoreTable.from_array(sq))
    # 0 on the boundary of the hull is not in its relative interior
    assert not hull_contains_zero(ScoreTable.from_array([[0.0, 1.0], [1.0, 1.0]]))


def test_scalar_oracle_random(rng):
    for _ in range(100):
        n = int(rng.integers(2, 13))
        x = rng.normal(size=n)
        theta = rng.uniform(x.min(), x.max())
        d = BlockDesign.from_arrays(np.ones((n, 1)), x[:, None])
        assert el_log_ratio(d, [theta]).log_el == pytest.approx(scalar_el(x - theta), abs=1e-8)


def test_dual_primal_and_oracle(rng):
    checked = 0
    for _ in range(200):
        n, p = int(rng.integers(4, 15)), int(rng.integers(1, 5))
        inc = random_incidence(rng, n, p)
        d = BlockDesign.from_arrays(inc, rng.normal(size=(n, p)))
        th = mele(d) + rng.normal(scale=0.3, size=p)
        sol = el_log_ratio(d, th)
        g = score_table(d, th).scores
        assert (sol.status == CONVERGED) == interior(g)
        ref = dense_el(d.values, inc, th)
        if sol.status != CONVERGED:
            assert sol.log_el == math.inf and ref == math.inf
            continue
        checked += 1
        w = sol.weights
        assert (w > 0).all()
        assert abs(w.sum() - 1.0) <= 1e-12
        assert np.abs(w @ g).max() <= 1e-8 * (1 + np.abs(g).max())
        assert sol.log_el >= -1e-10
        assert sol.log_el == pytest.approx(-2 * np.log(n * w).sum(), abs=1e-8)
        assert sol.log_el == pytest.approx(ref, abs=1e-6 * (1 + ref))
    assert checked > 100


def test_zero_only_at_mele(rng):
    for _ in range(30):
        n, p = 12, 3
        inc = random_incidence(rng, n, p)
        d = BlockDesign.from_arrays(inc, rng.normal(size=(n, p)))
        assert abs(el_log_ratio(d, mele(d)).log_el) <= 1e-8
        off = el_log_ratio(d, mele(d) + 0.05)
        assert off.log_el > 1e-6


def test_translation(rng):
    for _ in range(30):
        n, p = 10, 3
        inc = random_incidence(rng, n, p)
        x = rng.normal(size=(n, p))
        th = mele(BlockDesign.from_arrays(inc, x)) + rng.normal(scale=0.2, size=p)
        k, c = int(rng.integers(p)), float(rng.normal(scale=5))
        x2 = x.copy()
        x2[:, k] += c
        th2 = th.copy()
        th2[k] += c
        a = el_log_ratio(BlockDesign.from_arrays(inc, x), th).log_el
        b = el_log_ratio(BlockDesign.from_arrays(inc, x2), th2).log_el
        if math.isfinite(a):
            assert b == pytest.approx(a, abs=1e-10 * (1 + a) * 10)
        else:
            assert b == math.inf


def test_unobserved_treatment_gets_zero_multiplier():
    d = BlockDesign.from_arrays([[1, 0], [1, 0], [1, 0]], [[0.0, 0], [1.0, 0], [3.0, 0]])
    sol = el_log_ratio(d, [1.0, 5.0])
    assert sol.converged and sol.lam[1] == 0.0
    assert sol.log_el == pytest.approx(scalar_el([-1.0, 0.0, 2.0]), abs=1e-10)


def test_convex_along_lines_complete_designs(rng):
    seen = 0
    for _ in range(600):
        n, p = int(rng.integers(5, 12)), 2
        x = rng.normal(size=(n, p))
        d = BlockDesign.from_arrays(np.ones((n, p)), x)
        lo, hi = x.min(axis=0), x.max(axis=0)
        ta, tb = lo + (hi - lo) * rng.random(p), lo + (hi - lo) * rng.random(p)
        la, lb, lm = (el_log_ratio(d, t).log_el for t in (ta, tb, 0.5 * (ta + tb)))
        if not np.isfinite([la, lb, lm]).all():
            continue
        seen += 1
        assert lm <= 0.5 * (la + lb) + 1e-8
    assert seen > 50


def test_midpoint_convexity_fails_for_incomplete_blocks():
    # With incomplete blocks each parameter is a ratio of weighted sums, so
    # l_n need not be convex, or even quasi-convex, along a line.
    inc = np.array([[0, 1], [1, 1], [0, 1], [1, 1], [0, 1], [1, 1]], dtype=bool)
    x = np.array([[0.0, 0.4], [0.8, 1.6], [0.0, 2.1], [-1.2, -0.9], [0.0, 0.1], [-0.9, -1.9]])
    d = BlockDesign.from_arrays(inc, x)
    ta, tb = np.array([0.6, 0.4]), np.array([-0.9, -1.0])
    vals = [el_log_ratio(d, t).log_el for t in (ta, tb, 0.5 * (ta + tb))]
    frozen = [12.75356785832379, 5.361769788296042, 16.34915100608232]  # dense oracle
    assert np.allclose(vals, frozen, rtol=1e-9)
    assert vals[2] > max(vals[:2])
