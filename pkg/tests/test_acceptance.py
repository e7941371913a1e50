"""End-to-end acceptance criteria.

Each criterion prints one PASS/FAIL line (collected in the terminal summary)
and then asserts.  Seeds are fixed; the simulation criteria take about 35
minutes on one core.  Deselect with ``-m "not acceptance"``.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from conftest import ACCEPTANCE_LINES, random_incidence, small_instances
from elblock import (AnalysisRequest, BlockDesign, Contrast, LinearHypothesis, mele, minimize_el,
                     plugin_matrices, run_analysis, solve_dual)
from elblock import rng as R
from elblock.el_core import CONVERGED, ScoreTable, el_log_ratio, score_table
from elblock.inference import contrast_statistics, pairwise
from elblock.simulate import evaluate_many, gen_dataset, scenario
from oracles import constrained_oracle, dense_el, primal_el, scalar_el

pytestmark = pytest.mark.acceptance

SEED = 1


def record(name, checks):
    """Log one line per criterion; ``checks`` maps a description to a bool."""
    ok = all(checks.values())
    detail = "; ".join(f"{k} [{'ok' if v else 'FAIL'}]" for k, v in checks.items())
    line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def within(x, lo, hi):
    return lo <= x <= hi


def test_c1_chisq_marginal():
    spec = scenario("S1-1", 400)
    (u,) = pairwise(5)[:1]
    t0 = time.perf_counter()
    t = np.array([contrast_statistics(gen_dataset(spec, R.stream(SEED, s, 0)), [u])[0]
                  for s in range(2000)])
    secs = time.perf_counter() - t0
    ks = stats.kstest(t, stats.chi2(1).cdf).statistic
    record("C1 chi-square marginal", {
        f"KS distance {ks:.4f} < 0.05": ks < 0.05,
        f"runtime {secs:.0f}s < 300s": secs < 300,
    })


@pytest.fixture(scope="module")
def table1_n100():
    t0 = time.perf_counter()
    reps = evaluate_many(scenario("S1-1", 100), ("amc", "nb"), (1,), alpha=0.05, runs=1000,
                         b_reps=2000, seed=SEED, intervals=True)
    return reps, time.perf_counter() - t0


def test_c2_fwer_n100(table1_n100):
    reps, secs = table1_n100
    nb, amc = reps["nb", 1].fwer, reps["amc", 1].fwer
    record("C2 FWER S1-1 n=100", {
        f"NB FWER {nb:.4f} in [0.035, 0.065]": within(nb, 0.035, 0.065),
        f"AMC FWER {amc:.4f} in [0.045, 0.080]": within(amc, 0.045, 0.080),
        f"runtime {secs / 60:.1f}min < 30min": secs < 1800,
    })


def test_c3_cp_al_n100(table1_n100):
    reps, _ = table1_n100
    nb, amc = reps["nb", 1], reps["amc", 1]
    record("C3 CP/AL S1-1 n=100", {
        f"NB CP {nb.cp:.4f} in [0.93, 0.965]": within(nb.cp, 0.93, 0.965),
        f"NB AL {nb.al:.4f} within 15% of 1.6737": abs(nb.al / 1.6737 - 1) <= 0.15,
        f"AMC AL {amc.al:.4f} within 15% of 1.6279": abs(amc.al / 1.6279 - 1) <= 0.15,
    })


def test_c4_small_n():
    reps = evaluate_many(scenario("S1-1", 50), ("amc", "nb"), (1,), alpha=0.05, runs=500,
                         b_reps=2000, seed=SEED, intervals=False)
    nb, amc = reps["nb", 1].fwer, reps["amc", 1].fwer
    record("C4 NB small-n S1-1 n=50", {
        f"NB FWER {nb:.4f} in [0.028, 0.062]": within(nb, 0.028, 0.062),
        f"AMC FWER {amc:.4f} > NB FWER {nb:.4f}": amc > nb,
    })


def test_c5_gfwer():
    reps = evaluate_many(scenario("S1-1", 200), ("amc", "nb"), (1, 2), alpha=0.05, runs=1000,
                         b_reps=2000, seed=SEED, intervals=False)
    a1, a2 = reps["amc", 1].fwer, reps["amc", 2].fwer
    n1, n2 = reps["nb", 1].fwer, reps["nb", 2].fwer
    record("C5 gFWER S1-1 n=200 v=2", {
        f"AMC gFWER {a2:.4f} in [0.040, 0.072]": within(a2, 0.040, 0.072),
        f"NB gFWER {n2:.4f} in [0.038, 0.068]": within(n2, 0.038, 0.068),
        f"AMC v=2 {a2:.4f} <= v=1 {a1:.4f}": a2 <= a1,
        f"NB v=2 {n2:.4f} <= v=1 {n1:.4f}": n2 <= n1,
    })


def test_c6_oracle_equivalence():
    t0 = time.perf_counter()
    worst, bad = 0.0, 0
    for x, inc, jac, rhs in small_instances(SEED, 200):
        fit = minimize_el(BlockDesign.from_arrays(inc, x), LinearHypothesis(jac, rhs))
        mins = constrained_oracle(x, inc, jac, rhs, n_grid=121)
        ref = min(mins) if mins else math.inf
        if ref >= 50:
            # the grid cannot resolve statistics this far out in the tail
            bad += fit.statistic < 50
        else:
            err = abs(fit.statistic - ref)
            worst = max(worst, err)
            bad += not err <= 1e-4
    rng = np.random.default_rng(SEED)
    scalar_worst, scalar_n = 0.0, 0
    while scalar_n < 200:
        n = int(rng.integers(3, 11))
        g = rng.normal(size=n) + rng.normal(scale=0.5)
        if not g.min() < 0 < g.max():
            continue
        sol = solve_dual(ScoreTable.from_array(g[:, None]))
        scalar_worst = max(scalar_worst, abs(sol.log_el - scalar_el(g)))
        scalar_n += 1
    secs = time.perf_counter() - t0
    record("C6 oracle equivalence", {
        f"constrained: {bad} of 200 off, max |diff| {worst:.1e} <= 1e-4": bad == 0,
        f"scalar: max |diff| {scalar_worst:.1e} <= 1e-8 on 200": scalar_worst <= 1e-8,
        f"runtime {secs:.0f}s < 60s": secs < 60,
    })


def _fuzz_design(rng):
    n, p = int(rng.integers(20, 41)), int(rng.integers(3, 6))
    inc = random_incidence(rng, n, p, density=0.6, min_rep=4)
    x = rng.normal(size=(n, 1)) + rng.standard_t(5, size=(n, p)) + rng.normal(size=p)
    return BlockDesign.from_arrays(inc, np.where(inc, x, 0.0))


def test_c7_structural_invariants():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)

    zero_err = 0.0
    for _ in range(100):
        d = _fuzz_design(rng)
        zero_err = max(zero_err, abs(el_log_ratio(d, mele(d)).log_el))

    # dual weights are primal feasible and optimal
    feas_err, gap_dense, gap_primal, checked = 0.0, 0.0, 0.0, 0
    while checked < 30:
        n, p = int(rng.integers(5, 13)), int(rng.integers(1, 4))
        inc = random_incidence(rng, n, p)
        d = BlockDesign.from_arrays(inc, np.where(inc, rng.normal(size=(n, p)), 0.0))
        th = mele(d) + rng.normal(scale=0.2, size=p)
        sol = el_log_ratio(d, th)
        if sol.status != CONVERGED:
            continue
        g = score_table(d, th).scores
        w = sol.weights
        feas_err = max(feas_err, abs(w.sum() - 1), np.abs(w @ g).max(), -w.min())
        gap_dense = max(gap_dense, abs(sol.log_el - dense_el(d.values, inc, th)))
        # the conic solver behind the primal oracle is accurate to about 1e-7
        prim = primal_el(g[:, (g != 0).any(axis=0)])
        gap_primal = max(gap_primal, abs(sol.log_el - prim) / (1 + abs(prim)))
        checked += 1

    mismatches = 0
    for j in range(100):
        d = _fuzz_design(rng)
        cs = pairwise(d.n_treatments)
        cs[0] = Contrast(cs[0].coeffs, cs[0].label, float(rng.normal(scale=0.5)))
        rep = run_analysis(AnalysisRequest(d, cs, ("amc", "nb")[j % 2], v=1 + j % 2,
                                           b_reps=200, seed=j))
        for r in rep.records:
            mismatches += r.reject != (not r.sci.contains(r.null))
            mismatches += r.reject != (r.statistic > rep.cutoff)

    d = gen_dataset(scenario("S1-1", 100), R.stream(SEED, 0, 0))
    one = run_analysis(AnalysisRequest(d, "pairwise", "nb", b_reps=2000, seed=SEED, workers=1))
    eight = run_analysis(AnalysisRequest(d, "pairwise", "nb", b_reps=2000, seed=SEED, workers=8))
    identical = one.to_json() == eight.to_json()

    trace_err = 0.0
    for _ in range(20):
        d = _fuzz_design(rng)
        hyps = [c.hypothesis() for c in pairwise(d.n_treatments)]
        hyps.append(LinearHypothesis(np.eye(d.n_treatments)[1:] - np.eye(d.n_treatments)[0]))
        pm = plugin_matrices(d, mele(d), hyps)
        for a, q in zip(pm.a_hats, pm.q):
            trace_err = max(trace_err, abs(np.trace(a @ pm.s_hat) - q))
    secs = time.perf_counter() - t0
    record("C7 structural invariants", {
        f"max |l_n(mele)| {zero_err:.1e} <= 1e-8": zero_err <= 1e-8,
        f"dual weights feasible to {feas_err:.1e} <= 1e-8": feas_err <= 1e-8,
        f"dual vs dense oracle {gap_dense:.1e} <= 1e-8": gap_dense <= 1e-8,
        f"dual vs primal (relative) {gap_primal:.1e} <= 1e-6": gap_primal <= 1e-6,
        f"compatibility mismatches {mismatches} on 100 analyses": mismatches == 0,
        f"1 vs 8 workers bit-identical: {identical}": identical,
        f"max |trace(A S) - q| {trace_err:.1e} <= 1e-6": trace_err <= 1e-6,
        f"runtime {secs:.0f}s < 120s": secs < 120,
    })


def test_c8_exclusions():
    line = ("EXCLUDED C8: full S=10000/B=10000 tables (replaced by the runs above), "
            "the mixed-model comparator, and the field-data analysis")
    ACCEPTANCE_LINES.append(line)
    print(line)
