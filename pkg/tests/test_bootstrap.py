import numpy as np
import pytest
from scipy import stats

from conftest import design_of, pair_data
from elblock import (BlockDesign, BootstrapRedrawError, CalibrationError, Contrast, mele,
                     nb_calibrate, null_transform, pairwise)
from elblock.bootstrap import _ROWS_KEY, nb_statistics
from elblock.rng import stream

PAIR_HYPS = [c.hypothesis() for c in pairwise(5)]


def test_null_transform_examples():
    nt = null_transform(design_of([{0: 1.0}, {0: 3.0}]))
    assert nt.design.values[:, 0].tolist() == [-1.0, 1.0]
    again = null_transform(nt.design)
    assert np.array_equal(again.design.values, nt.design.values)
    d = pair_data(50, 1)
    t = null_transform(d).design
    assert np.abs(mele(t)).max() <= 1e-12
    assert np.array_equal(t.incidence, d.incidence)


def test_degenerate_data_gives_zero_cutoff():
    d = pair_data(50, 2)
    const = d.with_values(np.where(d.incidence, np.arange(5.0), 0.0))
    res, diag = nb_calibrate(const, PAIR_HYPS, 0.05, 1, 200, 1)
    assert res.cutoff == 0.0 and (res.draws == 0).all()
    assert diag.infinite_statistics == 0


def test_replicate_means_near_one():
    d = pair_data(200, 4)
    stats_, _ = nb_statistics(d, PAIR_HYPS[:1], 2000, 5)
    assert 0.5 <= stats_.mean() <= 2.5


def test_single_hypothesis_chi2_quantile():
    d = pair_data(200, 6)
    res, _ = nb_calibrate(d, PAIR_HYPS[:1], 0.05, 1, 5000, 7)
    assert abs(res.cutoff - stats.chi2.ppf(0.95, 1)) <= 0.4


def test_determinism_and_workers():
    d = pair_data(30, 7)
    a, da = nb_calibrate(d, PAIR_HYPS, 0.05, 1, 100, 11)
    b, db = nb_calibrate(d, PAIR_HYPS, 0.05, 1, 100, 11, workers=3)
    assert np.array_equal(a.draws, b.draws) and da == db
    s1, _ = nb_statistics(d, PAIR_HYPS, 60, 11)
    s2, _ = nb_statistics(d, PAIR_HYPS, 100, 11)
    assert np.array_equal(s1, s2[:60])


def test_resampling_unit_is_the_block():
    # every bootstrap replicate is built from whole rows of the original design
    d = pair_data(30, 8)
    nt = null_transform(d).design
    rows = stream(3, _ROWS_KEY).integers(0, 30, size=(5, 30))
    from elblock import _kernels as K
    ptr, cols, vals = nt.csr
    one = K.bootstrap_statistics(ptr, cols, vals, 5, rows, *_stack(PAIR_HYPS[:2]))[0]
    for b in range(5):
        rd = nt.take_blocks(rows[b])
        ref = [K.hypothesis_statistics(*rd.csr, 5, *_stack([h]))[0][0] for h in PAIR_HYPS[:2]]
        assert np.allclose(one[b], ref, rtol=1e-12, atol=1e-14)


def _stack(hyps):
    p = hyps[0].p
    nbs = np.zeros((len(hyps), p, p))
    dims = np.zeros(len(hyps), dtype=np.int64)
    for j, h in enumerate(hyps):
        nbs[j, :, :h.null_basis.shape[1]] = h.null_basis
        dims[j] = h.null_basis.shape[1]
    return nbs, dims, np.zeros((len(hyps), p))


def test_redraws_counted():
    # treatment 3 appears in only 2 of 12 blocks, so many resamples miss it
    inc = np.zeros((12, 3), dtype=bool)
    inc[:, 0] = True
    inc[:6, 1] = True
    inc[[0, 7], 2] = True
    rng = np.random.default_rng(0)
    d = BlockDesign.from_arrays(inc, rng.normal(size=(12, 3)))
    h = Contrast([-1.0, 0.0, 1.0]).hypothesis()
    res, diag = nb_calibrate(d, [h], 0.05, 1, 200, 3)
    assert diag.redraws > 0
    assert diag.attempts == 200 + diag.redraws
    assert diag.infinite_statistics <= diag.attempts
    # unreferenced sparse treatments never trigger redraws
    _, diag2 = nb_calibrate(d, [Contrast([-1.0, 1.0, 0.0]).hypothesis()], 0.05, 1, 200, 3)
    assert diag2.redraws == 0


def test_redraw_cap():
    # a resample misses both rare blocks with probability about exp(-2)
    inc = np.zeros((40, 2), dtype=bool)
    inc[:, 0] = True
    inc[:2, 1] = True
    d = BlockDesign.from_arrays(inc, np.random.default_rng(1).normal(size=(40, 2)))
    with pytest.raises(BootstrapRedrawError):
        nb_statistics(d, [Contrast([-1.0, 1.0]).hypothesis()], 1000, 1, max_redraws=1)


def test_needs_two_replications():
    d = design_of([{0: 1.0, 1: 2.0}, {0: 2.0}, {0: 3.0}])
    with pytest.raises(CalibrationError):
        nb_calibrate(d, [Contrast([1.0, -1.0]).hypothesis()], 0.05, 1, 100, 1)


def test_cutoff_nonincreasing_in_v(bibd50):
    st, _ = nb_statistics(bibd50, PAIR_HYPS, 300, 2)
    from elblock.amc import calibrate
    cuts = [calibrate(st, 0.05, v, method="nb").cutoff for v in range(1, 11)]
    assert all(b <= a for a, b in zip(cuts, cuts[1:]))


def test_nb_cutoff_typically_above_amc():
    from elblock import amc_calibrate, plugin_matrices
    from elblock.simulate import gen_dataset, scenario
    spec = scenario("S1-1", 50)
    above = 0
    for s in range(100):
        d = gen_dataset(spec, s)
        nb, _ = nb_calibrate(d, PAIR_HYPS, 0.05, 1, 2000, s)
        amc = amc_calibrate(plugin_matrices(d, mele(d), PAIR_HYPS), 0.05, 1, 2000, s)
        above += nb.cutoff >= amc.cutoff
    assert above >= 80
