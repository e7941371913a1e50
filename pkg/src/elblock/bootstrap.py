"""Nonparametric bootstrap calibration of the common cutoff.

Each treatment's responses are centred at its MELE so that every contrast
hypothesis holds exactly in the resampling population.  Whole blocks are then
drawn with replacement and the full vector of constrained statistics is
recomputed on every resample.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .amc import CalibrationResult, adjusted_p, calibrate
from .constrained import LinearHypothesis, mele
from .design import BlockDesign
from .errors import BootstrapRedrawError, CalibrationError
from .rng import stream

MAX_REDRAWS = 1000

_ROWS_KEY = 10
_REDRAW_KEY = 11

nb_adjusted_p = adjusted_p


@dataclass(frozen=True, eq=False)
class NullTransformed:
    """A design whose responses are centred at each treatment's MELE."""

    design: BlockDesign
    centres: np.ndarray


@dataclass(frozen=True)
class BootstrapDiagnostics:
    redraws: int = 0
    infinite_statistics: int = 0
    failed_solves: int = 0
    attempts: int = 0

    def to_dict(self) -> dict:
        return {"redraws": self.redraws, "infinite_statistics": self.infinite_statistics,
                "failed_solves": self.failed_solves, "attempts": self.attempts}


def null_transform(design: BlockDesign) -> NullTransformed:
    th = mele(design)
    vals = np.where(design.incidence, design.values - np.nan_to_num(th), 0.0)
    return NullTransformed(design.with_values(vals), th)


class _Plan:
    """Null-transformed data and hypotheses in kernel layout."""

    def __init__(self, design: BlockDesign, hyps):
        p = design.n_treatments
        self.observed = np.flatnonzero(design.replications > 0)
        self.pr = self.observed.size
        remap = np.full(p, -1, dtype=np.int64)
        remap[self.observed] = np.arange(self.pr)
        nt = null_transform(design).design
        ptr, cols, vals = nt.csr
        self.ptr = np.ascontiguousarray(ptr)
        self.cols = np.ascontiguousarray(remap[cols])
        self.vals = np.ascontiguousarray(vals)
        self.n = design.n_blocks
        self.incidence = design.incidence[:, self.observed]
        m = len(hyps)
        self.nbs = np.zeros((m, self.pr, self.pr))
        self.dims = np.zeros(m, dtype=np.int64)
        self.parts = np.zeros((m, self.pr))
        needed = np.zeros(p, dtype=bool)
        for j, h in enumerate(hyps):
            if h.p != p:
                raise ValueError(f"hypothesis has {h.p} columns, design has {p} treatments")
            needed[h.involved] = True
            red = LinearHypothesis(h.jac[:, self.observed])
            nb = red.null_basis
            self.nbs[j, :, :nb.shape[1]] = nb
            self.dims[j] = nb.shape[1]
        short = np.flatnonzero(needed & (design.replications < 2))
        if short.size:
            names = [design.treatment_labels[k] for k in short]
            raise CalibrationError(f"treatments {names} need at least 2 replications to bootstrap")
        self.needed = needed[self.observed]

    def degenerate(self, rows: np.ndarray) -> np.ndarray:
        """Which resamples miss a treatment some hypothesis refers to."""
        inc = self.incidence[:, self.needed]
        present = np.zeros((rows.shape[0], inc.shape[1]), dtype=bool)
        for i in range(rows.shape[1]):
            present |= inc[rows[:, i]]
        return ~present.all(axis=1)

    def run(self, rows: np.ndarray):
        return K.bootstrap_statistics(self.ptr, self.cols, self.vals, self.pr,
                                      np.ascontiguousarray(rows), self.nbs, self.dims,
                                      self.parts)


def _run_chunk(plan: _Plan, rows: np.ndarray):
    return plan.run(rows)


def nb_statistics(design: BlockDesign, hyps, b_reps: int, seed: int, *,
                  workers: int = 1, max_redraws: int = MAX_REDRAWS):
    """``B x m`` table of bootstrap statistics and diagnostics.

    Row ``b`` depends only on ``(seed, b)``: the first draw comes from a bulk
    stream and any redraws from a stream of its own, so the table is the same
    for every ``workers`` setting.
    """
    hyps = list(hyps)
    if not hyps:
        raise ValueError("need at least one hypothesis")
    if b_reps < 1:
        raise ValueError("b_reps must be positive")
    plan = _Plan(design, hyps)
    n = plan.n
    rows = stream(seed, _ROWS_KEY).integers(0, n, size=(b_reps, n))
    redraw_rng: dict[int, np.random.Generator] = {}
    tries = np.zeros(b_reps, dtype=np.int64)
    redraws = 0

    def redraw(b):
        nonlocal redraws
        gen = redraw_rng.setdefault(b, stream(seed, _REDRAW_KEY, b))
        while True:
            tries[b] += 1
            if tries[b] > max_redraws:
                raise BootstrapRedrawError(
                    f"replicate {b} needed more than {max_redraws} consecutive redraws; "
                    "the design is too sparse to bootstrap")
            redraws += 1
            rows[b] = gen.integers(0, n, size=n)
            if not plan.degenerate(rows[b:b + 1])[0]:
                return

    for b in np.flatnonzero(plan.degenerate(rows)):
        redraw(int(b))

    stats, status = _dispatch(plan, rows, workers)
    failed = 0
    bad = np.flatnonzero((status == K.MAX_ITER).any(axis=1))
    while bad.size:
        failed += int(bad.size)
        for b in bad:
            redraw(int(b))
        s, st = plan.run(rows[bad])
        stats[bad] = s
        status[bad] = st
        bad = bad[(st == K.MAX_ITER).any(axis=1)]
    diag = BootstrapDiagnostics(redraws=redraws,
                                infinite_statistics=int(np.isinf(stats).sum()),
                                failed_solves=failed, attempts=b_reps + redraws)
    return stats, diag


def _dispatch(plan: _Plan, rows: np.ndarray, workers: int):
    b = rows.shape[0]
    if workers <= 1 or b < 2 * workers:
        return plan.run(rows)
    bounds = np.linspace(0, b, workers + 1).astype(int)
    with ProcessPoolExecutor(max_workers=workers) as ex:
        parts = list(ex.map(_run_chunk, [plan] * workers,
                            [rows[a:c] for a, c in zip(bounds[:-1], bounds[1:])]))
    return (np.concatenate([s for s, _ in parts]),
            np.concatenate([st for _, st in parts]))


def nb_calibrate(design: BlockDesign, hyps, alpha: float, v: int, b_reps: int,
                 seed: int, t_obs=None, *, workers: int = 1, plus_one: bool = False,
                 max_redraws: int = MAX_REDRAWS) -> tuple[CalibrationResult, BootstrapDiagnostics]:
    """Bootstrap cutoff for the ``v``-th largest of the constrained statistics."""
    hyps = list(hyps)
    if v > len(hyps):
        raise ValueError(f"v = {v} exceeds the number of hypotheses {len(hyps)}")
    if b_reps < 100:
        raise ValueError("b_reps must be at least 100")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    stats, diag = nb_statistics(design, hyps, b_reps, seed, workers=workers,
                                max_redraws=max_redraws)
    res = calibrate(stats, alpha, v, seed=seed, method="nb", t_obs=t_obs, plus_one=plus_one)
    return res, diag
