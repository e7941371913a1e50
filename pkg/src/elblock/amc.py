"""Asymptotic Monte Carlo calibration of the common cutoff.

Under the complete null the vector of constrained statistics behaves like the
quadratic forms ``U' A_j U`` with ``U ~ N(0, S)``.  The plug-in matrices
replace ``S`` by the sample second moment of the scores at the MELE and the
Jacobian of the moment function by ``-diag(r) / n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .design import BlockDesign
from .errors import CalibrationError, UnidentifiedHypothesisError
from .rng import stream

METHODS = ("amc", "nb")
COND_MAX = 1e12
CHUNK = 8192  # replicates per random sub-stream

_AMC_KEY = 1
_MVC_KEY = 2


@dataclass(frozen=True, eq=False)
class PluginMatrices:
    """Plug-in versions of ``S``, ``W`` and the quadratic-form matrices."""

    s_hat: np.ndarray
    w_hat: np.ndarray
    a_hats: tuple
    chol: np.ndarray
    q: tuple

    @property
    def m(self) -> int:
        return len(self.a_hats)


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    cutoff: float
    draws: np.ndarray
    adjusted_p: np.ndarray | None
    alpha: float
    v: int
    b_reps: int
    seed: int
    method: str
    plus_one: bool = False

    def reject(self, t_obs) -> np.ndarray:
        return np.asarray(t_obs, dtype=float) > self.cutoff


def _factor(s: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor with diagonal jitter escalation."""
    tr = float(np.trace(s))
    jit = 0.0
    for _ in range(8):
        try:
            return np.linalg.cholesky(s + jit * np.eye(len(s)))
        except np.linalg.LinAlgError:
            jit = 1e-12 * tr if jit == 0.0 else 10.0 * jit
            if jit > 1e-6 * tr * (1 + 1e-9):
                break
    raise CalibrationError("score covariance is not positive semidefinite")


def plugin_matrices(design: BlockDesign, theta_hat, hyps) -> PluginMatrices:
    """Plug-in matrices at ``theta_hat`` for hypotheses ``hyps``.

    Treatments never observed must not be referenced by any hypothesis; their
    rows and columns of ``s_hat`` are zero and their ``w_hat`` entry is 0.
    """
    n, p = design.n_blocks, design.n_treatments
    r = design.replications
    theta_hat = np.nan_to_num(np.asarray(theta_hat, dtype=float))
    if theta_hat.shape != (p,):
        raise ValueError(f"theta_hat must have length {p}")
    hyps = list(hyps)
    if not hyps:
        raise ValueError("need at least one hypothesis")
    g = np.where(design.incidence, design.values - theta_hat, 0.0)
    s_hat = g.T @ g / n
    s_hat = 0.5 * (s_hat + s_hat.T)
    w_diag = np.where(r > 0, -n / np.maximum(r, 1), 0.0)
    a_hats, qs = [], []
    used = np.zeros(p, dtype=bool)
    for h in hyps:
        if h.p != p:
            raise ValueError(f"hypothesis has {h.p} columns, design has {p} treatments")
        inv = h.involved
        if (r[inv] == 0).any():
            raise UnidentifiedHypothesisError(
                f"hypothesis {h.label!r} references an unobserved treatment")
        used[inv] = True
        jw = h.jac * w_diag
        inner = jw @ s_hat @ jw.T
        if not np.isfinite(inner).all() or np.linalg.cond(inner) >= COND_MAX:
            raise UnidentifiedHypothesisError(
                f"hypothesis {h.label!r} has a singular plug-in covariance")
        a = jw.T @ np.linalg.solve(inner, jw)
        a_hats.append(0.5 * (a + a.T))
        qs.append(h.q)
    sub = s_hat[np.ix_(used, used)]
    if np.linalg.cond(sub) >= COND_MAX:
        raise UnidentifiedHypothesisError("score covariance of the tested treatments is singular")
    pm = PluginMatrices(s_hat, np.diag(w_diag), tuple(a_hats), _factor(s_hat), tuple(qs))
    for a, q in zip(pm.a_hats, pm.q):
        as_ = a @ s_hat
        if abs(np.trace(as_) - q) > 1e-6 * q:
            raise CalibrationError("plug-in matrix fails the trace check")
        if np.abs(as_ @ as_ - as_).max() > 1e-6 * max(np.abs(as_).max(), 1.0):
            raise CalibrationError("plug-in matrix fails the idempotence check")
    return pm


def _chunks(b_reps: int):
    for c, start in enumerate(range(0, b_reps, CHUNK)):
        yield c, start, min(CHUNK, b_reps - start)


def amc_statistics(pm: PluginMatrices, b_reps: int, seed: int) -> np.ndarray:
    """``B x m`` table of simulated quadratic forms ``U' A_j U``.

    Replicates are generated in fixed chunks, each from its own sub-stream,
    so row ``b`` depends only on ``(seed, b)``.
    """
    if b_reps < 1:
        raise ValueError("b_reps must be positive")
    p = pm.s_hat.shape[0]
    out = np.empty((b_reps, pm.m))
    for c, start, size in _chunks(b_reps):
        z = stream(seed, _AMC_KEY, c).standard_normal((size, p))
        u = z @ pm.chol.T
        for j, a in enumerate(pm.a_hats):
            out[start:start + size, j] = np.einsum("bi,ij,bj->b", u, a, u)
    return out


def vth_largest(stats: np.ndarray, v: int) -> np.ndarray:
    stats = np.atleast_2d(stats)
    m = stats.shape[1]
    if not 1 <= v <= m:
        raise ValueError(f"v must be in 1..{m}")
    return np.sort(stats, axis=1)[:, m - v]


def quantile_cutoff(draws_sorted: np.ndarray, alpha: float) -> float:
    """Order statistic of rank ``ceil((1 - alpha) B)``."""
    b = draws_sorted.size
    k = math.ceil((1.0 - alpha) * b - 1e-9)
    k = min(max(k, 1), b)
    return float(draws_sorted[k - 1])


def adjusted_p(t_obs, draws, plus_one: bool = False) -> np.ndarray:
    """``#{b : draw_b >= T_j} / B`` for each observed statistic.

    Rejecting when ``T_j > cutoff`` is the same as ``p_j <= alpha`` for the
    rank ``ceil((1 - alpha) B)`` cutoff; ``p_j < alpha`` differs only when
    ``alpha B`` is an integer and ``p_j`` equals ``alpha`` exactly.  With
    ``plus_one`` the ratio is ``(count + 1) / (B + 1)``.
    """
    d = np.sort(np.asarray(draws, dtype=float))
    if d.size == 0:
        raise ValueError("draws must be nonempty")
    t = np.atleast_1d(np.asarray(t_obs, dtype=float))
    count = d.size - np.searchsorted(d, t, side="left")
    if plus_one:
        p = (count + 1.0) / (d.size + 1.0)
    else:
        p = count / d.size
    return np.where(np.isnan(t), np.nan, p)


amc_adjusted_p = adjusted_p


def calibrate(stats: np.ndarray, alpha: float, v: int, *, seed: int = 0,
              method: str = "amc", t_obs=None, plus_one: bool = False) -> CalibrationResult:
    """Cutoff and adjusted p-values from a ``B x m`` table of null statistics."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    draws = np.sort(vth_largest(stats, v))
    draws.setflags(write=False)
    cut = quantile_cutoff(draws, alpha)
    p = None if t_obs is None else adjusted_p(t_obs, draws, plus_one)
    return CalibrationResult(cut, draws, p, float(alpha), int(v), int(draws.size),
                             int(seed), method, plus_one)


def amc_calibrate(pm: PluginMatrices, alpha: float, v: int, b_reps: int, seed: int,
                  t_obs=None, plus_one: bool = False) -> CalibrationResult:
    if v > pm.m:
        raise ValueError(f"v = {v} exceeds the number of hypotheses {pm.m}")
    if b_reps < 100:
        raise ValueError("b_reps must be at least 100")
    return calibrate(amc_statistics(pm, b_reps, seed), alpha, v, seed=seed,
                     method="amc", t_obs=t_obs, plus_one=plus_one)


def sample_mv_chisq(m: int, q, corr, b_reps: int, seed: int) -> np.ndarray:
    """Draws from the multivariate chi-square law with block sizes ``q``.

    ``corr`` is the correlation matrix of the stacked normal vector
    ``(Z_1, ..., Z_m)``; each row holds ``(|Z_1|^2, ..., |Z_m|^2)``.
    """
    q = np.atleast_1d(np.asarray(q, dtype=int))
    if q.size != m or (q < 1).any():
        raise ValueError("q must hold m positive block sizes")
    corr = np.asarray(corr, dtype=float)
    dim = int(q.sum())
    if corr.shape != (dim, dim) or not np.allclose(corr, corr.T):
        raise ValueError(f"corr must be a symmetric {dim} x {dim} table")
    if not np.allclose(np.diag(corr), 1.0):
        raise ValueError("corr must have unit diagonal")
    ev, vec = np.linalg.eigh(corr)
    if ev.min() < -1e-10 * dim:
        raise ValueError("corr is not positive semidefinite")
    root = vec * np.sqrt(np.where(ev < 1e-12 * dim, 0.0, ev))
    z = stream(seed, _MVC_KEY).standard_normal((b_reps, dim)) @ root.T
    edges = np.r_[0, np.cumsum(q)]
    return np.column_stack([(z[:, a:b] ** 2).sum(axis=1) for a, b in zip(edges[:-1], edges[1:])])
