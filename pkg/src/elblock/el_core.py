"""Empirical likelihood ratio at a fixed parameter value.

For a block design with incidence rows ``c_i`` the estimating function is
``g_i(theta) = (x_i - theta) o c_i``.  The EL statistic

    l_n(theta) = 2 * sum_i log(1 + lam' g_i)

uses the Lagrange multiplier ``lam`` solving ``sum_i g_i / (1 + lam' g_i) = 0``.
The multiplier is found by damped Newton on the concave dual with the
logarithm extended quadratically below ``1/n``, so iterates never leave the
domain.  When zero is outside the (relative interior of the) convex hull of the
scores, ``l_n`` is reported as ``+inf``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from . import _kernels as K
from .design import BlockDesign

CONVERGED = "converged"
INFEASIBLE_HULL = "infeasible_hull"
MAX_ITER = "max_iter"

_STATUS = {K.OK: CONVERGED, K.INFEASIBLE: INFEASIBLE_HULL, K.MAX_ITER: MAX_ITER}


@dataclass(frozen=True, eq=False)
class ScoreTable:
    """Scores ``g_i(theta)``; entries outside the incidence pattern are 0."""

    scores: np.ndarray
    incidence: np.ndarray

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    @property
    def p(self) -> int:
        return self.scores.shape[1]

    @property
    def zero_columns(self) -> np.ndarray:
        """Indices of columns that are identically zero (e.g. unobserved)."""
        return np.flatnonzero(~(self.scores != 0).any(axis=0))

    @property
    def max_row_norm(self) -> float:
        return float(np.sqrt((self.scores ** 2).sum(axis=1)).max())

    def csr(self):
        ptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(self.incidence.sum(axis=1), out=ptr[1:])
        rows, cols = np.nonzero(self.incidence)
        return ptr, cols.astype(np.int64), np.ascontiguousarray(self.scores[rows, cols])

    @classmethod
    def from_array(cls, scores) -> ScoreTable:
        """Score table with incidence taken as every entry (dense rows)."""
        s = np.atleast_2d(np.asarray(scores, dtype=np.float64))
        if s.ndim != 2:
            raise ValueError("scores must be a 2-D table")
        return cls(s, np.ones(s.shape, dtype=bool))


@dataclass(frozen=True, eq=False)
class ELSolution:
    lam: np.ndarray
    log_el: float
    weights: np.ndarray
    status: str
    iterations: int = 0

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


def score_table(design: BlockDesign, theta) -> ScoreTable:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (design.n_treatments,):
        raise ValueError(
            f"theta has shape {theta.shape}, expected ({design.n_treatments},)")
    if not np.isfinite(theta).all():
        raise ValueError("theta must be finite")
    g = np.where(design.incidence, design.values - theta, 0.0)
    return ScoreTable(g, design.incidence)


def hull_contains_zero(scores: ScoreTable) -> bool:
    """Whether 0 is in the relative interior of the convex hull of the rows.

    Solves ``max t`` subject to ``sum w_i g_i = 0``, ``sum w_i = 1`` and
    ``w_i >= t``; the answer is yes exactly when the optimum is positive,
    i.e. when strictly positive EL weights exist.
    """
    g = scores.scores
    keep = (g != 0).any(axis=0)
    g = g[:, keep]
    n, p = g.shape
    if p == 0:
        return True
    c = np.zeros(n + 1)
    c[-1] = -1.0
    a_eq = np.zeros((p + 1, n + 1))
    a_eq[:p, :n] = g.T
    a_eq[p, :n] = 1.0
    b_eq = np.zeros(p + 1)
    b_eq[p] = 1.0
    a_ub = np.hstack([-np.eye(n), np.ones((n, 1))])
    bounds = [(0.0, 1.0)] * n + [(None, 1.0)]
    res = linprog(c, A_ub=a_ub, b_ub=np.zeros(n), A_eq=a_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if res.status != 0:
        return False
    return bool(-res.fun > 1e-9 / n)


def solve_dual(scores: ScoreTable, *, tol_grad: float = K.DUAL_TOL,
               max_iter: int = K.DUAL_MAX_ITER, max_halving: int = K.MAX_HALVING,
               lam0=None) -> ELSolution:
    """Solve the EL dual for a score table.

    Convergence requires a gradient norm at most ``tol_grad * n * max|g_i|``
    and every ``1 + lam' g_i >= 1/n``.  A run that ends without either
    certificate is settled by :func:`hull_contains_zero`.
    """
    n, p = scores.n, scores.p
    if n < 1:
        raise ValueError("need at least one block")
    ptr, cols, g = scores.csr()
    lam = np.zeros(p) if lam0 is None else np.array(lam0, dtype=np.float64)
    st, log_el, it = K.dual_solve(ptr, cols, g, p, lam, tol_grad, max_iter, max_halving)
    status = _STATUS[st]
    if status == MAX_ITER and not hull_contains_zero(scores):
        status = INFEASIBLE_HULL
    if status == CONVERGED:
        z = 1.0 + scores.scores @ lam
        w = 1.0 / (n * z)
        return ELSolution(lam, float(log_el), w, status, int(it))
    log_el = np.inf if status == INFEASIBLE_HULL else np.nan
    return ELSolution(lam, log_el, np.full(n, np.nan), status, int(it))


def el_log_ratio(design: BlockDesign, theta) -> ELSolution:
    """``l_n(theta)`` for ``design`` together with the dual solution."""
    return solve_dual(score_table(design, theta))
