"""Constrained EL statistics for linear hypotheses, profiles and intervals.

A hypothesis ``J theta = rhs`` is handled through the parametrisation
``theta = theta_part + N xi`` where ``N`` is an orthonormal basis of the null
space of ``J``, and the statistic is the infimum of ``l_n`` over that affine
set (no additional ball constraint).  ``l_n`` is locally convex around the
MELE; with incomplete blocks it can have further local minima far from it,
so the public solver combines several descent starts.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels as K
from .design import BlockDesign
from .errors import UnidentifiedHypothesisError

OK = "ok"
INFEASIBLE = "infeasible"
UNIDENTIFIED = "unidentified"
FAILED = "max_iter"

RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class LinearHypothesis:
    """``jac @ theta = rhs`` with ``jac`` of full row rank."""

    jac: np.ndarray
    rhs: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        jac = np.atleast_2d(np.asarray(self.jac, dtype=np.float64))
        if jac.ndim != 2 or jac.shape[0] < 1:
            raise ValueError("jac must be a q x p table with q >= 1")
        if not np.isfinite(jac).all():
            raise ValueError("jac must be finite")
        rhs = np.zeros(jac.shape[0]) if self.rhs is None else \
            np.atleast_1d(np.asarray(self.rhs, dtype=np.float64))
        if rhs.shape != (jac.shape[0],):
            raise ValueError("rhs length must equal the number of rows of jac")
        sv = np.linalg.svd(jac, compute_uv=False)
        if sv[0] == 0 or (sv < RANK_TOL * sv[0]).any() or jac.shape[0] > jac.shape[1]:
            raise ValueError("jac must have full row rank")
        jac.setflags(write=False)
        rhs.setflags(write=False)
        object.__setattr__(self, "jac", jac)
        object.__setattr__(self, "rhs", rhs)

    @property
    def q(self) -> int:
        return self.jac.shape[0]

    @property
    def p(self) -> int:
        return self.jac.shape[1]

    @cached_property
    def null_basis(self) -> np.ndarray:
        """Orthonormal ``p x (p - q)`` basis of ``ker(jac)``."""
        _, _, vt = np.linalg.svd(self.jac)
        return np.ascontiguousarray(vt[self.q:].T)

    @cached_property
    def particular(self) -> np.ndarray:
        """Minimum-norm solution of ``jac @ theta = rhs``."""
        return np.linalg.pinv(self.jac) @ self.rhs

    @property
    def involved(self) -> np.ndarray:
        return np.flatnonzero(np.abs(self.jac).max(axis=0) > 0)

    def with_rhs(self, rhs) -> LinearHypothesis:
        return LinearHypothesis(self.jac, rhs, self.label)


@dataclass(frozen=True, eq=False)
class Contrast:
    """``sum_k coeffs[k] * theta_k`` with null value ``null``."""

    coeffs: np.ndarray
    label: str = ""
    null: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64).ravel()
        if not np.isfinite(c).all() or not (c != 0).any():
            raise ValueError("contrast coefficients must be finite and not all zero")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "null", float(self.null))

    def hypothesis(self, r: float | None = None) -> LinearHypothesis:
        r = self.null if r is None else r
        return LinearHypothesis(self.coeffs[None, :], [r], self.label)

    def estimate(self, theta) -> float:
        return float(self.coeffs @ np.asarray(theta))


@dataclass(frozen=True, eq=False)
class ConstrainedFit:
    theta_star: np.ndarray
    statistic: float
    status: str
    lam: np.ndarray = field(default_factory=lambda: np.zeros(0))
    path: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OK


@dataclass(frozen=True)
class SCI:
    lo: float
    hi: float
    truncated_lo: bool = False
    truncated_hi: bool = False

    def contains(self, x: float) -> bool:
        return self.lo <= x <= self.hi

    @property
    def length(self) -> float:
        return self.hi - self.lo


_PATHS = ("saddle", "nested", "continuation")


def mele(design: BlockDesign) -> np.ndarray:
    """Per-treatment mean over the blocks containing it (NaN if unobserved)."""
    ptr, cols, vals = design.csr
    return K.mele(ptr, cols, vals, design.n_treatments)


ANCHOR_SEED = 0x5EED
N_STARTS = 8


class _Reduced:
    """Design restricted to its observed treatments, in kernel layout."""

    def __init__(self, design: BlockDesign):
        self.p = design.n_treatments
        self.observed = np.flatnonzero(design.replications > 0)
        remap = np.full(self.p, -1, dtype=np.int64)
        remap[self.observed] = np.arange(self.observed.size)
        ptr, cols, vals = design.csr
        self.ptr = np.ascontiguousarray(ptr)
        self.cols = np.ascontiguousarray(remap[cols])
        self.vals = np.ascontiguousarray(vals)
        self.pr = self.observed.size
        self.theta_hat = K.mele(self.ptr, self.cols, self.vals, self.pr)

    def anchors(self, k: int) -> list[np.ndarray]:
        """Weighted treatment means for ``k`` fixed Dirichlet weight vectors.

        Each is the parameter at which those strictly positive weights solve
        the moment equation, so it lies inside the EL domain.
        """
        n = self.ptr.size - 1
        rows = np.repeat(np.arange(n), np.diff(self.ptr))
        rng = np.random.default_rng(ANCHOR_SEED)
        out = []
        for _ in range(k):
            w = rng.dirichlet(np.ones(n))[rows]
            num = np.bincount(self.cols, weights=w * self.vals, minlength=self.pr)
            den = np.bincount(self.cols, weights=w, minlength=self.pr)
            out.append(num / den)
        return out

    def check(self, hyp: LinearHypothesis) -> bool:
        if hyp.p != self.p:
            raise ValueError(f"hypothesis has {hyp.p} columns, design has {self.p} treatments")
        return np.isin(hyp.involved, self.observed).all()

    def solve(self, hyp: LinearHypothesis, start=None, n_starts: int = N_STARTS,
              fast: bool = False) -> ConstrainedFit:
        if not self.check(hyp):
            return ConstrainedFit(np.full(self.p, np.nan), np.nan, UNIDENTIFIED)
        red = LinearHypothesis(hyp.jac[:, self.observed], hyp.rhs, hyp.label)
        nb, part = red.null_basis, red.particular
        x0 = self.theta_hat if start is None else np.asarray(start, float)[self.observed]
        starts = [(x0, self.theta_hat)]
        if nb.shape[1] > 0:
            starts += [(a, a) for a in self.anchors(n_starts)]
        best = None
        failed = False
        for x, anchor in starts:
            st, stat, th, lam, path = K.constrained_solve(
                self.ptr, self.cols, self.vals, self.pr, nb, part, nb.T @ x, anchor, fast)
            if st == K.OK and (best is None or stat < best[1]):
                best = (st, stat, th, lam, path)
            failed |= st == K.MAX_ITER
        if best is None:
            status = FAILED if failed else INFEASIBLE
            stat = math.nan if failed else math.inf
            return ConstrainedFit(np.full(self.p, np.nan), stat, status)
        _, stat, th, lam, path = best
        theta = np.zeros(self.p)
        theta[self.observed] = th
        lam_full = np.zeros(self.p)
        lam_full[self.observed] = lam
        return ConstrainedFit(theta, float(stat), OK, lam_full, _PATHS[int(path)])


def minimize_el(design: BlockDesign, hyp: LinearHypothesis, start=None,
                n_starts: int = N_STARTS) -> ConstrainedFit:
    """``inf { l_n(theta) : jac theta = rhs }`` and its minimiser.

    Damped Newton descent runs from the orthogonal projection of the MELE
    onto the constraint set (or of ``start``, if given) and from the
    projections of ``n_starts`` fixed interior points; the smallest local
    minimum is returned.  ``l_n`` is convex near the MELE but for incomplete
    blocks it need not be convex along the whole constraint set, which is
    why the extra starts exist.

    Treatments that are never observed and not constrained are reported as 0
    in ``theta_star``; a hypothesis that constrains one yields status
    ``"unidentified"``.
    """
    return _Reduced(design).solve(hyp, start, n_starts)


def profile_contrast(design: BlockDesign, u: Contrast, r: float) -> float:
    """``inf { l_n(theta) : u' theta = r }``."""
    fit = minimize_el(design, u.hypothesis(r))
    if fit.status == UNIDENTIFIED:
        raise UnidentifiedHypothesisError(f"contrast {u.label!r} is not identified")
    return fit.statistic


def wald_se(design: BlockDesign, u: Contrast) -> float:
    """Sandwich standard error of ``u' theta_hat``."""
    th = mele(design)
    obs = design.replications > 0
    g = np.where(design.incidence, design.values - np.nan_to_num(th), 0.0)
    a = np.where(obs, u.coeffs / np.maximum(design.replications, 1), 0.0)
    return float(np.sqrt(((g @ a) ** 2).sum()))


class _Profile:
    """Profile of one contrast with a warm-started constrained solver."""

    def __init__(self, red: _Reduced, u: Contrast):
        self.red = red
        self.u = u
        self.ur = u.coeffs[red.observed]
        base = LinearHypothesis(self.ur[None, :], [0.0])
        self.nb = base.null_basis
        self.unit = self.ur / (self.ur @ self.ur)
        self.r_hat = float(self.ur @ red.theta_hat)

    def __call__(self, r: float, start=None):
        red = self.red
        part = self.unit * r
        starts = [red.theta_hat] if start is None else [start, red.theta_hat]
        for x0 in starts:
            st, stat, th, _, _ = K.constrained_solve(
                red.ptr, red.cols, red.vals, red.pr, self.nb, part, self.nb.T @ x0,
                red.theta_hat, False)
            if st == K.OK:
                return float(stat), th
            if st == K.INFEASIBLE:
                return math.inf, None
        # a warm start near the domain edge can stall; fall back to the multi-start solver
        fit = red.solve(self.u.hypothesis(r))
        if fit.status == OK:
            return fit.statistic, fit.theta_star[red.observed]
        if fit.status == INFEASIBLE:
            return math.inf, None
        raise FloatingPointError(f"profile solve failed at r={r!r}")


def sci(design: BlockDesign, u: Contrast, cutoff: float, *, known=None,
        max_doublings: int = 60) -> SCI:
    """``{ r : profile(r) <= cutoff }`` by bracketing and bisection.

    ``known`` is an optional ``(r, profile(r))`` pair; passing the null value
    and the observed statistic makes the interval agree exactly with the
    test decision.  Endpoints are located to ``1e-6 * (1 + |r_hat|)``.  A side
    whose outer bracket point stays hull-infeasible is reported at the last
    feasible point with its truncation flag set.
    """
    if not cutoff >= 0:
        raise ValueError("cutoff must be nonnegative")
    red = _Reduced(design)
    if not red.check(u.hypothesis()):
        raise UnidentifiedHypothesisError(f"contrast {u.label!r} is not identified")
    prof = _Profile(red, u)
    r_hat = prof.r_hat
    if cutoff == 0:
        pts = [r_hat]
        if known is not None and float(known[1]) <= 0.0:
            pts.append(float(known[0]))
        return SCI(min(pts), max(pts))
    tol = 1e-6 * (1.0 + abs(r_hat))
    h0 = max(wald_se(design, u) * math.sqrt(cutoff), 1e-3 * (1.0 + abs(r_hat)))
    if not np.isfinite(h0):
        h0 = 1.0 + abs(r_hat)

    ends = []
    for s in (-1.0, 1.0):
        inner, inner_th = r_hat, red.theta_hat
        outer, outer_val = None, None
        if known is not None:
            r0, t0 = float(known[0]), float(known[1])
            if s * (r0 - r_hat) > 0:
                if t0 > cutoff:
                    outer, outer_val = r0, t0
                else:
                    inner = r0
        if outer is None:
            h = h0
            for _ in range(max_doublings):
                r = inner + s * h
                val, th = prof(r, inner_th)
                if val > cutoff or val == math.inf:
                    outer, outer_val = r, val
                    break
                inner, inner_th = r, th
                h *= 2.0
            else:
                raise FloatingPointError("interval bracketing did not terminate")
        while abs(outer - inner) > tol:
            mid = 0.5 * (inner + outer)
            val, th = prof(mid, inner_th)
            if val > cutoff or val == math.inf:
                outer, outer_val = mid, val
            else:
                inner, inner_th = mid, th
        if math.isinf(outer_val):
            ends.append((inner, True))
        else:
            ends.append((0.5 * (inner + outer), False))
    (lo, tlo), (hi, thi) = ends
    return SCI(lo, hi, tlo, thi)


# -- contrast mini-language ------------------------------------------------------

_TERM = re.compile(r"^\s*(?:([0-9]*\.?[0-9]+(?:[eE][+-]?[0-9]+)?)\s*\*\s*)?(.+?)\s*$")


def _parse_expr(expr: str, labels: list[str]) -> np.ndarray:
    index = {lab: k for k, lab in enumerate(labels)}
    coeffs = np.zeros(len(labels))
    parts = re.split(r"([+-])", expr)
    sign = 1.0
    seen = False
    for tok in parts:
        if tok in ("+", "-"):
            sign = sign * (-1.0 if tok == "-" else 1.0)
            continue
        if not tok.strip():
            continue
        m = _TERM.match(tok)
        coef = float(m.group(1)) if m.group(1) else 1.0
        lab = m.group(2)
        if lab not in index:
            raise ValueError(f"unknown treatment {lab!r}")
        coeffs[index[lab]] += sign * coef
        sign = 1.0
        seen = True
    if not seen:
        raise ValueError(f"empty contrast expression {expr!r}")
    return coeffs


def parse_contrasts(text: str, labels) -> list[Contrast]:
    """Parse a contrast specification.

    Items are separated by ``;``.  Each item is ``pairwise``, a linear
    expression in treatment labels such as ``t3 - t1`` or ``2*t1 - t2 - t3``,
    or an explicit coefficient list ``[0,-1,0,1,0]``; either form may end
    with ``= value`` to set a nonzero null value.
    """
    labels = list(labels)
    out: list[Contrast] = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        if item.lower() == "pairwise":
            from .inference import pairwise
            out.extend(pairwise(len(labels), labels))
            continue
        lhs, _, rhs = item.partition("=")
        null = float(rhs) if rhs.strip() else 0.0
        lhs = lhs.strip()
        if lhs.startswith("["):
            if not lhs.endswith("]"):
                raise ValueError(f"unterminated coefficient list in {item!r}")
            coeffs = np.array([float(x) for x in lhs[1:-1].split(",")])
            if coeffs.size != len(labels):
                raise ValueError(
                    f"coefficient list has {coeffs.size} entries, expected {len(labels)}")
        else:
            coeffs = _parse_expr(lhs, labels)
        out.append(Contrast(coeffs, lhs, null))
    if not out:
        raise ValueError("no contrasts given")
    return out
