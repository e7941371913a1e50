"""Compiled EL kernels over row-compressed block data.

Designs are passed as ``(ptr, cols, vals)``: block ``i`` observes treatments
``cols[ptr[i]:ptr[i+1]]`` with responses ``vals[ptr[i]:ptr[i+1]]``.  Score
tables use the same layout with ``vals`` replaced by scores.

Notation shared by the assembly routines, at a point ``(theta, lam)``::

    g_i = (x_i - theta) o c_i          z_i = 1 + lam' g_i
    F1  = sum_i g_i / z_i              a_k = sum_{i in B_k} 1 / z_i
    H   = sum_i g_i g_i' / z_i^2       E   = sum_i g_i (lam o c_i)' / z_i^2
    Q   = sum_i c_i c_i' / z_i^2       M   = diag(a) - E

With ``lam = lam(theta)`` the profile ``l(theta) = 2 sum log z_i`` has
gradient ``-2 lam o a`` and Hessian ``2 M' H^-1 M - 2 diag(lam) Q diag(lam)``.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

OK = 0
INFEASIBLE = 1
MAX_ITER = 2
START_INFEASIBLE = 3

DUAL_TOL = 1e-10
DUAL_MAX_ITER = 100
MAX_HALVING = 30
GRAD_TOL = 1e-8
STEP_TOL = 1e-10
OUTER_MAX_ITER = 100
SADDLE_MAX_ITER = 40
COND_MAX = 1e12
WSUM_TOL = 1e-12
DECREMENT_TOL = 1e-12
SNAP_ULPS = 8.0


# -- small dense linear algebra ------------------------------------------------

@njit(cache=True, error_model="numpy")
def _cholesky(a, out):
    """Lower factor of SPD ``a`` into ``out``; returns the diagonal ratio
    max/min of the factor (``inf`` when not positive definite)."""
    d = a.shape[0]
    dmax = 0.0
    dmin = np.inf
    for j in range(d):
        s = a[j, j]
        for k in range(j):
            s -= out[j, k] * out[j, k]
        if not s > 0.0:
            return np.inf
        ljj = math.sqrt(s)
        out[j, j] = ljj
        dmax = max(dmax, ljj)
        dmin = min(dmin, ljj)
        for i in range(j + 1, d):
            s = a[i, j]
            for k in range(j):
                s -= out[i, k] * out[j, k]
            out[i, j] = s / ljj
        for i in range(j):
            out[i, j] = 0.0
    if d == 0:
        return 1.0
    return dmax / dmin


@njit(cache=True, error_model="numpy")
def _chol_solve(low, b):
    d = low.shape[0]
    y = np.empty(d)
    for i in range(d):
        s = b[i]
        for k in range(i):
            s -= low[i, k] * y[k]
        y[i] = s / low[i, i]
    x = np.empty(d)
    for i in range(d - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, d):
            s -= low[k, i] * x[k]
        x[i] = s / low[i, i]
    return x


@njit(cache=True, error_model="numpy")
def _spd_factor(a, low):
    """Cholesky with diagonal jitter escalation; returns the condition proxy."""
    cond = _cholesky(a, low)
    if cond < np.inf:
        return cond
    d = a.shape[0]
    tr = 0.0
    for i in range(d):
        tr += abs(a[i, i])
    if tr == 0.0:
        tr = 1.0
    jit = 1e-12 * tr
    b = a.copy()
    while jit <= 1e-6 * tr:
        for i in range(d):
            b[i, i] = a[i, i] + jit
        cond = _cholesky(b, low)
        if cond < np.inf:
            return cond
        jit *= 10.0
    return np.inf


@njit(cache=True, error_model="numpy")
def _lu_solve(a, b):
    """Solve ``a x = b`` by partial pivoting; ``ok`` is False when singular."""
    d = a.shape[0]
    m = a.copy()
    x = b.copy()
    scale = 0.0
    for i in range(d):
        for j in range(d):
            scale = max(scale, abs(m[i, j]))
    if scale == 0.0:
        return x, d == 0
    for c in range(d):
        piv = c
        best = abs(m[c, c])
        for r in range(c + 1, d):
            if abs(m[r, c]) > best:
                best = abs(m[r, c])
                piv = r
        if best <= 1e-14 * scale:
            return x, False
        if piv != c:
            for j in range(d):
                tmp = m[c, j]
                m[c, j] = m[piv, j]
                m[piv, j] = tmp
            tmp = x[c]
            x[c] = x[piv]
            x[piv] = tmp
        for r in range(c + 1, d):
            f = m[r, c] / m[c, c]
            if f != 0.0:
                for j in range(c, d):
                    m[r, j] -= f * m[c, j]
                x[r] -= f * x[c]
    for c in range(d - 1, -1, -1):
        s = x[c]
        for j in range(c + 1, d):
            s -= m[c, j] * x[j]
        x[c] = s / m[c, c]
    return x, True


# -- inner dual problem ----------------------------------------------------------

@njit(cache=True, error_model="numpy")
def _logstar(z, eps):
    if z >= eps:
        return math.log(z)
    t = z / eps
    return math.log(eps) - 1.5 + 2.0 * t - 0.5 * t * t


@njit(cache=True, error_model="numpy")
def _dual_objective(ptr, cols, g, lam, eps):
    n = ptr.size - 1
    s = 0.0
    for i in range(n):
        z = 1.0
        for e in range(ptr[i], ptr[i + 1]):
            z += lam[cols[e]] * g[e]
        s += _logstar(z, eps)
    return s


@njit(cache=True, error_model="numpy")
def dual_solve(ptr, cols, g, p, lam, tol_grad, max_iter, max_halving):
    """Maximise ``sum log*(1 + lam' g_i)`` over ``lam`` (updated in place).

    Returns ``(status, log_el, iterations)``; ``log_el`` is ``2 sum log z_i``
    on convergence and ``inf`` when the hull test fails.
    """
    n = ptr.size - 1
    eps = 1.0 / n
    active = np.zeros(p, dtype=np.bool_)
    scale = 0.0
    for i in range(n):
        rn = 0.0
        for e in range(ptr[i], ptr[i + 1]):
            v = g[e]
            if v != 0.0:
                active[cols[e]] = True
                rn += v * v
        scale = max(scale, math.sqrt(rn))
    for k in range(p):
        if not active[k]:
            lam[k] = 0.0
    if scale == 0.0:
        return OK, 0.0, 0

    grad = np.empty(p)
    neg_h = np.empty((p, p))
    low = np.empty((p, p))
    trial = np.empty(p)
    obj = _dual_objective(ptr, cols, g, lam, eps)
    for it in range(max_iter):
        grad[:] = 0.0
        neg_h[:, :] = 0.0
        zmin = np.inf
        umin = np.inf
        umax = -np.inf
        slog = 0.0
        for i in range(n):
            z = 1.0
            for e in range(ptr[i], ptr[i + 1]):
                z += lam[cols[e]] * g[e]
            zmin = min(zmin, z)
            umin = min(umin, z - 1.0)
            umax = max(umax, z - 1.0)
            if z >= eps:
                d1 = 1.0 / z
                d2 = d1 * d1
                slog += math.log(z)
            else:
                d1 = 2.0 / eps - z / (eps * eps)
                d2 = 1.0 / (eps * eps)
            for e in range(ptr[i], ptr[i + 1]):
                k = cols[e]
                grad[k] += d1 * g[e]
                for f in range(ptr[i], ptr[i + 1]):
                    neg_h[k, cols[f]] += d2 * g[e] * g[f]
        gnorm = 0.0
        lnorm = 0.0
        lgrad = 0.0
        for k in range(p):
            gnorm += grad[k] * grad[k]
            lnorm += lam[k] * lam[k]
            lgrad += lam[k] * grad[k]
        gnorm = math.sqrt(gnorm)
        lnorm = math.sqrt(lnorm)
        # n - sum 1/z_i = lam' grad, so this is |sum w_i - 1| <= WSUM_TOL; it
        # stays of order one along paths escaping to the hull boundary.
        if gnorm <= tol_grad * n * scale and abs(lgrad) <= WSUM_TOL * n:
            if zmin >= eps:
                return OK, max(2.0 * slog, 0.0), it
            # A genuine EL solution has every z_i >= 1/n and would also
            # maximise the extended objective, so none exists.
            return INFEASIBLE, np.inf, it
        # lam' g_i >= 0 for all i with one strictly positive separates 0 from
        # the relative interior of the hull.
        if umax > 0.0 and umin >= -1e-13 * lnorm * scale and lnorm > 0.0:
            return INFEASIBLE, np.inf, it
        if lnorm * scale > 1e12:
            return INFEASIBLE, np.inf, it
        for k in range(p):
            if not active[k]:
                neg_h[k, k] = 1.0
        if _spd_factor(neg_h, low) == np.inf:
            return MAX_ITER, np.nan, it
        step = _chol_solve(low, grad)
        t = 1.0
        accepted = False
        for _ in range(max_halving):
            for k in range(p):
                trial[k] = lam[k] + t * step[k]
            obj_t = _dual_objective(ptr, cols, g, trial, eps)
            if obj_t >= obj - 1e-12 * (1.0 + abs(obj)):
                lam[:] = trial
                obj = obj_t
                accepted = True
                break
            t *= 0.5
        if not accepted:
            return MAX_ITER, np.nan, it
    return MAX_ITER, np.nan, max_iter


@njit(cache=True, error_model="numpy")
def _scores(ptr, cols, vals, theta, g):
    # residuals at rounding level are exact zeros (theta is often rebuilt
    # from a null-space parametrisation)
    for e in range(cols.size):
        r = vals[e] - theta[cols[e]]
        if abs(r) <= SNAP_ULPS * 2.220446049250313e-16 * max(abs(vals[e]), abs(theta[cols[e]])):
            r = 0.0
        g[e] = r


@njit(cache=True, error_model="numpy")
def el_value(ptr, cols, vals, p, theta, lam):
    """``(status, l_n(theta))`` with ``lam`` used as warm start and updated."""
    g = np.empty(vals.size)
    _scores(ptr, cols, vals, theta, g)
    st, l, _ = dual_solve(ptr, cols, g, p, lam, DUAL_TOL, DUAL_MAX_ITER, MAX_HALVING)
    return st, l


# -- outer constrained problem ---------------------------------------------------

@njit(cache=True, error_model="numpy")
def _assemble(ptr, cols, vals, theta, lam, f1, a, h, e_mat, q):
    """Fill the shared quantities; returns ``(zmin, data scale)``."""
    n = ptr.size - 1
    f1[:] = 0.0
    a[:] = 0.0
    h[:, :] = 0.0
    e_mat[:, :] = 0.0
    q[:, :] = 0.0
    zmin = np.inf
    scale = 0.0
    for i in range(n):
        z = 1.0
        rn = 0.0
        for e in range(ptr[i], ptr[i + 1]):
            gk = vals[e] - theta[cols[e]]
            z += lam[cols[e]] * gk
            rn += gk * gk
        scale = max(scale, math.sqrt(rn))
        zmin = min(zmin, z)
        if z <= 0.0:
            return zmin, scale
        iz = 1.0 / z
        iz2 = iz * iz
        for e in range(ptr[i], ptr[i + 1]):
            k = cols[e]
            gk = vals[e] - theta[k]
            f1[k] += gk * iz
            a[k] += iz
            for f in range(ptr[i], ptr[i + 1]):
                l = cols[f]
                gl = vals[f] - theta[l]
                h[k, l] += gk * gl * iz2
                e_mat[k, l] += gk * lam[l] * iz2
                q[k, l] += iz2
    return zmin, scale


@njit(cache=True, error_model="numpy")
def _sum_log_z(ptr, cols, vals, theta, lam):
    n = ptr.size - 1
    s = 0.0
    for i in range(n):
        z = 1.0
        for e in range(ptr[i], ptr[i + 1]):
            z += lam[cols[e]] * (vals[e] - theta[cols[e]])
        s += math.log(z)
    return s


@njit(cache=True, error_model="numpy")
def _min_z(ptr, cols, vals, theta, lam):
    n = ptr.size - 1
    zmin = np.inf
    for i in range(n):
        z = 1.0
        for e in range(ptr[i], ptr[i + 1]):
            z += lam[cols[e]] * (vals[e] - theta[cols[e]])
        zmin = min(zmin, z)
    return zmin


@njit(cache=True, error_model="numpy")
def _observed(ptr, cols, p):
    obs = np.zeros(p, dtype=np.bool_)
    for e in range(cols.size):
        obs[cols[e]] = True
    return obs


@njit(cache=True, error_model="numpy")
def _theta_of(part, nb, xi, theta):
    p, d = nb.shape
    for k in range(p):
        s = part[k]
        for j in range(d):
            s += nb[k, j] * xi[j]
        theta[k] = s


@njit(cache=True, error_model="numpy")
def _norm(x):
    s = 0.0
    for v in x:
        s += v * v
    return math.sqrt(s)


@njit(cache=True, error_model="numpy")
def saddle_newton(ptr, cols, vals, p, nb, part, xi, lam, max_iter):
    """Newton's method on the joint stationarity system in ``(lam, xi)``.

    Starting from ``lam = 0`` the first step is the Wald-type projection.
    Returns ``(status, statistic, iterations)``; anything but ``OK`` means the
    caller should fall back to :func:`nested_newton`.
    """
    n = ptr.size - 1
    d = nb.shape[1]
    eps = 1.0 / n
    obs = _observed(ptr, cols, p)
    theta = np.empty(p)
    f1 = np.empty(p)
    a = np.empty(p)
    h = np.empty((p, p))
    e_mat = np.empty((p, p))
    q = np.empty((p, p))
    low = np.empty((p, p))
    mn = np.empty((p, d))
    f2 = np.empty(d)
    kmat = np.empty((d, d))
    rhs = np.empty(d)
    lam_t = np.empty(p)
    xi_t = np.empty(d)
    theta_t = np.empty(p)
    for it in range(max_iter):
        _theta_of(part, nb, xi, theta)
        zmin, scale = _assemble(ptr, cols, vals, theta, lam, f1, a, h, e_mat, q)
        if not zmin > 0.0:
            return MAX_ITER, np.nan, it
        for k in range(p):
            if not obs[k]:
                h[k, k] = 1.0
                f1[k] = 0.0
        for j in range(d):
            s = 0.0
            for k in range(p):
                s += nb[k, j] * lam[k] * a[k]
            f2[j] = s
        f1n = _norm(f1)
        lf1 = 0.0
        for k in range(p):
            lf1 += lam[k] * f1[k]
        gxi = 2.0 * _norm(f2)
        if f1n == 0.0 and gxi == 0.0:
            return OK, max(2.0 * _sum_log_z(ptr, cols, vals, theta, lam), 0.0), it
        for k in range(p):
            for j in range(d):
                s = a[k] * nb[k, j]
                for l in range(p):
                    s -= e_mat[k, l] * nb[l, j]
                mn[k, j] = s
        if _spd_factor(h, low) == np.inf:
            return MAX_ITER, np.nan, it
        x0 = _chol_solve(low, f1)
        xs = np.empty((p, d))
        for j in range(d):
            xs[:, j] = _chol_solve(low, mn[:, j].copy())
        for i in range(d):
            s = f2[i]
            for k in range(p):
                s += mn[k, i] * x0[k]
            rhs[i] = s
            for j in range(d):
                s = 0.0
                for k in range(p):
                    s += mn[k, i] * xs[k, j]
                for k in range(p):
                    if lam[k] == 0.0:
                        continue
                    nlk = nb[k, i] * lam[k]
                    for l in range(p):
                        s -= nlk * q[k, l] * lam[l] * nb[l, j]
                for k in range(p):
                    if not obs[k]:
                        s += nb[k, i] * nb[k, j]  # l is flat along unobserved coordinates
                kmat[i, j] = s
        dxi, ok = _lu_solve(kmat, rhs)
        if not ok:
            return MAX_ITER, np.nan, it
        dlam = x0.copy()
        for k in range(p):
            for j in range(d):
                dlam[k] -= xs[k, j] * dxi[j]
        tnorm = _norm(theta)
        stepn = _norm(dxi)
        if (f1n <= DUAL_TOL * n * scale and abs(lf1) <= WSUM_TOL * n
                and gxi <= GRAD_TOL and stepn <= STEP_TOL * (1.0 + tnorm)
                and zmin >= eps):
            return OK, max(2.0 * _sum_log_z(ptr, cols, vals, theta, lam), 0.0), it
        t = 1.0
        moved = False
        for _ in range(MAX_HALVING):
            for j in range(d):
                xi_t[j] = xi[j] + t * dxi[j]
            for k in range(p):
                lam_t[k] = lam[k] + t * dlam[k]
            _theta_of(part, nb, xi_t, theta_t)
            if _min_z(ptr, cols, vals, theta_t, lam_t) >= 0.1 * eps:
                moved = True
                break
            t *= 0.5
        if not moved:
            return MAX_ITER, np.nan, it
        xi[:] = xi_t
        lam[:] = lam_t
    return MAX_ITER, np.nan, max_iter


@njit(cache=True, error_model="numpy")
def _profile_derivatives(ptr, cols, vals, p, nb, theta, lam, obs, gxi, k_exact, k_gn):
    """Reduced gradient and (exact, Gauss-Newton) Hessians of ``l`` at theta."""
    d = nb.shape[1]
    f1 = np.empty(p)
    a = np.empty(p)
    h = np.empty((p, p))
    e_mat = np.empty((p, p))
    q = np.empty((p, p))
    low = np.empty((p, p))
    _assemble(ptr, cols, vals, theta, lam, f1, a, h, e_mat, q)
    for k in range(p):
        if not obs[k]:
            h[k, k] = 1.0
    for j in range(d):
        s = 0.0
        for k in range(p):
            s += nb[k, j] * lam[k] * a[k]
        gxi[j] = -2.0 * s
    mn = np.empty((p, d))
    for k in range(p):
        for j in range(d):
            s = a[k] * nb[k, j]
            for l in range(p):
                s -= e_mat[k, l] * nb[l, j]
            mn[k, j] = s
    if _spd_factor(h, low) == np.inf:
        return False
    xs = np.empty((p, d))
    for j in range(d):
        xs[:, j] = _chol_solve(low, mn[:, j].copy())
    for i in range(d):
        for j in range(d):
            s = 0.0
            for k in range(p):
                s += mn[k, i] * xs[k, j]
            c = 0.0
            for k in range(p):
                if lam[k] == 0.0:
                    continue
                for l in range(p):
                    c += nb[k, i] * lam[k] * q[k, l] * lam[l] * nb[l, j]
            for k in range(p):
                if not obs[k]:
                    s += nb[k, i] * nb[k, j]
            k_gn[i, j] = 2.0 * s
            k_exact[i, j] = 2.0 * s - 2.0 * c
    return True


@njit(cache=True, error_model="numpy")
def nested_newton(ptr, cols, vals, p, nb, part, xi, lam):
    """Damped Newton on ``xi -> l(part + N xi)`` with an inner dual solve.

    Returns ``(status, statistic, iterations)``.  ``START_INFEASIBLE`` means
    the starting point lies outside the EL domain.
    """
    d = nb.shape[1]
    obs = _observed(ptr, cols, p)
    theta = np.empty(p)
    theta_t = np.empty(p)
    g = np.empty(vals.size)
    _theta_of(part, nb, xi, theta)
    _scores(ptr, cols, vals, theta, g)
    st, l, _ = dual_solve(ptr, cols, g, p, lam, DUAL_TOL, DUAL_MAX_ITER, MAX_HALVING)
    if st != OK:
        return START_INFEASIBLE, np.inf, 0
    if d == 0:
        return OK, l, 0
    gxi = np.empty(d)
    k_exact = np.empty((d, d))
    k_gn = np.empty((d, d))
    low = np.empty((d, d))
    xi_t = np.empty(d)
    lam_t = np.empty(p)
    for it in range(OUTER_MAX_ITER):
        if not _profile_derivatives(ptr, cols, vals, p, nb, theta, lam, obs,
                                    gxi, k_exact, k_gn):
            return MAX_ITER, np.nan, it
        gnorm = _norm(gxi)
        if gnorm == 0.0:
            return OK, l, it
        if _spd_factor(k_exact, low) <= math.sqrt(COND_MAX):
            dxi = -_chol_solve(low, gxi)
        elif _spd_factor(k_gn, low) <= math.sqrt(COND_MAX):
            dxi = -_chol_solve(low, gxi)
        else:
            tr = 0.0
            for j in range(d):
                tr += abs(k_gn[j, j])
            dxi = -gxi / max(tr / d, 1e-300)
        stepn = _norm(dxi)
        if gnorm <= GRAD_TOL and stepn <= STEP_TOL * (1.0 + _norm(theta)):
            return OK, l, it
        slope = 0.0
        for j in range(d):
            slope += gxi[j] * dxi[j]
        if gnorm <= 1e-6 and -slope <= DECREMENT_TOL * (1.0 + l):
            return OK, l, it  # predicted decrease is below rounding level
        t = 1.0
        accepted = False
        for _ in range(MAX_HALVING):
            for j in range(d):
                xi_t[j] = xi[j] + t * dxi[j]
            lam_t[:] = lam
            _theta_of(part, nb, xi_t, theta_t)
            _scores(ptr, cols, vals, theta_t, g)
            st, l_t, _ = dual_solve(ptr, cols, g, p, lam_t, DUAL_TOL,
                                    DUAL_MAX_ITER, MAX_HALVING)
            if st == OK and l_t <= l + 1e-4 * t * slope + 1e-13 * (1.0 + l):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            if gnorm <= 1e-6:
                return OK, l, it
            return MAX_ITER, np.nan, it
        xi[:] = xi_t
        lam[:] = lam_t
        theta[:] = theta_t
        l = l_t
    return MAX_ITER, np.nan, OUTER_MAX_ITER


@njit(cache=True, error_model="numpy")
def constrained_solve(ptr, cols, vals, p, nb, part, xi0, anchor, fast):
    """Minimise ``l_n`` over ``{part + N xi}`` starting from ``xi0``.

    With ``fast`` the joint saddle Newton is tried first; it is quick but not
    a descent method, so on non-convex profiles it may settle in a different
    basin than descent from ``xi0`` would.  Otherwise (or when it fails) a
    damped Newton descent runs from ``xi0``.  If ``xi0`` lies outside the EL
    domain, a continuation path starts from ``anchor``, a point inside the
    domain (typically the unconstrained minimiser).
    Returns ``(status, statistic, theta, lam, method)`` with method 0 =
    saddle Newton, 1 = nested Newton, 2 = continuation.
    """
    d = nb.shape[1]
    theta = np.empty(p)
    lam = np.zeros(p)
    if d == 0:
        theta[:] = part
        st, stat = el_value(ptr, cols, vals, p, theta, lam)
        return st, stat, theta, lam, 1
    if fast:
        xi = xi0.copy()
        st, stat, _ = saddle_newton(ptr, cols, vals, p, nb, part, xi, lam, SADDLE_MAX_ITER)
        if st == OK:
            _theta_of(part, nb, xi, theta)
            return OK, stat, theta, lam, 0
    xi = xi0.copy()
    lam = np.zeros(p)
    st, stat, _ = nested_newton(ptr, cols, vals, p, nb, part, xi, lam)
    if st == OK:
        _theta_of(part, nb, xi, theta)
        return OK, stat, theta, lam, 1
    if st == MAX_ITER:
        _theta_of(part, nb, xi, theta)
        return MAX_ITER, np.nan, theta, lam, 1

    # continuation in the right-hand side from the unconstrained minimiser
    part0 = anchor.copy()
    xi_cur = np.zeros(d)
    for j in range(d):
        s = 0.0
        for k in range(p):
            s += nb[k, j] * anchor[k]
        xi_cur[j] = s
    for k in range(p):
        for j in range(d):
            part0[k] -= nb[k, j] * xi_cur[j]
    lam_cur = np.zeros(p)
    part_t = np.empty(p)
    t_cur = 0.0
    dt = 1.0
    for _ in range(400):
        t_try = min(1.0, t_cur + dt)
        for k in range(p):
            part_t[k] = (1.0 - t_try) * part0[k] + t_try * part[k]
        xi = xi_cur.copy()
        lam = lam_cur.copy()
        st, stat, _ = nested_newton(ptr, cols, vals, p, nb, part_t, xi, lam)
        if st == OK:
            t_cur = t_try
            xi_cur = xi
            lam_cur = lam
            if t_cur >= 1.0:
                _theta_of(part, nb, xi_cur, theta)
                return OK, stat, theta, lam_cur, 2
            dt *= 2.0
        else:
            dt *= 0.5
            if dt < 1e-10:
                break
    _theta_of(part, nb, xi_cur, theta)
    return INFEASIBLE, np.inf, theta, lam_cur, 2


@njit(cache=True, error_model="numpy")
def mele(ptr, cols, vals, p):
    s = np.zeros(p)
    c = np.zeros(p)
    for e in range(cols.size):
        s[cols[e]] += vals[e]
        c[cols[e]] += 1.0
    out = np.empty(p)
    for k in range(p):
        out[k] = s[k] / c[k] if c[k] > 0 else np.nan
    return out


@njit(cache=True, error_model="numpy")
def hypothesis_statistics(ptr, cols, vals, p, nbs, dims, parts):
    """Constrained statistics for a stack of hypotheses on one dataset.

    ``nbs[j, :, :dims[j]]`` is the null-space basis and ``parts[j]`` the
    particular solution of hypothesis ``j``.  Returns ``(stats, status)``.
    """
    m = dims.size
    th = mele(ptr, cols, vals, p)
    for k in range(p):
        if np.isnan(th[k]):
            th[k] = 0.0
    out = np.empty(m)
    status = np.empty(m, dtype=np.int64)
    for j in range(m):
        d = dims[j]
        nb = np.ascontiguousarray(nbs[j, :, :d])
        xi0 = np.zeros(d)
        for i in range(d):
            s = 0.0
            for k in range(p):
                s += nb[k, i] * th[k]
            xi0[i] = s
        st, stat, _, _, _ = constrained_solve(ptr, cols, vals, p, nb, parts[j], xi0, th,
                                              True)
        status[j] = st
        out[j] = stat if st != MAX_ITER else np.nan
    return out, status


@njit(cache=True, error_model="numpy")
def bootstrap_statistics(ptr, cols, vals, p, rows, nbs, dims, parts):
    """Statistics on resampled designs; ``rows[b]`` lists the drawn blocks.

    Resampling copies whole blocks (incidence row plus responses).
    """
    nrep, n = rows.shape
    m = dims.size
    stats = np.empty((nrep, m))
    status = np.empty((nrep, m), dtype=np.int64)
    sizes = np.empty(ptr.size - 1, dtype=np.int64)
    for i in range(ptr.size - 1):
        sizes[i] = ptr[i + 1] - ptr[i]
    for b in range(nrep):
        nnz = 0
        for i in range(n):
            nnz += sizes[rows[b, i]]
        rptr = np.empty(n + 1, dtype=np.int64)
        rcols = np.empty(nnz, dtype=np.int64)
        rvals = np.empty(nnz)
        rptr[0] = 0
        pos = 0
        for i in range(n):
            src = rows[b, i]
            for e in range(ptr[src], ptr[src + 1]):
                rcols[pos] = cols[e]
                rvals[pos] = vals[e]
                pos += 1
            rptr[i + 1] = pos
        s, st = hypothesis_statistics(rptr, rcols, rvals, p, nbs, dims, parts)
        stats[b] = s
        status[b] = st
    return stats, status
