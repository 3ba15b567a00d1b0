# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled trajectory core.

C implementations of the hot rollout loops for the built-in target families
(packed-descriptor dispatch, no Python callbacks inside the step loop).
Semantics match :mod:`orbitmc._purepy` op for op; see that module for the
shared conventions.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport M_PI, exp, isfinite, log, log1p

cnp.import_array()

cdef double LOG_2PI = 1.8378770664093454835607

cdef enum TargetKind:
    DIAG_GAUSS = 0
    BANANA = 1
    LOGISTIC = 2
    ITEM_RESPONSE = 3


cdef inline double _softplus(double z) noexcept:
    # log(1 + exp(z)), stable for large |z|; matches np.logaddexp(0, z)
    if z > 0.0:
        return z + log1p(exp(-z))
    return log1p(exp(z))


cdef inline double _sigmoid(double z) noexcept:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


cdef double _eval(int kind,
                  double[::1] f0, double[::1] f1,
                  long long[::1] i0, long long[::1] i1, long long[::1] meta,
                  double[::1] x, double[::1] grad) noexcept:
    """Unnormalized-posterior log-density and gradient; returns logp."""
    cdef Py_ssize_t dim = x.shape[0]
    cdef Py_ssize_t i, j, n, d, ns, nq
    cdef double lp = 0.0
    cdef double x1, x2, m, r, s1sq, curv, off, s2sq
    cdef double z, resid, rsum, b, delta, dd

    if kind == DIAG_GAUSS:
        for i in range(dim):
            lp += -0.5 * (LOG_2PI + log(f0[i])) - 0.5 * x[i] * x[i] / f0[i]
            grad[i] = -x[i] / f0[i]
        return lp

    if kind == BANANA:
        s1sq = f0[0]; curv = f0[1]; off = f0[2]; s2sq = f0[3]
        x1 = x[0]; x2 = x[1]
        m = curv * (x1 * x1 - off)
        r = (x2 - m) / s2sq
        lp = (-0.5 * log(2.0 * M_PI * s1sq) - 0.5 * x1 * x1 / s1sq
              - 0.5 * log(2.0 * M_PI * s2sq) - 0.5 * (x2 - m) * (x2 - m) / s2sq)
        grad[0] = -x1 / s1sq + r * (2.0 * curv * x1)
        grad[1] = -r
        return lp

    if kind == LOGISTIC:
        # f0 = row-major design matrix (n, d), f1 = labels, theta = [w, b]
        n = meta[0]; d = meta[1]
        b = x[d]
        for j in range(d + 1):
            grad[j] = 0.0
        rsum = 0.0
        for i in range(n):
            z = -b
            for j in range(d):
                z += f0[i * d + j] * x[j]
            lp += f1[i] * z - _softplus(z)
            resid = f1[i] - _sigmoid(z)
            rsum += resid
            for j in range(d):
                grad[j] += resid * f0[i * d + j]
        for j in range(d):
            grad[j] -= x[j]
            lp -= 0.5 * x[j] * x[j]
        grad[d] = -rsum - b
        lp += -0.5 * b * b - 0.5 * (d + 1) * LOG_2PI
        return lp

    if kind == ITEM_RESPONSE:
        # theta = [alpha (ns), beta (nq), delta]; logit = alpha[j] - beta[k] + delta
        n = meta[0]; ns = meta[1]; nq = meta[2]
        delta = x[ns + nq]
        for j in range(dim):
            grad[j] = 0.0
        rsum = 0.0
        for i in range(n):
            z = x[i0[i]] - x[ns + i1[i]] + delta
            lp += f1[i] * z - _softplus(z)
            resid = f1[i] - _sigmoid(z)
            rsum += resid
            grad[i0[i]] += resid
            grad[ns + i1[i]] -= resid
        for j in range(ns + nq):
            grad[j] -= x[j]
            lp -= 0.5 * x[j] * x[j]
        dd = delta - f0[0]
        grad[ns + nq] = rsum - dd
        lp += -0.5 * dd * dd - 0.5 * dim * LOG_2PI
        return lp

    return -1e308  # unreachable for valid kinds


def logp_grad(int kind, double[::1] f0, double[::1] f1,
              long long[::1] i0, long long[::1] i1, long long[::1] meta,
              x):
    """Descriptor-path (logp, grad) at a single point; used for parity tests."""
    cdef cnp.ndarray[double, ndim=1] xa = np.ascontiguousarray(x, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] g = np.empty(xa.shape[0], dtype=np.float64)
    cdef double lp = _eval(kind, f0, f1, i0, i1, meta, xa, g)
    return lp, g


cdef inline bint _all_finite(double[::1] a) noexcept:
    cdef Py_ssize_t i
    for i in range(a.shape[0]):
        if not isfinite(a[i]):
            return False
    return True


def rollout(int kind, double[::1] f0, double[::1] f1,
            long long[::1] i0, long long[::1] i1, long long[::1] meta,
            x0, v0, double eps, double beta, int n_fwd, int n_bwd):
    """Conformal-leapfrog rollout; same contract as the NumPy twin."""
    cdef cnp.ndarray[double, ndim=1] x0a = np.ascontiguousarray(x0, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] v0a = np.ascontiguousarray(v0, dtype=np.float64)
    cdef Py_ssize_t dim = x0a.shape[0]
    cdef double half = 0.5 * eps
    cdef double drift = half * (beta + 1.0 / beta)
    cdef int total = n_fwd + n_bwd + 1

    cdef cnp.ndarray[double, ndim=2] xs = np.zeros((total, dim))
    cdef cnp.ndarray[double, ndim=2] vs = np.zeros((total, dim))
    cdef cnp.ndarray[double, ndim=1] logps = np.full(total, -np.inf)
    cdef double[:, ::1] xm = xs
    cdef double[:, ::1] vm = vs
    cdef double[::1] lpm = logps

    cdef cnp.ndarray[double, ndim=1] xb = x0a.copy()
    cdef cnp.ndarray[double, ndim=1] vb = v0a.copy()
    cdef cnp.ndarray[double, ndim=1] g0b = np.empty(dim)
    cdef cnp.ndarray[double, ndim=1] gb = np.empty(dim)
    cdef cnp.ndarray[double, ndim=1] gnew = np.empty(dim)
    cdef double[::1] xc = xb
    cdef double[::1] vc = vb
    cdef double[::1] g0 = g0b
    cdef double[::1] g = gb
    cdef double[::1] g1 = gnew

    cdef double lp0 = _eval(kind, f0, f1, i0, i1, meta, xc, g0)
    cdef int grad_evals = 1
    cdef Py_ssize_t i
    cdef int step, ok_fwd = 0, ok_bwd = 0
    cdef double v1, lp1
    cdef bint bad

    for i in range(dim):
        xm[n_bwd, i] = xc[i]
        vm[n_bwd, i] = vc[i]
    lpm[n_bwd] = lp0
    if not (_all_finite(g0) and isfinite(lp0)):
        return xs, vs, logps, 0, 0, grad_evals

    for i in range(dim):
        g[i] = g0[i]
    for step in range(1, n_fwd + 1):
        bad = False
        for i in range(dim):
            v1 = beta * (vc[i] + half * g[i])
            vc[i] = v1
            xc[i] = xc[i] + drift * v1
        lp1 = _eval(kind, f0, f1, i0, i1, meta, xc, g1)
        grad_evals += 1
        for i in range(dim):
            vc[i] = beta * (vc[i] + half * g1[i])
            if not (isfinite(xc[i]) and isfinite(vc[i]) and isfinite(g1[i])):
                bad = True
        if bad or not isfinite(lp1):
            break
        for i in range(dim):
            xm[n_bwd + step, i] = xc[i]
            vm[n_bwd + step, i] = vc[i]
            g[i] = g1[i]
        lpm[n_bwd + step] = lp1
        ok_fwd = step

    for i in range(dim):
        xc[i] = x0a[i]
        vc[i] = v0a[i]
        g[i] = g0[i]
    for step in range(1, n_bwd + 1):
        bad = False
        for i in range(dim):
            v1 = vc[i] / beta - half * g[i]
            vc[i] = v1
            xc[i] = xc[i] - drift * v1
        lp1 = _eval(kind, f0, f1, i0, i1, meta, xc, g1)
        grad_evals += 1
        for i in range(dim):
            vc[i] = vc[i] / beta - half * g1[i]
            if not (isfinite(xc[i]) and isfinite(vc[i]) and isfinite(g1[i])):
                bad = True
        if bad or not isfinite(lp1):
            break
        for i in range(dim):
            xm[n_bwd - step, i] = xc[i]
            vm[n_bwd - step, i] = vc[i]
            g[i] = g1[i]
        lpm[n_bwd - step] = lp1
        ok_bwd = step

    return xs, vs, logps, ok_fwd, ok_bwd, grad_evals


def contracting_orbit(int kind, double[::1] f0, double[::1] f1,
                      long long[::1] i0, long long[::1] i1, long long[::1] meta,
                      x0, v0, double eps, double beta,
                      double log_w_threshold, int max_steps):
    """Threshold-truncated conformal-leapfrog orbit; see the NumPy twin."""
    cdef cnp.ndarray[double, ndim=1] x0a = np.ascontiguousarray(x0, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] v0a = np.ascontiguousarray(v0, dtype=np.float64)
    cdef Py_ssize_t dim = x0a.shape[0]
    cdef double half = 0.5 * eps
    cdef double drift = half * (beta + 1.0 / beta)
    cdef double log_beta = log(beta)

    cdef cnp.ndarray[double, ndim=1] xb = x0a.copy()
    cdef cnp.ndarray[double, ndim=1] vb = v0a.copy()
    cdef cnp.ndarray[double, ndim=1] g0b = np.empty(dim)
    cdef cnp.ndarray[double, ndim=1] gb = np.empty(dim)
    cdef cnp.ndarray[double, ndim=1] gnew = np.empty(dim)
    cdef double[::1] xc = xb
    cdef double[::1] vc = vb
    cdef double[::1] g0 = g0b
    cdef double[::1] g = gb
    cdef double[::1] g1 = gnew

    cdef double lp0 = _eval(kind, f0, f1, i0, i1, meta, xc, g0)
    cdef int grad_evals = 1
    cdef Py_ssize_t i
    cdef double vv = 0.0
    for i in range(dim):
        vv += vc[i] * vc[i]
    cdef double lw0 = lp0 - 0.5 * vv - 0.5 * dim * LOG_2PI
    cdef bint truncated = False, failed = False

    if not (_all_finite(g0) and isfinite(lw0)):
        return (x0a[None, :].copy(), v0a[None, :].copy(),
                np.array([lw0]), 0, False, True, grad_evals)

    fwd_x, fwd_v, fwd_w = [], [], []
    bwd_x, bwd_v, bwd_w = [], [], []
    cdef double log_max = lw0
    cdef int step, direction
    cdef double v1, lp1, lw
    cdef bint bad

    for direction in range(2):
        for i in range(dim):
            xc[i] = x0a[i]
            vc[i] = v0a[i]
            g[i] = g0[i]
        for step in range(1, max_steps + 1):
            bad = False
            if direction == 0:
                for i in range(dim):
                    v1 = beta * (vc[i] + half * g[i])
                    vc[i] = v1
                    xc[i] = xc[i] + drift * v1
            else:
                for i in range(dim):
                    v1 = vc[i] / beta - half * g[i]
                    vc[i] = v1
                    xc[i] = xc[i] - drift * v1
            lp1 = _eval(kind, f0, f1, i0, i1, meta, xc, g1)
            grad_evals += 1
            vv = 0.0
            for i in range(dim):
                if direction == 0:
                    vc[i] = beta * (vc[i] + half * g1[i])
                else:
                    vc[i] = vc[i] / beta - half * g1[i]
                if not (isfinite(xc[i]) and isfinite(vc[i]) and isfinite(g1[i])):
                    bad = True
                vv += vc[i] * vc[i]
            if bad or not isfinite(lp1):
                failed = True
                break
            lw = (lp1 - 0.5 * vv - 0.5 * dim * LOG_2PI
                  + 2.0 * dim * log_beta * (step if direction == 0 else -step))
            if lw <= log_max - log_w_threshold:
                break
            if direction == 0:
                fwd_x.append(xb.copy()); fwd_v.append(vb.copy()); fwd_w.append(lw)
            else:
                bwd_x.append(xb.copy()); bwd_v.append(vb.copy()); bwd_w.append(lw)
            if lw > log_max:
                log_max = lw
            for i in range(dim):
                g[i] = g1[i]
            if step == max_steps:
                truncated = True

    n_bwd = len(bwd_x)
    xs = np.array(bwd_x[::-1] + [x0a] + fwd_x)
    vs = np.array(bwd_v[::-1] + [v0a] + fwd_v)
    logws = np.array(bwd_w[::-1] + [lw0] + fwd_w)
    return xs, vs, logws, n_bwd, truncated, failed, grad_evals
