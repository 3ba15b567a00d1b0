"""Pure-NumPy twin of the compiled trajectory core.

Implements the hot rollout loops against a :class:`~orbitmc.targets.TargetModel`
directly (Python callbacks per step).  The compiled module ``orbitmc._core``
implements the same contracts against packed descriptors; either one is
selected at import time by :mod:`orbitmc.backend`.

Conventions shared with the compiled core:

- one velocity-Verlet step is kick/drift/kick with friction coefficient
  ``beta`` applied inside both kicks (``beta = 1`` is the plain leapfrog);
- the drift coefficient is ``(eps/2) * (beta + 1/beta)``, which equals
  ``eps`` exactly when ``beta = 1``;
- log-weights are joint phase-space log-densities
  ``log p(x) - ||v||^2/2 - (dim/2) log(2 pi)`` plus the accumulated
  log-Jacobian ``2 * dim * ln(beta) * i`` at orbit index ``i``;
- a non-finite value truncates the affected direction instead of raising.
"""

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


def _finite(*arrays):
    return all(np.all(np.isfinite(a)) for a in arrays)


def rollout(target, x0, v0, eps, beta, n_fwd, n_bwd):
    """Iterate the (conformal) leapfrog n_fwd steps forward, n_bwd backward.

    Returns ``(xs, vs, logps, ok_fwd, ok_bwd, grad_evals)`` where row
    ``n_bwd`` holds the starting point and ``ok_*`` count the steps that
    produced finite states (the rest of the buffer is unspecified).
    """
    x0 = np.asarray(x0, dtype=np.float64)
    v0 = np.asarray(v0, dtype=np.float64)
    dim = x0.shape[0]
    half = 0.5 * eps
    drift = half * (beta + 1.0 / beta)
    total = n_fwd + n_bwd + 1
    xs = np.zeros((total, dim))
    vs = np.zeros((total, dim))
    logps = np.full(total, -np.inf)

    g0 = np.asarray(target.grad_log_density(x0), dtype=np.float64)
    lp0 = float(target.log_density(x0))
    xs[n_bwd], vs[n_bwd], logps[n_bwd] = x0, v0, lp0
    grad_evals = 1
    if not (_finite(g0) and np.isfinite(lp0)):
        return xs, vs, logps, 0, 0, grad_evals

    ok_fwd = 0
    x, v, g = x0, v0, g0
    for step in range(1, n_fwd + 1):
        v1 = beta * (v + half * g)
        x1 = x + drift * v1
        g1 = np.asarray(target.grad_log_density(x1), dtype=np.float64)
        grad_evals += 1
        v2 = beta * (v1 + half * g1)
        lp1 = float(target.log_density(x1))
        if not (_finite(x1, v2, g1) and np.isfinite(lp1)):
            break
        xs[n_bwd + step], vs[n_bwd + step], logps[n_bwd + step] = x1, v2, lp1
        x, v, g = x1, v2, g1
        ok_fwd = step

    ok_bwd = 0
    x, v, g = x0, v0, g0
    for step in range(1, n_bwd + 1):
        v1 = v / beta - half * g
        x1 = x - drift * v1
        g1 = np.asarray(target.grad_log_density(x1), dtype=np.float64)
        grad_evals += 1
        v2 = v1 / beta - half * g1
        lp1 = float(target.log_density(x1))
        if not (_finite(x1, v2, g1) and np.isfinite(lp1)):
            break
        xs[n_bwd - step], vs[n_bwd - step], logps[n_bwd - step] = x1, v2, lp1
        x, v, g = x1, v2, g1
        ok_bwd = step

    return xs, vs, logps, ok_fwd, ok_bwd, grad_evals


def _joint_logw(lp, v, dim, i, log_beta):
    return lp - 0.5 * float(v @ v) - 0.5 * dim * LOG_2PI + 2.0 * dim * log_beta * i


def contracting_orbit(target, x0, v0, eps, beta, log_w_threshold, max_steps):
    """Threshold-truncated orbit of the conformal leapfrog (Algorithm kernel).

    Extends forward (i = 1, 2, ...) then backward (i = -1, -2, ...) from the
    start while the candidate's joint log-weight stays above
    ``running_max - log_w_threshold``; the running maximum is shared across
    both passes.  Each direction is capped at ``max_steps``.

    Returns ``(xs, vs, logws, origin, truncated, failed, grad_evals)`` with
    rows ordered by orbit index and ``origin`` the row of the start state.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    v0 = np.asarray(v0, dtype=np.float64)
    dim = x0.shape[0]
    half = 0.5 * eps
    drift = half * (beta + 1.0 / beta)
    log_beta = float(np.log(beta))

    g0 = np.asarray(target.grad_log_density(x0), dtype=np.float64)
    lp0 = float(target.log_density(x0))
    grad_evals = 1
    lw0 = _joint_logw(lp0, v0, dim, 0, log_beta)
    fwd_x, fwd_v, fwd_w = [], [], []
    bwd_x, bwd_v, bwd_w = [], [], []
    truncated = False
    failed = False

    if not (_finite(g0, x0, v0) and np.isfinite(lw0)):
        return (
            x0[None, :].copy(),
            v0[None, :].copy(),
            np.array([lw0]),
            0,
            False,
            True,
            grad_evals,
        )

    log_max = lw0
    x, v, g = x0, v0, g0
    for step in range(1, max_steps + 1):
        v1 = beta * (v + half * g)
        x1 = x + drift * v1
        g1 = np.asarray(target.grad_log_density(x1), dtype=np.float64)
        grad_evals += 1
        v2 = beta * (v1 + half * g1)
        lp1 = float(target.log_density(x1))
        if not (_finite(x1, v2, g1) and np.isfinite(lp1)):
            failed = True
            break
        lw = _joint_logw(lp1, v2, dim, step, log_beta)
        if lw <= log_max - log_w_threshold:
            break
        fwd_x.append(x1)
        fwd_v.append(v2)
        fwd_w.append(lw)
        log_max = max(log_max, lw)
        x, v, g = x1, v2, g1
        if step == max_steps:
            truncated = True

    x, v, g = x0, v0, g0
    for step in range(1, max_steps + 1):
        v1 = v / beta - half * g
        x1 = x - drift * v1
        g1 = np.asarray(target.grad_log_density(x1), dtype=np.float64)
        grad_evals += 1
        v2 = v1 / beta - half * g1
        lp1 = float(target.log_density(x1))
        if not (_finite(x1, v2, g1) and np.isfinite(lp1)):
            failed = True
            break
        lw = _joint_logw(lp1, v2, dim, -step, log_beta)
        if lw <= log_max - log_w_threshold:
            break
        bwd_x.append(x1)
        bwd_v.append(v2)
        bwd_w.append(lw)
        log_max = max(log_max, lw)
        x, v, g = x1, v2, g1
        if step == max_steps:
            truncated = True

    n_bwd = len(bwd_x)
    xs = np.array(bwd_x[::-1] + [x0] + fwd_x)
    vs = np.array(bwd_v[::-1] + [v0] + fwd_v)
    logws = np.array(bwd_w[::-1] + [lw0] + fwd_w)
    return xs, vs, logws, n_bwd, truncated, failed, grad_evals
