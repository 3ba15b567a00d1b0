"""Shared test oracles: finite differences and small statistical utilities.

These stay independent of the library code paths they check; gradients are
validated against central differences of the log-density alone.
"""

import numpy as np


def fd_gradient(f, x, rel_step=1e-6):
    """Central-difference gradient with per-coordinate step rel_step*(1+|x_i|)."""
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        h = rel_step * (1.0 + abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def fd_directional(f, x, direction, rel_step=1e-6):
    """Central-difference directional derivative along a unit vector."""
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(direction, dtype=np.float64)
    u = u / np.linalg.norm(u)
    h = rel_step * (1.0 + np.max(np.abs(x)))
    return (f(x + h * u) - f(x - h * u)) / (2.0 * h), u


def grad_matches_fd(target, x, tol=1e-5):
    """Full per-coordinate finite-difference check at one point."""
    g = np.asarray(target.grad_log_density(x), dtype=np.float64)
    fd = fd_gradient(target.log_density, x)
    scale = max(1.0, float(np.max(np.abs(g))))
    return float(np.max(np.abs(fd - g))) <= tol * scale


def grad_matches_fd_directional(target, x, rng, tol=1e-5):
    """Directional finite-difference check (for very high-dim targets)."""
    g = np.asarray(target.grad_log_density(x), dtype=np.float64)
    deriv, u = fd_directional(target.log_density, x, rng.standard_normal(x.size))
    proj = float(u @ g)
    scale = max(1.0, abs(proj))
    return abs(deriv - proj) <= tol * scale


def validate_gradients(target, rng, n_points=100, scale=1.0, tol=1e-5,
                       full_threshold=100):
    """Gradient validation at n_points random points.

    Per-coordinate central differences for dims up to full_threshold;
    directional derivatives (plus a few full checks) above that, keeping the
    cost bounded for the 501-dim posterior.
    """
    dim = target.dim
    n_full = n_points if dim <= full_threshold else 3
    for _ in range(n_full):
        x = scale * rng.standard_normal(dim)
        if not grad_matches_fd(target, x, tol=tol):
            return False
    for _ in range(n_points - n_full):
        x = scale * rng.standard_normal(dim)
        if not grad_matches_fd_directional(target, x, rng, tol=tol):
            return False
    return True
