"""Invertible deterministic maps with tracked log-Jacobians.

Provides the map families the samplers are built from:

- :func:`leapfrog`: volume-preserving velocity Verlet (unit Jacobian);
- :func:`conformal_leapfrog`: velocity Verlet with friction ``beta``, which
  contracts phase-space volume by ``beta^(2n)`` per step;
- :func:`periodic_wrap`: direction-extended wrapper making any map's orbits
  exactly periodic with period ``T``;
- :func:`exact_rotation`: analytically integrated harmonic flow (periodic
  for ``tau = 2*pi/T``);
- :func:`weyl_map`: 1-D shift in CDF space, measure-preserving with dense
  returning orbits for irrational shifts.

All maps are immutable closures over immutable targets; ``forward`` /
``inverse`` return fresh states, accumulating per-step log-Jacobians into
``PhaseState.log_jac`` with the correct sign.
"""

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import backend
from .errors import NumericalFailureError

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class PhaseState:
    """Position/momentum pair with optional direction index.

    ``log_jac`` accumulates ``log |d f^k / d(x, v)|`` relative to whatever
    state the iteration started from; it is additive under composition.
    ``d`` is present iff the state lives on a periodic wrapper's extended
    space.
    """

    x: np.ndarray
    v: np.ndarray
    d: Optional[int] = None
    log_jac: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", np.array(self.x, dtype=np.float64, copy=True))
        object.__setattr__(self, "v", np.array(self.v, dtype=np.float64, copy=True))
        self.x.setflags(write=False)
        self.v.setflags(write=False)


def phase(x, v=None, d=None) -> PhaseState:
    """Convenience constructor; a missing momentum becomes an empty vector."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if v is None:
        v = np.empty(0)
    return PhaseState(x=x, v=np.atleast_1d(np.asarray(v, dtype=np.float64)), d=d)


def joint_log_density(target, s: PhaseState) -> float:
    """log of p(x) N(v | 0, I); reduces to log p(x) for momentum-free states."""
    lp = float(target.log_density(s.x))
    if s.v.size:
        lp += -0.5 * float(s.v @ s.v) - 0.5 * s.v.size * LOG_2PI
    return lp


def _check_finite(map_name, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NumericalFailureError(f"{map_name}: non-finite state encountered")


class DeterministicMap:
    """Invertible map on phase space with per-step log-Jacobian."""

    dim: Optional[int] = None  # extended-space dimension for Jacobian formulas

    def forward(self, s: PhaseState) -> PhaseState:
        raise NotImplementedError

    def inverse(self, s: PhaseState) -> PhaseState:
        raise NotImplementedError

    def step_log_jac(self, s: PhaseState) -> float:
        """log |d forward / d(x, v)| at s."""
        raise NotImplementedError

    def iterate(self, s: PhaseState, k: int) -> PhaseState:
        return iterate(self, s, k)


def iterate(m: DeterministicMap, s: PhaseState, k: int) -> PhaseState:
    """Apply forward k times (inverse |k| times for negative k)."""
    step = m.forward if k >= 0 else m.inverse
    for _ in range(abs(k)):
        s = step(s)
    return s


class LeapfrogMap(DeterministicMap):
    """One velocity-Verlet step on H(x, v) = -log p(x) + ||v||^2 / 2."""

    def __init__(self, target, eps: float):
        if eps <= 0:
            raise ValueError(f"eps must be positive, got {eps}")
        self.target = target
        self.eps = float(eps)
        self.beta = 1.0
        self.dim = 2 * target.dim

    def forward(self, s: PhaseState) -> PhaseState:
        half = 0.5 * self.eps
        g = self.target.grad_log_density(s.x)
        _check_finite("leapfrog", g)
        v1 = s.v + half * g
        x1 = s.x + self.eps * v1
        g1 = self.target.grad_log_density(x1)
        _check_finite("leapfrog", x1, g1)
        v2 = v1 + half * g1
        return replace(s, x=x1, v=v2)

    def inverse(self, s: PhaseState) -> PhaseState:
        half = 0.5 * self.eps
        g = self.target.grad_log_density(s.x)
        _check_finite("leapfrog", g)
        v1 = s.v - half * g
        x1 = s.x - self.eps * v1
        g1 = self.target.grad_log_density(x1)
        _check_finite("leapfrog", x1, g1)
        v2 = v1 - half * g1
        return replace(s, x=x1, v=v2)

    def step_log_jac(self, s: PhaseState) -> float:
        return 0.0

    def trajectory(self, s: PhaseState, n_fwd: int, n_bwd: int):
        """Backend-accelerated rollout; see :func:`orbitmc.backend.rollout`."""
        return backend.rollout(self.target, s.x, s.v, self.eps, self.beta, n_fwd, n_bwd)


class ConformalLeapfrogMap(DeterministicMap):
    """Velocity Verlet with friction: contracts phase volume by beta^(2n).

    Per step: v' = beta*(v - (eps/2) grad U(x)),
              x' = x + (eps/2)(1/beta + beta) v',
              v'' = beta*(v' - (eps/2) grad U(x')),  U = -log p.
    beta = 1 reproduces the plain leapfrog exactly (the drift coefficient
    collapses to eps).
    """

    def __init__(self, target, eps: float, beta: float):
        if eps <= 0:
            raise ValueError(f"eps must be positive, got {eps}")
        if not 0.0 < beta <= 1.0:
            raise ValueError(f"beta must be in (0, 1], got {beta}")
        self.target = target
        self.eps = float(eps)
        self.beta = float(beta)
        self.dim = 2 * target.dim
        self._drift = 0.5 * self.eps * (self.beta + 1.0 / self.beta)
        self._step_log_jac = 2.0 * target.dim * math.log(self.beta)

    def forward(self, s: PhaseState) -> PhaseState:
        half = 0.5 * self.eps
        g = self.target.grad_log_density(s.x)
        _check_finite("conformal_leapfrog", g)
        v1 = self.beta * (s.v + half * g)
        x1 = s.x + self._drift * v1
        g1 = self.target.grad_log_density(x1)
        _check_finite("conformal_leapfrog", x1, g1)
        v2 = self.beta * (v1 + half * g1)
        return replace(s, x=x1, v=v2, log_jac=s.log_jac + self._step_log_jac)

    def inverse(self, s: PhaseState) -> PhaseState:
        half = 0.5 * self.eps
        g = self.target.grad_log_density(s.x)
        _check_finite("conformal_leapfrog", g)
        v1 = s.v / self.beta - half * g
        x1 = s.x - self._drift * v1
        g1 = self.target.grad_log_density(x1)
        _check_finite("conformal_leapfrog", x1, g1)
        v2 = v1 / self.beta - half * g1
        return replace(s, x=x1, v=v2, log_jac=s.log_jac - self._step_log_jac)

    def step_log_jac(self, s: PhaseState) -> float:
        return self._step_log_jac

    def trajectory(self, s: PhaseState, n_fwd: int, n_bwd: int):
        return backend.rollout(self.target, s.x, s.v, self.eps, self.beta, n_fwd, n_bwd)


class RotationMap(DeterministicMap):
    """Exact flow of H = (x^T x + v^T v)/2 for time tau, componentwise."""

    def __init__(self, tau: float):
        self.tau = float(tau)
        self._c = math.cos(self.tau)
        self._s = math.sin(self.tau)

    def forward(self, s: PhaseState) -> PhaseState:
        x1 = s.x * self._c + s.v * self._s
        v1 = -s.x * self._s + s.v * self._c
        return replace(s, x=x1, v=v1)

    def inverse(self, s: PhaseState) -> PhaseState:
        x1 = s.x * self._c - s.v * self._s
        v1 = s.x * self._s + s.v * self._c
        return replace(s, x=x1, v=v1)

    def step_log_jac(self, s: PhaseState) -> float:
        return 0.0


class WeylMap(DeterministicMap):
    """1-D shift in CDF space: x -> F^{-1}((F(x) + a) mod 1).

    Preserves the density q whose CDF is F; the per-step log-Jacobian is
    log q(x) - log q(f(x)).  Orbits are returning (dense on themselves) for
    irrational a and periodic for rational a.
    """

    def __init__(self, cdf, inv_cdf, a: float, log_pdf=None):
        self.cdf = cdf
        self.inv_cdf = inv_cdf
        self.a = float(a)
        if log_pdf is None:
            h = 1e-6

            def log_pdf(x):
                return np.log((cdf(x + h) - cdf(x - h)) / (2.0 * h))

        self.log_pdf = log_pdf

    def _shift(self, s: PhaseState, a: float) -> PhaseState:
        u = self.cdf(s.x)
        if np.any(u <= 0.0) or np.any(u >= 1.0):
            raise NumericalFailureError("weyl_map: CDF left (0, 1)")
        x1 = np.asarray(self.inv_cdf((u + a) % 1.0), dtype=np.float64)
        _check_finite("weyl_map", x1)
        jac = float(np.squeeze(self.log_pdf(s.x) - self.log_pdf(x1)))
        return replace(s, x=x1, log_jac=s.log_jac + jac)

    def forward(self, s: PhaseState) -> PhaseState:
        return self._shift(s, self.a)

    def inverse(self, s: PhaseState) -> PhaseState:
        return self._shift(s, -self.a)

    def step_log_jac(self, s: PhaseState) -> float:
        x1 = self.inv_cdf((self.cdf(s.x) + self.a) % 1.0)
        return float(np.squeeze(self.log_pdf(s.x) - self.log_pdf(x1)))

    def orbit_array(self, x0: float, n_fwd: int, n_bwd: int = 0):
        """Vectorized orbit x_i = F^{-1}((F(x0) + i*a) mod 1), i in [-n_bwd, n_fwd].

        Exploits that iterating the map is a straight line in CDF space.
        Returns (indices, positions, log_jacs) with log-Jacobians relative
        to index 0.
        """
        idx = np.arange(-n_bwd, n_fwd + 1)
        u0 = float(self.cdf(np.asarray(x0)))
        us = (u0 + self.a * idx) % 1.0
        xs = np.asarray(self.inv_cdf(us), dtype=np.float64)
        lq = np.asarray(self.log_pdf(xs), dtype=np.float64)
        lq0 = float(self.log_pdf(np.asarray(x0)))
        return idx, xs, lq0 - lq


class WrappedPeriodicMap(DeterministicMap):
    """Direction-extended wrapper with exactly periodic orbits.

    States carry d in {0, ..., T-1}.  A forward step advances the base map
    and increments d; from d = T-1 it instead rewinds T-1 base steps and
    resets d to 0, so every orbit closes after exactly T applications.  The
    rewind accumulates the negated log-Jacobians of the base steps it
    undoes, making the total log-Jacobian around a full period zero.
    """

    def __init__(self, base: DeterministicMap, period: int):
        if period < 2:
            raise ValueError(f"period must be >= 2, got {period}")
        self.base = base
        self.period = int(period)
        self.dim = base.dim

    def _require_d(self, s: PhaseState) -> int:
        if s.d is None:
            raise ValueError("state on a periodic wrapper must carry a direction d")
        if not 0 <= s.d < self.period:
            raise ValueError(f"direction {s.d} outside [0, {self.period - 1}]")
        return s.d

    def forward(self, s: PhaseState) -> PhaseState:
        d = self._require_d(s)
        if d < self.period - 1:
            t = self.base.forward(s)
            return replace(t, d=d + 1)
        t = s
        for _ in range(self.period - 1):
            t = self.base.inverse(t)
        return replace(t, d=0)

    def inverse(self, s: PhaseState) -> PhaseState:
        d = self._require_d(s)
        if d > 0:
            t = self.base.inverse(s)
            return replace(t, d=d - 1)
        t = s
        for _ in range(self.period - 1):
            t = self.base.forward(t)
        return replace(t, d=self.period - 1)

    def step_log_jac(self, s: PhaseState) -> float:
        return self.forward(s).log_jac - s.log_jac


def leapfrog(target, eps: float) -> LeapfrogMap:
    """Volume-preserving velocity-Verlet step of size eps."""
    return LeapfrogMap(target, eps)


def conformal_leapfrog(target, eps: float, beta: float) -> ConformalLeapfrogMap:
    """Velocity Verlet with friction beta in (0, 1]; log-Jacobian 2n ln(beta)."""
    return ConformalLeapfrogMap(target, eps, beta)


def periodic_wrap(m: DeterministicMap, period: int) -> WrappedPeriodicMap:
    """Extend a map with a direction variable to force period-T orbits."""
    return WrappedPeriodicMap(m, period)


def exact_rotation(tau: float) -> RotationMap:
    """Exact harmonic rotation by angle tau (period T for tau = 2*pi/T)."""
    return RotationMap(tau)


def weyl_map(cdf, inv_cdf, a: float, log_pdf=None) -> WeylMap:
    """Measure-preserving CDF-space shift by a (irrational for dense orbits)."""
    return WeylMap(cdf, inv_cdf, a, log_pdf=log_pdf)


def leapfrog_batch(target, eps: float, X: np.ndarray, V: np.ndarray, n_steps: int):
    """Lock-step leapfrog for a batch of chains, one gradient call per step.

    X, V: (chains, dim).  Returns (X', V', grad_evals).  Used by the
    adaptation driver, where all chains share the per-iteration trajectory
    length.
    """
    half = 0.5 * eps
    G = target.grad_batch(X)
    V = V + half * G
    grad_evals = 1
    for step in range(n_steps):
        X = X + eps * V
        G = target.grad_batch(X)
        grad_evals += 1
        V = V + (eps if step < n_steps - 1 else half) * G
    return X, V, grad_evals
