"""Transition kernels and acceptance tests built on orbits.

The common object is the orbit of an invertible map f through the current
state: points f^i(x) for a contiguous index range containing 0, each carrying
the log of (density times accumulated Jacobian).  Kernels either

- test a move along the orbit against the minimum of those weights
  (:func:`escaping_test`, :func:`m_step_test`, :func:`hmc_step`),
- accept the whole orbit at once with normalized weights
  (:func:`orbital_periodic_step`, :func:`orbital_contracting_step`,
  :func:`linear_combination_step`), or
- random-walk between neighbors with the pair tests g+/g-
  (:func:`diffusing_step`).

Steps are pure functions of (state, rng stream); chains with independent rng
streams can run concurrently.
"""

import warnings
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from . import backend
from .dynamics import (
    ConformalLeapfrogMap,
    DeterministicMap,
    LeapfrogMap,
    PhaseState,
    WeylMap,
    WrappedPeriodicMap,
    joint_log_density,
)
from .errors import DegenerateKernelError, NumericalFailureError

LOG_2PI = float(np.log(2.0 * np.pi))

KERNEL_KINDS = (
    "hmc",
    "recycled_hmc",
    "orbital_periodic",
    "orbital_contracting",
    "linear_combination",
    "diffusing",
)


@dataclass
class EvalCounters:
    """Budget accounting in the package-wide convention.

    One integrator step costs one gradient evaluation (the trailing
    half-kick gradient is reused as the next step's leading one) plus one
    for trajectory initialization; density evaluations count orbit points.
    The same convention is applied to every kernel.
    """

    grad_evals: int = 0
    density_evals: int = 0
    truncated_orbits: int = 0
    failed_steps: int = 0


@dataclass
class WeightedSample:
    """One emitted state with its normalized within-orbit weight."""

    x: np.ndarray
    weight: float
    iteration: int = 0
    gradient_evals_so_far: int = 0


@dataclass
class Orbit:
    """Contiguous orbit slice with joint log-weights.

    ``states[j]`` sits at orbit index ``i_min + j``; ``log_weights[j]`` is
    log(p(f^i(x0)) |df^i/dx|) on the same footing for every point (joint
    phase-space density when states carry momenta).  The weight at the
    origin carries no Jacobian term.
    """

    states: List[PhaseState]
    log_weights: np.ndarray
    i_min: int

    @property
    def origin_index(self) -> int:
        return -self.i_min

    def __len__(self) -> int:
        return len(self.states)

    def normalized_weights(self) -> Optional[np.ndarray]:
        """Weights summing to one, or None if every weight underflowed."""
        m = np.max(self.log_weights)
        if not np.isfinite(m):
            return None
        w = np.exp(self.log_weights - m)
        return w / np.sum(w)


@dataclass
class KernelConfig:
    """Declarative kernel choice for the experiment runner.

    eps = 0, T = 0, beta = 0 mean "fill in from adaptation" (step size,
    trajectory length, and the 0.8^(1/n) contraction default).
    """

    kind: str
    eps: float = 0.0
    T: int = 0
    beta: float = 0.0
    W: float = 1e3
    direction_shift: bool = True
    lincomb_weights: Optional[np.ndarray] = None
    k_range: int = 50
    max_orbit_steps: int = 10_000

    def validate(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.eps < 0:
            raise ValueError("eps must be positive (or 0 to adapt)")
        if self.kind == "orbital_contracting" and self.W <= 1:
            raise ValueError("truncation threshold W must exceed 1")
        if self.kind in ("orbital_periodic", "linear_combination") and self.T == 1:
            raise ValueError("period T must be >= 2")
        return self


def _counters(counters):
    return counters if counters is not None else EvalCounters()


def _trajectory_orbit_arrays(map_, s: PhaseState, i_lo: int, i_hi: int,
                             counters: EvalCounters):
    """Array-form orbit slice for integrator maps (no per-point objects).

    Returns (xs, vs, lws, i_min, complete): positions/momenta rows ordered
    by orbit index, joint log-weights, the first realized index, and
    whether the requested range survived without numerical failure.
    """
    xs, vs, logps, ok_f, ok_b, ge = map_.trajectory(s, i_hi, -i_lo)
    counters.grad_evals += ge
    counters.density_evals += ok_f + ok_b + 1
    n_bwd = -i_lo
    sl = slice(n_bwd - ok_b, n_bwd + ok_f + 1)
    idx = np.arange(-ok_b, ok_f + 1)
    dim = xs.shape[1]
    mom = -0.5 * np.einsum("ij,ij->i", vs[sl], vs[sl]) - 0.5 * dim * LOG_2PI
    lws = logps[sl] + mom + map_.step_log_jac(s) * idx
    complete = ok_f == i_hi and ok_b == -i_lo
    if not complete:
        counters.failed_steps += 1
    return xs[sl], vs[sl], lws, -ok_b, complete


def _pick_index(weights: np.ndarray, rng) -> int:
    """Draw an index proportionally to weights with a single uniform."""
    cum = np.cumsum(weights)
    j = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return min(j, len(weights) - 1)


def build_orbit(
    target,
    map_: DeterministicMap,
    s: PhaseState,
    i_lo: int,
    i_hi: int,
    counters: Optional[EvalCounters] = None,
) -> Tuple[Orbit, bool]:
    """Collect the orbit slice f^i(s) for i in [i_lo, i_hi] (0 inside).

    Integrator maps with a backend descriptor roll out in compiled code;
    everything else iterates forward/inverse generically.  A numerical
    failure truncates the affected direction; the second return value says
    whether the requested range was fully realized.
    """
    if i_lo > 0 or i_hi < 0:
        raise ValueError("orbit range must contain index 0")
    counters = _counters(counters)

    if isinstance(map_, (LeapfrogMap, ConformalLeapfrogMap)):
        xs, vs, lws, i_min, complete = _trajectory_orbit_arrays(
            map_, s, i_lo, i_hi, counters
        )
        step_jac = map_.step_log_jac(s)
        states = [
            PhaseState(x=xs[j], v=vs[j], d=s.d, log_jac=s.log_jac + step_jac * (i_min + j))
            for j in range(xs.shape[0])
        ]
        return Orbit(states=states, log_weights=lws, i_min=i_min), complete

    def _walk(n, step):
        out = []
        t = s
        try:
            for _ in range(n):
                t = step(t)
                out.append(t)
        except NumericalFailureError:
            counters.failed_steps += 1
            return out, False
        return out, True

    fwd, ok_f = _walk(i_hi, map_.forward)
    bwd, ok_b = _walk(-i_lo, map_.inverse)
    states = bwd[::-1] + [s] + fwd
    counters.grad_evals += len(states)  # convention: steps + 1
    counters.density_evals += len(states)
    lws = np.array(
        [joint_log_density(target, t) + (t.log_jac - s.log_jac) for t in states]
    )
    return Orbit(states=states, log_weights=lws, i_min=-len(bwd)), ok_f and ok_b


def escaping_test(target, map_, s: PhaseState, k_range: Tuple[int, int]) -> float:
    """Acceptance test of the escaping orbital kernel.

    g(s) = min over k in k_range of p(f^k(s)) |df^k/dx| / p(s).  The k = 0
    term pins the value at or below 1.  For periodic maps pass
    k_range = (0, T-1), which is exact; finite ranges on aperiodic maps
    upper-bound the true infimum.  Numerical failure rejects (returns 0).
    """
    lo, hi = k_range
    orbit, complete = build_orbit(target, map_, s, lo, hi)
    if not complete:
        return 0.0
    lw0 = orbit.log_weights[orbit.origin_index]
    return float(np.min(np.exp(orbit.log_weights - lw0)))


def m_step_test(target, map_, s: PhaseState, m: int, k_range: Tuple[int, int]) -> float:
    """Test for the f^m proposal: infimum over indices m*k inside k_range."""
    if m == 0:
        return 1.0
    lo, hi = k_range
    orbit, complete = build_orbit(target, map_, s, lo, hi)
    if not complete:
        return 0.0
    idx = np.arange(lo, hi + 1)
    sel = idx % m == 0
    lw0 = orbit.log_weights[orbit.origin_index]
    return float(np.min(np.exp(orbit.log_weights[sel] - lw0)))


_odd_shift_warned = False


def _shift_direction(d: int, T: int, rng) -> int:
    """d + T/2 mod T for even T; uniform resampling (with warning) otherwise."""
    global _odd_shift_warned
    if T % 2 == 0:
        return (d + T // 2) % T
    if not _odd_shift_warned:
        warnings.warn(
            "direction shift by T/2 needs an even period; resampling d uniformly",
            stacklevel=3,
        )
        _odd_shift_warned = True
    return int(rng.integers(T))


def orbital_periodic_step(
    target,
    wrapped_map: WrappedPeriodicMap,
    s: PhaseState,
    rng,
    direction_shift: bool = False,
    counters: Optional[EvalCounters] = None,
):
    """One step of the whole-orbit kernel on a periodic wrapper.

    Resamples the momentum, collects the full T-point orbit of the wrapped
    map through (x, v, d), emits every point with its normalized weight, and
    moves the chain to an orbit point drawn by weight.  Optionally shifts
    the direction by T/2 afterwards to suppress back-and-forth moves.

    Returns (samples, next_state).
    """
    counters = _counters(counters)
    T = wrapped_map.period
    base = wrapped_map.base
    d = s.d if s.d is not None else int(rng.integers(T))
    v = rng.standard_normal(s.x.shape[0])
    state = PhaseState(x=s.x, v=v, d=d)

    if isinstance(base, (LeapfrogMap, ConformalLeapfrogMap)):
        xs, vs, lws, i_min, complete = _trajectory_orbit_arrays(
            base, state, -d, T - 1 - d, counters
        )
    else:
        orbit, complete = build_orbit(target, base, state, -d, T - 1 - d, counters)
        xs = np.stack([t.x for t in orbit.states])
        vs = np.stack([t.v for t in orbit.states]) if orbit.states[0].v.size else None
        lws, i_min = orbit.log_weights, orbit.i_min

    m = np.max(lws) if complete else -np.inf
    if not np.isfinite(m):
        return [WeightedSample(x=state.x, weight=1.0)], state
    weights = np.exp(lws - m)
    weights /= weights.sum()

    samples = [
        WeightedSample(x=np.array(xs[j]), weight=float(weights[j]))
        for j in range(len(weights))
    ]
    j = _pick_index(weights, rng)
    d_next = d + i_min + j
    if direction_shift:
        d_next = _shift_direction(d_next, T, rng)
    v_next = vs[j] if vs is not None else state.v
    return samples, PhaseState(x=xs[j], v=v_next, d=d_next)


def orbital_contracting_step(
    target,
    contracting_map: ConformalLeapfrogMap,
    s: PhaseState,
    W: float,
    rng,
    max_steps: int = 10_000,
    counters: Optional[EvalCounters] = None,
):
    """One step of the threshold-truncated kernel on a contracting map.

    Resamples the momentum and extends the orbit forward then backward
    while each candidate's weight stays above (running max)/W, emitting all
    collected points with normalized weights.  The next position is drawn
    by weight; its momentum is discarded (resampled on the next step).

    Returns (samples, next_state).
    """
    if W <= 1.0:
        raise ValueError("threshold W must exceed 1")
    counters = _counters(counters)
    v = rng.standard_normal(s.x.shape[0])
    xs, vs, lws, n_bwd, truncated, failed, ge = backend.contracting_orbit(
        target,
        s.x,
        v,
        contracting_map.eps,
        contracting_map.beta,
        float(np.log(W)),
        max_steps,
    )
    counters.grad_evals += ge
    counters.density_evals += xs.shape[0]
    counters.truncated_orbits += int(truncated)
    counters.failed_steps += int(failed)

    m = np.max(lws)
    if not np.isfinite(m):
        return [WeightedSample(x=s.x, weight=1.0)], PhaseState(x=s.x, v=v)
    weights = np.exp(lws - m)
    weights /= weights.sum()
    samples = [
        WeightedSample(x=np.array(xs[j]), weight=float(weights[j]))
        for j in range(xs.shape[0])
    ]
    j = _pick_index(weights, rng)
    return samples, PhaseState(x=xs[j], v=vs[j])


def _cyclic_log_weights(orbit: Orbit, T: int) -> np.ndarray:
    """Reindex an orbit built over [-d, T-1-d] by power of the wrapped map."""
    d = orbit.origin_index  # origin sits at list position d
    lw = orbit.log_weights
    # power j corresponds to x-index ((d + j) mod T) - d, i.e. list position (d + j) mod T
    return np.array([lw[(d + j) % T] for j in range(T)])


def diffusing_tests(
    target,
    map_,
    s: PhaseState,
    k_range: Tuple[int, int],
    c_choice: str = "half_inf",
    counters: Optional[EvalCounters] = None,
) -> Tuple[float, float]:
    """Forward/backward move probabilities of the diffusing kernel.

    g+(s) = p(f(s)) |df/dx| c,  g-(s) = p(f^-1(s)) |df^-1/dx| c, with
    c = (1/2) inf_k 1 / (p(f^k) |df^k/dx|)              (c_choice='half_inf')
    c = inf_k 1 / (p(f^(k+1))|...| + p(f^(k-1))|...|)   (c_choice='optimal').
    Both guarantee g+ + g- <= 1.  Periodic wrappers use cyclic neighbor
    indexing, which reduces to the Metropolis-Hastings kernel at T = 2.
    """
    if c_choice not in ("half_inf", "optimal"):
        raise ValueError(f"unknown c_choice {c_choice!r}")

    if isinstance(map_, WrappedPeriodicMap):
        T = map_.period
        d = map_._require_d(s)
        orbit, complete = build_orbit(target, map_.base, s, -d, T - 1 - d, counters)
        if not complete:
            raise NumericalFailureError("diffusing_tests: orbit construction failed")
        lw = _cyclic_log_weights(orbit, T)
        rel = lw - lw[0]
        nxt, prv = rel[1 % T], rel[(T - 1) % T]
        if c_choice == "half_inf":
            log_c = -np.log(2.0) - np.max(rel)
        else:
            pair = np.logaddexp(np.roll(rel, -1), np.roll(rel, 1))
            log_c = -np.max(pair)
    else:
        lo, hi = k_range
        if lo > -1 or hi < 1:
            raise ValueError("k_range must span at least [-1, 1]")
        orbit, complete = build_orbit(target, map_, s, lo, hi, counters)
        if not complete:
            raise NumericalFailureError("diffusing_tests: orbit construction failed")
        rel = orbit.log_weights - orbit.log_weights[orbit.origin_index]
        o = orbit.origin_index
        nxt, prv = rel[o + 1], rel[o - 1]
        if c_choice == "half_inf":
            log_c = -np.log(2.0) - np.max(rel)
        else:
            pair = np.logaddexp(rel[2:], rel[:-2])
            log_c = -np.max(pair)
    g_plus = float(np.exp(nxt + log_c))
    g_minus = float(np.exp(prv + log_c))
    if not np.isfinite(log_c) or (g_plus == 0.0 and g_minus == 0.0):
        raise DegenerateKernelError(
            "orbit weights unbounded (c = 0), the kernel cannot move; "
            "use the escaping kernel on this orbit"
        )
    return g_plus, g_minus


def diffusing_step(
    target,
    map_,
    s: PhaseState,
    rng,
    c_choice: str = "half_inf",
    k_range: Tuple[int, int] = (-50, 50),
    counters: Optional[EvalCounters] = None,
) -> PhaseState:
    """Move to f(s) w.p. g+, to f^-1(s) w.p. g-, stay otherwise."""
    g_plus, g_minus = diffusing_tests(target, map_, s, k_range, c_choice, counters)
    u = rng.random()
    if u < g_plus:
        return map_.forward(s)
    if u < g_plus + g_minus:
        return map_.inverse(s)
    return s


def linear_combination_step(
    target,
    wrapped_map: WrappedPeriodicMap,
    s: PhaseState,
    weights,
    rng,
    counters: Optional[EvalCounters] = None,
):
    """Mixture of m-step escaping kernels sharing one orbit evaluation.

    Evaluates the density over the whole T-point orbit once, forms every
    m-step test g_m from it, simulates the T accept/reject decisions, emits
    the pairs (x_m or x, w_m), and draws the next state by the mixture
    weights.  Requires w >= 0 summing to 1 over m in [0, T-1].

    Returns (samples, next_state).
    """
    counters = _counters(counters)
    T = wrapped_map.period
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (T,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be a length-T simplex vector")
    d = s.d if s.d is not None else int(rng.integers(T))
    v = rng.standard_normal(s.x.shape[0])
    state = PhaseState(x=s.x, v=v, d=d)

    orbit, complete = build_orbit(target, wrapped_map.base, state, -d, T - 1 - d, counters)
    if not complete:
        return [WeightedSample(x=state.x, weight=1.0)], state
    lw = _cyclic_log_weights(orbit, T)
    rel = np.exp(lw - lw[0])

    samples = []
    outcomes = []
    for m in range(T):
        g_m = float(np.min(rel[(m * np.arange(T)) % T]))
        accept = rng.random() < g_m
        if accept:
            pos = (d + m) % T  # list position of power m
            xm = orbit.states[pos]
            outcomes.append(PhaseState(x=xm.x, v=xm.v, d=(d + m) % T))
        else:
            outcomes.append(state)
        samples.append(WeightedSample(x=outcomes[-1].x, weight=float(w[m])))
    j = int(rng.choice(T, p=w))
    return samples, outcomes[j]


def hmc_step(
    target,
    leapfrog_map: LeapfrogMap,
    s: PhaseState,
    L: int,
    rng,
    counters: Optional[EvalCounters] = None,
) -> PhaseState:
    """Baseline HMC: propose the L-step endpoint with a momentum flip.

    The flip makes the proposal involutive, so the acceptance test is the
    plain Metropolis ratio of joint densities (the integrator is
    volume-preserving).
    """
    if L < 1:
        raise ValueError(f"trajectory length L must be >= 1, got {L}")
    counters = _counters(counters)
    v = rng.standard_normal(s.x.shape[0])
    state = PhaseState(x=s.x, v=v, d=s.d)
    xs, vs, lws, _, complete = _trajectory_orbit_arrays(
        leapfrog_map, state, 0, L, counters
    )
    if not complete:
        return state
    if np.log(rng.random()) < lws[-1] - lws[0]:
        return PhaseState(x=xs[-1], v=vs[-1], d=s.d)
    return state


def recycled_hmc_step(
    target,
    leapfrog_map: LeapfrogMap,
    s: PhaseState,
    L: int,
    rng,
    counters: Optional[EvalCounters] = None,
):
    """HMC that collects every trajectory point, not just the endpoint.

    Each intermediate point x_i gets an independent Metropolis decision
    against the start (valid because flip(f^i) is an involution on the
    volume-preserving flow); rejected slots emit the start point.  Emitted
    samples share the step's weight equally (1/L each).  The chain itself
    advances by the standard endpoint decision.

    Returns (samples, next_state).
    """
    if L < 1:
        raise ValueError(f"trajectory length L must be >= 1, got {L}")
    counters = _counters(counters)
    v = rng.standard_normal(s.x.shape[0])
    state = PhaseState(x=s.x, v=v, d=s.d)
    xs, vs, lws, _, complete = _trajectory_orbit_arrays(
        leapfrog_map, state, 0, L, counters
    )
    if not complete:
        return [WeightedSample(x=state.x, weight=1.0)], state
    rel = lws - lws[0]
    accepts = np.log(rng.random(L)) < rel[1:]
    samples = [
        WeightedSample(x=np.array(xs[i]) if accepts[i - 1] else state.x, weight=1.0 / L)
        for i in range(1, L + 1)
    ]
    if np.log(rng.random()) < rel[L]:
        next_state = PhaseState(x=xs[-1], v=vs[-1], d=s.d)
    else:
        next_state = state
    return samples, next_state


def deterministic_snis(target, map_, x0, n: int):
    """Self-normalized importance sampling along a measure-preserving orbit.

    Collects f^i(x0) for i = 0..n-1 and weights each point by
    p(f^i) |df^i/dx| (accumulated log-Jacobians), normalized over the orbit;
    when the map preserves a known q this equals the usual p/q weights.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(map_, WeylMap):
        _, xs, jacs = map_.orbit_array(float(np.atleast_1d(x0)[0]), n - 1)
        lws = np.asarray(target.log_density(xs[:, None]), dtype=np.float64) + jacs
        points = xs[:, None]
    else:
        s = PhaseState(x=np.atleast_1d(np.asarray(x0, dtype=np.float64)), v=np.empty(0))
        orbit, complete = build_orbit(target, map_, s, 0, n - 1)
        if not complete:
            raise NumericalFailureError("deterministic_snis: orbit construction failed")
        lws = orbit.log_weights
        points = np.stack([t.x for t in orbit.states])
    m = np.max(lws)
    w = np.exp(lws - m)
    w /= w.sum()
    return [
        WeightedSample(x=points[i], weight=float(w[i])) for i in range(points.shape[0])
    ]


def stochastic_snis(target, proposal_sampler, proposal_log_density, n: int, rng):
    """Conventional SNIS: n proposal draws, weights p/q normalized."""
    if n < 1:
        raise ValueError("n must be >= 1")
    X = np.asarray(proposal_sampler(rng, n), dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    lws = np.asarray(target.log_density(X), dtype=np.float64) - np.asarray(
        proposal_log_density(X), dtype=np.float64
    )
    m = np.max(lws)
    w = np.exp(lws - m)
    w /= w.sum()
    return [WeightedSample(x=X[i], weight=float(w[i])) for i in range(n)]
