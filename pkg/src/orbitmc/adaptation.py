"""Hyperparameter adaptation: dual-averaging step size, ChEES length tuning.

The protocol mirrors the benchmark setup: an adaptation phase of jittered-HMC
iterations tunes the step size toward a 0.65 acceptance rate by dual
averaging and the maximum trajectory length by stochastic ascent on the
ChEES criterion (expected squared change of the squared centered jump),
aggregated across parallel chains once per iteration.  After the phase ends
the step size freezes at its running average and every kernel runs
time-homogeneously; no samples from the phase are used in estimators.
"""

import warnings
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from .dynamics import leapfrog_batch

# dual-averaging constants (Hoffman-Gelman schedule)
DA_GAMMA = 0.05
DA_T0 = 10.0
DA_KAPPA = 0.75

# Adam constants for the ChEES ascent on log t_max
ADAM_B1 = 0.9
ADAM_B2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class AdaptState:
    """Adaptation bookkeeping; immutable, updates return new states.

    The dual-averaging shrinkage center ``mu`` is the initial log step
    size, so a chain observing exactly the target acceptance keeps its
    initial eps (fixed point).
    """

    log_eps: float
    mu: float
    log_eps_avg: float
    h_avg: float = 0.0
    iteration: int = 0
    target_accept: float = 0.65
    t_max: float = 1.0
    chees_learning_rate: float = 0.025
    t_max_bounds: tuple = (1e-2, 1e3)
    adam_m: float = 0.0
    adam_v: float = 0.0
    chees_steps: int = 0
    chees_enabled: bool = True

    @property
    def eps(self) -> float:
        return float(np.exp(self.log_eps))

    @property
    def eps_averaged(self) -> float:
        return float(np.exp(self.log_eps_avg))


def init_adapt_state(
    eps0: float,
    t_max0: float = 1.0,
    target_accept: float = 0.65,
    chees_learning_rate: float = 0.025,
    t_max_bounds: tuple = (1e-2, 1e3),
    chees_enabled: bool = True,
) -> AdaptState:
    if eps0 <= 0:
        raise ValueError("eps0 must be positive")
    le = float(np.log(eps0))
    return AdaptState(
        log_eps=le,
        mu=le,
        log_eps_avg=le,
        target_accept=target_accept,
        t_max=float(t_max0),
        chees_learning_rate=chees_learning_rate,
        t_max_bounds=t_max_bounds,
        chees_enabled=chees_enabled,
    )


def dual_averaging_update(a: AdaptState, observed_accept: float) -> AdaptState:
    """One dual-averaging step toward the target acceptance rate."""
    alpha = float(np.clip(observed_accept, 0.0, 1.0))
    m = a.iteration + 1
    eta = 1.0 / (m + DA_T0)
    h = (1.0 - eta) * a.h_avg + eta * (a.target_accept - alpha)
    log_eps = a.mu - np.sqrt(m) / DA_GAMMA * h
    w = m ** (-DA_KAPPA)
    log_eps_avg = w * log_eps + (1.0 - w) * a.log_eps_avg
    return replace(
        a, h_avg=h, log_eps=float(log_eps), log_eps_avg=float(log_eps_avg), iteration=m
    )


@dataclass(frozen=True)
class ChEESObservation:
    """Per-chain halting record: start/end states and the jitter fraction."""

    x_start: np.ndarray
    x_end: np.ndarray
    v_end: np.ndarray
    frac: float
    accept_prob: float = 1.0


def chees_update(a: AdaptState, halting_samples: Sequence[ChEESObservation], rng) -> AdaptState:
    """Stochastic ascent of t_max on the ChEES criterion.

    The criterion is the squared change of the squared centered norm
    between trajectory start and end; its per-chain length-derivative is
    estimated from the end velocity and scaled by the chain's jitter
    fraction, weighted by acceptance probability.  Updates go through Adam
    on log t_max, clamped to the configured bounds.  Needs at least two
    chains (the centering is across chains); otherwise returns the state
    unchanged with a warning.
    """
    if not a.chees_enabled:
        return a
    if len(halting_samples) < 2:
        warnings.warn("ChEES needs >= 2 chains; keeping t_max unchanged", stacklevel=2)
        return a
    X0 = np.stack([o.x_start for o in halting_samples])
    X1 = np.stack([o.x_end for o in halting_samples])
    V1 = np.stack([o.v_end for o in halting_samples])
    u = np.array([o.frac for o in halting_samples])
    ap = np.array([o.accept_prob for o in halting_samples])
    c0 = X0.mean(axis=0)
    c1 = X1.mean(axis=0)
    delta = np.sum((X1 - c1) ** 2, axis=1) - np.sum((X0 - c0) ** 2, axis=1)
    dcrit = delta * np.einsum("ij,ij->i", X1 - c1, V1) * u
    denom = ap.sum()
    grad = float((ap * dcrit).sum() / denom) if denom > 0 else 0.0

    t = a.chees_steps + 1
    m = ADAM_B1 * a.adam_m + (1 - ADAM_B1) * grad
    v = ADAM_B2 * a.adam_v + (1 - ADAM_B2) * grad * grad
    m_hat = m / (1 - ADAM_B1**t)
    v_hat = v / (1 - ADAM_B2**t)
    step = a.chees_learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    lo, hi = a.t_max_bounds
    t_max = float(np.clip(a.t_max * np.exp(step), lo, hi))
    return replace(a, t_max=t_max, adam_m=float(m), adam_v=float(v), chees_steps=t)


@dataclass
class AdaptationResult:
    """Outcome of the adaptation phase."""

    eps: float
    t_max: float
    positions: np.ndarray  # (chains, dim) post-adaptation states
    grad_evals_per_chain: int
    accept_trace: np.ndarray
    eps_trace: np.ndarray
    t_max_trace: np.ndarray


def run_jittered_hmc_batch(
    target,
    eps: float,
    t_max: float,
    positions: np.ndarray,
    rng,
    budget_grad_evals: int,
    max_steps_per_iter: int = 1000,
):
    """Frozen-hyperparameter jittered HMC, lock-step across chains.

    The post-adaptation ChEES-HMC sampler: per iteration one shared
    Uniform(0, t_max) trajectory length, batched leapfrog, per-chain
    Metropolis decisions; every kept state counts with weight one.  Runs
    until each chain's gradient-eval counter passes the budget.  Returns
    (per-chain running mean, per-chain running variance, grad evals per
    chain, iterations).
    """
    X = np.array(positions, dtype=np.float64, copy=True)
    n_chains, dim = X.shape
    s1 = np.zeros_like(X)
    s2 = np.zeros_like(X)
    grads = 0
    iters = 0
    while grads < budget_grad_evals:
        u = rng.uniform()
        L = int(np.clip(np.ceil(u * t_max / eps), 1, max_steps_per_iter))
        V = rng.standard_normal(X.shape)
        lp0 = target.logp_batch(X)
        e0 = lp0 - 0.5 * np.einsum("ij,ij->i", V, V)
        X1, V1, ge = leapfrog_batch(target, eps, X, V, L)
        lp1 = target.logp_batch(X1)
        e1 = lp1 - 0.5 * np.einsum("ij,ij->i", V1, V1)
        log_alpha = np.where(np.isfinite(e1), np.minimum(0.0, e1 - e0), -np.inf)
        accept = np.log(rng.random(n_chains)) < log_alpha
        X = np.where(accept[:, None], X1, X)
        grads += ge
        iters += 1
        s1 += X
        s2 += X * X
    mean = s1 / iters
    var = s2 / iters - mean**2
    return mean, var, grads, iters


def adapt_chees_hmc(
    target,
    n_chains: int,
    n_iters: int,
    rng,
    eps0: float = 0.1,
    t_max0: float = 1.0,
    target_accept: float = 0.65,
    jitter: bool = True,
    adapt_t_max: bool = True,
    max_steps_per_iter: int = 1000,
    init_positions: Optional[np.ndarray] = None,
    chees_learning_rate: float = 0.025,
) -> AdaptationResult:
    """Run the jittered-HMC adaptation phase across parallel chains.

    All chains share the per-iteration jittered trajectory length
    (one Uniform(0, t_max) draw per iteration), so the gradient work is a
    single batched rollout per iteration; statistics synchronize at the
    end of each iteration.  Returns the frozen averaged step size, the
    adapted t_max, and the final chain positions.
    """
    dim = target.dim
    X = (
        np.array(init_positions, dtype=np.float64, copy=True)
        if init_positions is not None
        else 0.1 * rng.standard_normal((n_chains, dim))
    )
    if X.shape != (n_chains, dim):
        raise ValueError("init_positions must have shape (chains, dim)")
    a = init_adapt_state(
        eps0,
        t_max0=t_max0,
        target_accept=target_accept,
        chees_enabled=adapt_t_max,
        chees_learning_rate=chees_learning_rate,
    )
    grad_evals = 0
    acc_trace = np.zeros(n_iters)
    eps_trace = np.zeros(n_iters)
    t_trace = np.zeros(n_iters)

    for it in range(n_iters):
        eps = a.eps
        u = float(rng.uniform()) if jitter else 1.0
        L = int(np.clip(np.ceil(u * a.t_max / eps), 1, max_steps_per_iter))
        V = rng.standard_normal((n_chains, dim))
        lp0 = target.logp_batch(X)
        e0 = lp0 - 0.5 * np.einsum("ij,ij->i", V, V)
        X1, V1, ge = leapfrog_batch(target, eps, X, V, L)
        grad_evals += ge
        lp1 = target.logp_batch(X1)
        e1 = lp1 - 0.5 * np.einsum("ij,ij->i", V1, V1)
        log_alpha = np.where(np.isfinite(e1), np.minimum(0.0, e1 - e0), -np.inf)
        alpha = np.exp(log_alpha)
        accept = np.log(rng.random(n_chains)) < log_alpha
        obs = [
            ChEESObservation(
                x_start=X[i], x_end=X1[i], v_end=V1[i], frac=u, accept_prob=alpha[i]
            )
            for i in range(n_chains)
        ]
        X = np.where(accept[:, None], X1, X)
        a = dual_averaging_update(a, float(alpha.mean()))
        a = chees_update(a, obs, rng)
        acc_trace[it] = alpha.mean()
        eps_trace[it] = a.eps
        t_trace[it] = a.t_max

    return AdaptationResult(
        eps=a.eps_averaged if n_iters > 0 else a.eps,
        t_max=a.t_max,
        positions=X,
        grad_evals_per_chain=grad_evals,
        accept_trace=acc_trace,
        eps_trace=eps_trace,
        t_max_trace=t_trace,
    )
