"""Weighted estimators, effective sample size, and error-vs-budget curves."""

import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .kernels import WeightedSample


@dataclass
class ChainRecord:
    """One chain's emitted samples plus budget accounting."""

    samples: List[WeightedSample]
    gradient_evals: int
    density_evals: int
    kernel_kind: str
    seed: int
    truncated_orbits: int = 0
    failed_steps: int = 0
    extra: dict = field(default_factory=dict)


def _stack(samples: Sequence[WeightedSample]):
    X = np.stack([np.atleast_1d(s.x) for s in samples])
    w = np.array([s.weight for s in samples], dtype=np.float64)
    return X, w


def weighted_mean(samples: Sequence[WeightedSample]) -> np.ndarray:
    """Self-normalized weighted mean over emitted samples."""
    X, w = _stack(samples)
    if np.any(w < 0) or w.sum() == 0.0:
        raise ValueError("weights must be non-negative and not all zero")
    return (w[:, None] * X).sum(axis=0) / w.sum()


def weighted_variance(samples: Sequence[WeightedSample]) -> np.ndarray:
    """Weighted second central moment (population convention)."""
    X, w = _stack(samples)
    if np.any(w < 0) or w.sum() == 0.0:
        raise ValueError("weights must be non-negative and not all zero")
    w = w / w.sum()
    mu = (w[:, None] * X).sum(axis=0)
    return (w[:, None] * (X - mu) ** 2).sum(axis=0)


def ess(chain) -> float:
    """Minimum effective sample size across dimensions.

    Equal-weight chain of shape (n,) or (n, dim).  Uses the
    autocorrelation-sum estimator with Geyer's initial positive (and
    monotone) sequence truncation.  Constant dimensions yield ESS = 1 with
    a warning; strong negative correlation can push ESS above n.
    """
    x = np.asarray(chain, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 10:
        raise ValueError("need at least 10 samples for an ESS estimate")
    out = np.inf
    for dim in range(x.shape[1]):
        col = x[:, dim]
        var = np.var(col)
        if var == 0.0:
            warnings.warn("constant chain: ESS defined as 1", stacklevel=2)
            return 1.0
        acf = _autocorr(col)
        # pairwise Geyer sums Gamma_k = rho_{2k} + rho_{2k+1}
        m = (len(acf) - 1) // 2
        gammas = acf[0 : 2 * m : 2] + acf[1 : 2 * m : 2]
        tau = -acf[0]
        prev = np.inf
        for gam in gammas:
            if gam <= 0.0:
                break
            gam = min(gam, prev)  # enforce monotone decrease
            prev = gam
            tau += 2.0 * gam
        tau = max(tau, 1e-10)
        out = min(out, n / tau)
    return float(out)


def _autocorr(col: np.ndarray) -> np.ndarray:
    n = col.size
    centered = col - col.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(centered, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n].real
    return acov / acov[0]


def subsample(samples: Sequence[WeightedSample], m: int) -> List[WeightedSample]:
    """Order-preserving systematic resample to m equal-weight points.

    Points are drawn proportionally to weight at the deterministic grid
    (j + 1/2)/m in cumulative-weight space, so the result is reproducible
    and keeps the chain order.  Weighted chains may be resampled beyond
    their length (with replacement); equal-weight chains only thin, so
    m must not exceed the length there.
    """
    if m < 1:
        raise ValueError(f"need m >= 1, got {m}")
    _, wts = _stack(samples)
    if m > len(samples) and np.all(wts == wts[0]):
        raise ValueError(
            f"cannot thin an equal-weight chain of {len(samples)} to {m} points"
        )
    _, w = _stack(samples)
    cum = np.cumsum(w / w.sum())
    cum[-1] = 1.0
    grid = (np.arange(m) + 0.5) / m
    idx = np.searchsorted(cum, grid, side="left")
    return [
        WeightedSample(
            x=samples[i].x,
            weight=1.0 / m,
            iteration=samples[i].iteration,
            gradient_evals_so_far=samples[i].gradient_evals_so_far,
        )
        for i in idx
    ]


@dataclass
class ErrorCurve:
    """Absolute-error-vs-budget aggregate across chains."""

    budgets: np.ndarray
    # per statistic: (mean across chains, 0.25 quantile, 0.75 quantile)
    stats: Dict[str, tuple]


def _running_errors(samples, reference_mean, reference_variance):
    X, w = _stack(samples)
    budgets = np.array([s.gradient_evals_so_far for s in samples], dtype=np.int64)
    cw = np.cumsum(w)
    cwx = np.cumsum(w[:, None] * X, axis=0)
    cwx2 = np.cumsum(w[:, None] * X**2, axis=0)
    return _errors_from_cums(budgets, cw, cwx, cwx2, reference_mean, reference_variance)


def _errors_from_cums(budgets, cw, cwx, cwx2, reference_mean, reference_variance):
    mean_est = cwx / cw[:, None]
    err_mean = np.mean(np.abs(mean_est - reference_mean[None, :]), axis=1)
    out = {"mean": (budgets, err_mean)}
    if reference_variance is not None:
        var_est = cwx2 / cw[:, None] - mean_est**2
        err_var = np.mean(np.abs(var_est - reference_variance[None, :]), axis=1)
        out["variance"] = (budgets, err_var)
    return out


def _chain_errors(chain: ChainRecord, reference_mean, reference_variance):
    trail = chain.extra.get("trail") if isinstance(chain.extra, dict) else None
    if trail is not None and trail["budgets"].size:
        return _errors_from_cums(
            trail["budgets"],
            trail["cum_w"],
            trail["cum_wx"],
            trail["cum_wx2"],
            reference_mean,
            reference_variance,
        )
    return _running_errors(chain.samples, reference_mean, reference_variance)


def error_curve(
    chains: Sequence[ChainRecord],
    reference_mean: np.ndarray,
    reference_variance: Optional[np.ndarray] = None,
    n_grid: int = 50,
) -> ErrorCurve:
    """Running weighted-estimate error against the gradient-eval budget.

    Per chain, the running weighted mean (and variance, when a reference is
    given) is evaluated after every emitted sample and its absolute error
    averaged across dimensions; curves are sampled on a shared log-spaced
    budget grid and aggregated into the across-chain mean and the
    0.25/0.75 quantile band.  Chains carrying an exact running-moment
    trail (from the experiment runner) use it directly.
    """
    reference_mean = np.atleast_1d(np.asarray(reference_mean, dtype=np.float64))
    if reference_variance is not None:
        reference_variance = np.atleast_1d(
            np.asarray(reference_variance, dtype=np.float64)
        )
    per_chain = [
        _chain_errors(c, reference_mean, reference_variance)
        for c in chains
        if c.samples or (isinstance(c.extra, dict) and "trail" in c.extra)
    ]
    if not per_chain:
        raise ValueError("no chains with samples")
    lo = max(pc["mean"][0][0] for pc in per_chain)
    hi = min(pc["mean"][0][-1] for pc in per_chain)
    lo = max(lo, 1)
    if hi <= lo:
        grid = np.array([hi], dtype=np.int64)
    else:
        grid = np.unique(
            np.round(np.geomspace(lo, hi, num=min(n_grid, hi - lo + 1))).astype(np.int64)
        )
    stats = {}
    for stat in per_chain[0].keys():
        rows = []
        for pc in per_chain:
            budgets, errs = pc[stat]
            pos = np.searchsorted(budgets, grid, side="right") - 1
            rows.append(errs[np.clip(pos, 0, len(errs) - 1)])
        rows = np.asarray(rows)
        stats[stat] = (
            rows.mean(axis=0),
            np.quantile(rows, 0.25, axis=0),
            np.quantile(rows, 0.75, axis=0),
        )
    return ErrorCurve(budgets=grid, stats=stats)
