"""Experiment runner and command-line interface.

Subcommands:

- ``sample``: the benchmark protocol — one shared adaptation phase
  (jittered HMC with dual-averaging step size and ChEES length tuning),
  then independently seeded chains of the configured kernel run to a
  gradient-evaluation budget.  Emits metrics.csv, error_curve.csv,
  optionally samples.csv, and a run.json echo of everything that would be
  needed to reproduce the run.
- ``verify``: the brute-force orbit-theorem suites plus the deterministic
  SNIS comparison; machine-readable JSON report, nonzero exit on failure.
- ``snis``: deterministic vs stochastic SNIS squared errors over a sample
  budget grid, averaged over independent runs.

Determinism contract: (config, master_seed) fixes every output byte,
independent of the worker count; per-chain rng streams are derived from
the master seed keyed by chain index, and results are assembled in chain
order.
"""

import argparse
import json
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional

import numpy as np
from scipy.special import ndtr, ndtri

from . import __version__, backend, oracle
from .adaptation import adapt_chees_hmc
from .diagnostics import ChainRecord, error_curve, ess, subsample
from .dynamics import conformal_leapfrog, leapfrog, periodic_wrap, phase, weyl_map
from .kernels import (
    EvalCounters,
    KernelConfig,
    WeightedSample,
    diffusing_step,
    hmc_step,
    linear_combination_step,
    orbital_contracting_step,
    orbital_periodic_step,
    recycled_hmc_step,
)
from .targets import TargetModel, make_target

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_EMPTY_RUN = 3

MAX_HMC_STEPS = 1000
SAMPLE_BUFFER_CAP = 40_000


@dataclass
class ExperimentConfig:
    """Flat, fully-validated description of one `sample` run."""

    target: str = "banana"
    target_params: dict = field(default_factory=dict)
    kernel: KernelConfig = field(default_factory=lambda: KernelConfig(kind="hmc"))
    chains: int = 100
    adapt_iters: int = 1000
    sample_iters: int = 1000
    budget_grad_evals: Optional[int] = None
    budget_mode: str = "gross"  # 'gross' counts adaptation, 'net' does not
    master_seed: int = 0
    output_dir: str = "out"
    write_samples: bool = False
    workers: int = 1
    eps0: float = 0.1
    t_max0: float = 1.0
    target_accept: float = 0.65

    def validate(self):
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if self.adapt_iters < 0 or self.sample_iters < 0:
            raise ValueError("iteration counts must be non-negative")
        if self.budget_mode not in ("gross", "net"):
            raise ValueError("budget_mode must be 'gross' or 'net'")
        if self.adapt_iters == 0 and self.kernel.eps <= 0:
            raise ValueError("kernel.eps must be set when adaptation is disabled")
        self.kernel.validate()
        return self


_CONFIG_SCHEMA = {
    "target": str,
    "target.dim": int,
    "target.data_seed": int,
    "target.csv": str,
    "target.has_header": bool,
    "kernel": str,
    "kernel.eps": float,
    "kernel.T": int,
    "kernel.beta": float,
    "kernel.W": float,
    "kernel.direction_shift": bool,
    "kernel.k_range": int,
    "kernel.max_orbit_steps": int,
    "chains": int,
    "adapt_iters": int,
    "sample_iters": int,
    "budget_grad_evals": int,
    "budget_mode": str,
    "master_seed": int,
    "output_dir": str,
    "write_samples": bool,
    "workers": int,
    "eps0": float,
    "t_max0": float,
    "target_accept": float,
}


def _coerce(key: str, raw: str):
    if key not in _CONFIG_SCHEMA:
        raise ValueError(f"unknown config key {key!r}")
    typ = _CONFIG_SCHEMA[key]
    if typ is bool:
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"config key {key!r}: expected a boolean, got {raw!r}")
    try:
        return typ(raw)
    except ValueError:
        raise ValueError(f"config key {key!r}: cannot parse {raw!r} as {typ.__name__}") from None


def parse_config(pairs: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from flat key/value strings."""
    values = {k: _coerce(k, v) for k, v in pairs.items()}
    cfg = ExperimentConfig()
    kernel_kwargs = {"kind": values.pop("kernel", "hmc")}
    for key in list(values):
        if key.startswith("kernel."):
            kernel_kwargs[key.split(".", 1)[1]] = values.pop(key)
    cfg.kernel = KernelConfig(**kernel_kwargs)
    for key in list(values):
        if key.startswith("target."):
            cfg.target_params[key.split(".", 1)[1]] = values.pop(key)
    for key, val in values.items():
        setattr(cfg, key, val)
    return cfg.validate()


def read_config_file(path) -> dict:
    """Flat `key = value` lines; '#' starts a comment."""
    pairs = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, val = line.split("=", 1)
            pairs[key.strip()] = val.strip()
    return pairs


def _resolve_kernel_params(cfg: ExperimentConfig, target: TargetModel, eps: float, t_max: float):
    """Fill adapted defaults into the kernel config (eps, T, beta)."""
    k = cfg.kernel
    resolved = replace(k)
    resolved.eps = k.eps if k.eps > 0 else eps
    if k.kind in ("orbital_periodic", "linear_combination"):
        resolved.T = k.T if k.T > 0 else int(np.clip(round(t_max / resolved.eps), 2, 200))
    if k.kind == "orbital_contracting":
        resolved.beta = k.beta if k.beta > 0 else 0.8 ** (1.0 / target.dim)
    return resolved


def _chain_task(cfg: ExperimentConfig, resolved: KernelConfig, t_max: float,
                chain_index: int, x0: np.ndarray, budget: Optional[int]):
    return {
        "target": cfg.target,
        "target_params": cfg.target_params,
        "kernel": asdict(resolved),
        "t_max": t_max,
        "chain_index": chain_index,
        "master_seed": cfg.master_seed,
        "x0": np.asarray(x0, dtype=np.float64),
        "budget": budget,
        "sample_iters": cfg.sample_iters,
        "backend_mode": backend.backend_name(),
    }


def _compress_arrays(X, w, iters, grads, m):
    """Systematic-resample array buffers down to m rows, conserving mass."""
    cum = np.cumsum(w)
    total = cum[-1]
    grid = (np.arange(m) + 0.5) / m * total
    idx = np.searchsorted(cum, grid, side="left")
    return X[idx], np.full(m, total / m), iters[idx], grads[idx]


def _expand_meta(buf_meta):
    """Flatten per-iteration (iteration, grad_evals, count) stamps to arrays."""
    its, ges = [], []
    for entry in buf_meta:
        if entry[0] == "arrays":
            its.append(entry[1])
            ges.append(entry[2])
        else:
            iteration, grad, n = entry
            its.append(np.full(n, iteration, dtype=np.int64))
            ges.append(np.full(n, grad, dtype=np.int64))
    return np.concatenate(its), np.concatenate(ges)


def run_sampling_chain(task: dict) -> dict:
    """Run one chain to its budget; returns arrays plus running-moment trail.

    Top-level function so process pools can pickle it; the target is
    rebuilt inside the worker from its registry name.
    """
    backend.set_backend(task["backend_mode"])
    target = make_target(task["target"], **task["target_params"])
    kcfg = KernelConfig(**task["kernel"])
    rng = np.random.default_rng(
        np.random.SeedSequence(task["master_seed"], spawn_key=(1, task["chain_index"]))
    )
    eps, t_max = kcfg.eps, task["t_max"]
    dim = target.dim
    counters = EvalCounters()

    if kcfg.kind in ("hmc", "recycled_hmc"):
        import math

        lf = leapfrog(target, eps)
        steps_cap = t_max / eps

        def jitter_len():
            return min(max(1, math.ceil(rng.random() * steps_cap)), MAX_HMC_STEPS)

        if kcfg.kind == "hmc":
            def step(s):
                nxt = hmc_step(target, lf, s, jitter_len(), rng, counters)
                return [WeightedSample(x=nxt.x, weight=1.0)], nxt
        else:
            def step(s):
                return recycled_hmc_step(target, lf, s, jitter_len(), rng, counters)
    elif kcfg.kind == "orbital_periodic":
        wrapped = periodic_wrap(leapfrog(target, eps), kcfg.T)

        def step(s):
            return orbital_periodic_step(
                target, wrapped, s, rng,
                direction_shift=kcfg.direction_shift, counters=counters,
            )
    elif kcfg.kind == "linear_combination":
        wrapped = periodic_wrap(leapfrog(target, eps), kcfg.T)
        w = kcfg.lincomb_weights
        if w is None:
            w = np.zeros(kcfg.T)
            w[1:] = 1.0 / (kcfg.T - 1)

        def step(s):
            return linear_combination_step(target, wrapped, s, w, rng, counters)
    elif kcfg.kind == "orbital_contracting":
        cmap = conformal_leapfrog(target, eps, kcfg.beta)

        def step(s):
            return orbital_contracting_step(
                target, cmap, s, kcfg.W, rng,
                max_steps=kcfg.max_orbit_steps, counters=counters,
            )
    elif kcfg.kind == "diffusing":
        lf = leapfrog(target, eps)
        rng_range = (-kcfg.k_range, kcfg.k_range)

        def step(s):
            nxt = diffusing_step(target, lf, s, rng, "half_inf", rng_range, counters)
            return [WeightedSample(x=nxt.x, weight=1.0)], nxt
    else:
        raise ValueError(f"unhandled kernel kind {kcfg.kind!r}")

    s = phase(task["x0"])
    budget = task["budget"]
    buf_X, buf_w, buf_meta = [], [], []
    buf_count = 0
    trail_budget, trail_w, trail_wx, trail_wx2 = [], [], [], []
    cw = 0.0
    cwx = np.zeros(dim)
    cwx2 = np.zeros(dim)
    iteration = 0
    while True:
        if budget is not None:
            if counters.grad_evals >= budget:
                break
        elif iteration >= task["sample_iters"]:
            break
        emitted, s = step(s)
        iteration += 1
        n_em = len(emitted)
        if n_em == 1:
            x0 = emitted[0].x
            w0 = emitted[0].weight
            Xb = x0[None, :] if x0.ndim == 1 else np.atleast_2d(x0)
            wb = np.array([w0])
            cw += w0
            cwx += w0 * Xb[0]
            cwx2 += w0 * Xb[0] * Xb[0]
        else:
            Xb = np.stack([np.atleast_1d(smp.x) for smp in emitted])
            wb = np.array([smp.weight for smp in emitted])
            cw += wb.sum()
            cwx += wb @ Xb
            cwx2 += wb @ (Xb * Xb)
        buf_X.append(Xb)
        buf_w.append(wb)
        buf_meta.append((iteration, counters.grad_evals, n_em))
        buf_count += n_em
        if buf_count > SAMPLE_BUFFER_CAP:
            X, w, its, ges = _compress_arrays(
                np.vstack(buf_X), np.concatenate(buf_w),
                *_expand_meta(buf_meta), SAMPLE_BUFFER_CAP // 2,
            )
            buf_X, buf_w = [X], [w]
            buf_meta = [("arrays", its, ges)]
            buf_count = X.shape[0]
        trail_budget.append(counters.grad_evals)
        trail_w.append(cw)
        trail_wx.append(cwx.copy())
        trail_wx2.append(cwx2.copy())
        if iteration >= 20 and counters.failed_steps > 0.5 * iteration:
            raise RuntimeError(
                f"chain {task['chain_index']}: {counters.failed_steps} failed steps "
                f"in {iteration} iterations (>50%); eps={eps:.3g} likely unstable"
            )

    if buf_count:
        its, ges = _expand_meta(buf_meta)
        sample_arrays = {
            "X": np.vstack(buf_X),
            "w": np.concatenate(buf_w),
            "iterations": its,
            "grad_evals": ges,
        }
    else:
        sample_arrays = {
            "X": np.zeros((0, dim)),
            "w": np.zeros(0),
            "iterations": np.zeros(0, dtype=np.int64),
            "grad_evals": np.zeros(0, dtype=np.int64),
        }
    return {
        "chain_index": task["chain_index"],
        "sample_arrays": sample_arrays,
        "iterations": iteration,
        "counters": counters,
        "trail": {
            "budgets": np.asarray(trail_budget, dtype=np.int64),
            "cum_w": np.asarray(trail_w),
            "cum_wx": np.asarray(trail_wx) if trail_wx else np.zeros((0, dim)),
            "cum_wx2": np.asarray(trail_wx2) if trail_wx2 else np.zeros((0, dim)),
        },
    }


def samples_from_arrays(arrays) -> List[WeightedSample]:
    """Materialize WeightedSample objects from a chain's array bundle."""
    X, w = arrays["X"], arrays["w"]
    its, ges = arrays["iterations"], arrays["grad_evals"]
    return [
        WeightedSample(
            x=X[i], weight=float(w[i]), iteration=int(its[i]),
            gradient_evals_so_far=int(ges[i]),
        )
        for i in range(X.shape[0])
    ]


def _fixture_reference(target_name: str, params: dict):
    """Committed long-run reference moments for posteriors without analytics."""
    fixture_dir = Path(__file__).parent / "fixtures"
    key = None
    if target_name == "logistic" and not params.get("csv"):
        key = f"logistic_synthetic_seed{int(params.get('data_seed', 0))}"
    elif target_name == "item_response":
        key = f"item_response_seed{int(params.get('data_seed', 0))}"
    if key is None:
        return None
    path = fixture_dir / f"{key}.json"
    if not path.exists():
        return None
    blob = json.loads(path.read_text())
    return np.asarray(blob["mean"]), np.asarray(blob["variance"])


def reference_moments(cfg: ExperimentConfig, target: TargetModel):
    if target.reference_mean is not None:
        return target.reference_mean, target.reference_variance
    fx = _fixture_reference(cfg.target, cfg.target_params)
    if fx is not None:
        return fx
    return None, None


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def _write_csv(path: Path, header: List[str], rows: List[List]):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# schema=1\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Adaptation once, then all chains to the budget; write the outputs.

    Returns a summary dict with output paths and the exit code to use.
    """
    cfg.validate()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    target = make_target(cfg.target, **cfg.target_params)

    adapt_rng = np.random.default_rng(
        np.random.SeedSequence(cfg.master_seed, spawn_key=(0,))
    )
    if cfg.adapt_iters > 0:
        adapt = adapt_chees_hmc(
            target,
            n_chains=cfg.chains,
            n_iters=cfg.adapt_iters,
            rng=adapt_rng,
            eps0=cfg.eps0,
            t_max0=cfg.t_max0,
            target_accept=cfg.target_accept,
        )
        eps, t_max = adapt.eps, adapt.t_max
        positions = adapt.positions
        adapt_cost = adapt.grad_evals_per_chain
    else:
        eps, t_max = cfg.kernel.eps, cfg.t_max0
        positions = 0.1 * adapt_rng.standard_normal((cfg.chains, target.dim))
        adapt_cost = 0

    resolved = _resolve_kernel_params(cfg, target, eps, t_max)
    budget = None
    if cfg.budget_grad_evals is not None:
        budget = int(cfg.budget_grad_evals)
        if cfg.budget_mode == "gross":
            budget -= adapt_cost
    tasks = [
        _chain_task(cfg, resolved, t_max, i, positions[i], max(budget, 0) if budget is not None else None)
        for i in range(cfg.chains)
    ]

    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(run_sampling_chain, tasks))
    else:
        results = [run_sampling_chain(t) for t in tasks]
    results.sort(key=lambda r: r["chain_index"])

    ref_mean, ref_var = reference_moments(cfg, target)
    records = []
    for r in results:
        c = r["counters"]
        records.append(
            ChainRecord(
                samples=[],  # kept as arrays in extra; materialize on demand
                gradient_evals=c.grad_evals,
                density_evals=c.density_evals,
                kernel_kind=resolved.kind,
                seed=cfg.master_seed,
                truncated_orbits=c.truncated_orbits,
                failed_steps=c.failed_steps,
                extra={
                    "trail": r["trail"],
                    "iterations": r["iterations"],
                    "sample_arrays": r["sample_arrays"],
                },
            )
        )

    # ------------------------------------------------------------ metrics
    metric_rows = []
    for i, rec in enumerate(records):
        arrays = rec.extra["sample_arrays"]
        n = arrays["X"].shape[0]
        if n >= 10:
            Xsub, _, _, _ = _compress_arrays(
                arrays["X"], arrays["w"], arrays["iterations"],
                arrays["grad_evals"], min(1000, n),
            )
            min_ess = ess(Xsub)
        else:
            min_ess = float("nan")
        if ref_mean is not None and rec.extra["trail"]["budgets"].size:
            tr = rec.extra["trail"]
            mean_est = tr["cum_wx"][-1] / tr["cum_w"][-1]
            mean_err = float(np.mean(np.abs(mean_est - ref_mean)))
            if ref_var is not None:
                var_est = tr["cum_wx2"][-1] / tr["cum_w"][-1] - mean_est**2
                var_err = float(np.mean(np.abs(var_est - ref_var)))
            else:
                var_err = float("nan")
        else:
            mean_err = var_err = float("nan")
        metric_rows.append(
            [
                i,
                resolved.kind,
                n,
                rec.extra["iterations"],
                min_ess,
                mean_err,
                var_err,
                rec.gradient_evals,
                rec.density_evals,
                rec.truncated_orbits,
                rec.failed_steps,
            ]
        )
    metrics_path = out / "metrics.csv"
    _write_csv(
        metrics_path,
        [
            "chain", "kernel", "n_samples", "iterations", "min_ess",
            "mean_abs_err", "var_abs_err", "grad_evals", "density_evals",
            "truncated_orbits", "failed_steps",
        ],
        metric_rows,
    )

    # -------------------------------------------------------- error curve
    curve_path = None
    chains_with_samples = [r for r in records if r.extra["trail"]["budgets"].size]
    if ref_mean is not None and chains_with_samples:
        curve = error_curve(chains_with_samples, ref_mean, ref_var)
        rows = []
        for stat, (avg, q25, q75) in sorted(curve.stats.items()):
            for b, a_, lo, hi in zip(curve.budgets, avg, q25, q75):
                rows.append([stat, int(b), a_, lo, hi])
        curve_path = out / "error_curve.csv"
        _write_csv(curve_path, ["stat", "budget", "mean_err", "q25", "q75"], rows)

    # ------------------------------------------------------------ samples
    samples_path = None
    if cfg.write_samples:
        rows = []
        for i, rec in enumerate(records):
            a = rec.extra["sample_arrays"]
            for j in range(a["X"].shape[0]):
                rows.append(
                    [i, int(a["iterations"][j]), a["w"][j], int(a["grad_evals"][j])]
                    + [float(v) for v in a["X"][j]]
                )
        samples_path = out / "samples.csv"
        _write_csv(
            samples_path,
            ["chain", "iteration", "weight", "grad_evals"]
            + [f"x{d}" for d in range(target.dim)],
            rows,
        )

    total_samples = sum(r.extra["sample_arrays"]["X"].shape[0] for r in records)
    summary = {
        "config": _config_echo(cfg, resolved),
        "adaptation": {
            "iters": cfg.adapt_iters,
            "eps": eps,
            "t_max": t_max,
            "grad_evals_per_chain": adapt_cost,
        },
        "budget": {
            "requested": cfg.budget_grad_evals,
            "mode": cfg.budget_mode,
            "sampling_per_chain": budget,
            "gross_per_chain": None
            if cfg.budget_grad_evals is None
            else adapt_cost + max(budget, 0),
        },
        "accounting": {
            "gradient_convention": "1 per integrator step (cached half-kicks) + 1 per trajectory init",
            "density_convention": "1 per evaluated orbit point",
        },
        "backend": backend.backend_name(),
        "version": __version__,
        "chain_seeds": [
            f"SeedSequence({cfg.master_seed}, spawn_key=(1, {i}))" for i in range(cfg.chains)
        ],
        "total_samples": total_samples,
        "outputs": {
            "metrics": str(metrics_path),
            "error_curve": str(curve_path) if curve_path else None,
            "samples": str(samples_path) if samples_path else None,
        },
        "exit_code": EXIT_OK if total_samples > 0 else EXIT_EMPTY_RUN,
    }
    (out / "run.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if total_samples == 0:
        warnings.warn("budget below one kernel step: no samples were produced")
    return summary


def _config_echo(cfg: ExperimentConfig, resolved: KernelConfig) -> dict:
    echo = asdict(cfg)
    echo["kernel"] = asdict(cfg.kernel)
    echo["kernel_resolved"] = asdict(resolved)
    for blob in (echo["kernel"], echo["kernel_resolved"]):
        if blob.get("lincomb_weights") is not None:
            blob["lincomb_weights"] = [float(w) for w in blob["lincomb_weights"]]
    return echo


# ---------------------------------------------------------------- SNIS


def mixture_target() -> TargetModel:
    """Two-Gaussian mixture 0.5 N(-2,1) + 0.5 N(2,1) (variance convention)."""

    def log_density(x):
        x = np.asarray(x)[..., 0]
        a = -0.5 * (x - 2.0) ** 2
        b = -0.5 * (x + 2.0) ** 2
        return np.logaddexp(a, b) - 0.5 * np.log(2 * np.pi) - np.log(2.0)

    def grad_log_density(x):
        x1 = np.asarray(x)[..., 0]
        a = -0.5 * (x1 - 2.0) ** 2
        b = -0.5 * (x1 + 2.0) ** 2
        wa = 1.0 / (1.0 + np.exp(b - a))
        g = -(x1 - 2.0) * wa - (x1 + 2.0) * (1 - wa)
        return g[..., None] if np.ndim(x1) else np.array([g])

    return TargetModel(
        name="gauss_mixture",
        dim=1,
        log_density=log_density,
        grad_log_density=grad_log_density,
        reference_mean=np.array([0.0]),
        reference_variance=np.array([5.0]),  # 1 + 2^2
    )


SNIS_PROPOSAL_VAR = 2.0
SNIS_SHIFT = np.sqrt(2.0) % 1.0


def snis_experiment(n_grid, runs: int, seed: int) -> List[dict]:
    """Deterministic vs stochastic SNIS mean-squared errors per budget n.

    Target: the two-Gaussian mixture; proposal N(0, 2).  The deterministic
    route iterates the CDF-shift map from a random start; errors are
    squared deviations of the estimated mean from 0, averaged over runs.
    """
    target = mixture_target()
    sd = np.sqrt(SNIS_PROPOSAL_VAR)
    rng = np.random.default_rng(seed)
    rows = []
    for n in n_grid:
        n = int(n)
        # deterministic: whole orbit in CDF space, vectorized over runs
        u0 = ndtr(rng.normal(0.0, sd, size=runs) / sd)
        us = (u0[:, None] + SNIS_SHIFT * np.arange(n)[None, :]) % 1.0
        xs = sd * ndtri(us)
        lw = target.log_density(xs[..., None]) - (
            -0.5 * np.log(2 * np.pi * SNIS_PROPOSAL_VAR) - 0.5 * xs * xs / SNIS_PROPOSAL_VAR
        )
        lw -= lw.max(axis=1, keepdims=True)
        w = np.exp(lw)
        w /= w.sum(axis=1, keepdims=True)
        det_err = (np.sum(w * xs, axis=1)) ** 2

        draws = rng.normal(0.0, sd, size=(runs, n))
        lw_s = target.log_density(draws[..., None]) - (
            -0.5 * np.log(2 * np.pi * SNIS_PROPOSAL_VAR)
            - 0.5 * draws * draws / SNIS_PROPOSAL_VAR
        )
        lw_s -= lw_s.max(axis=1, keepdims=True)
        ws = np.exp(lw_s)
        ws /= ws.sum(axis=1, keepdims=True)
        stoch_err = (np.sum(ws * draws, axis=1)) ** 2

        rows.append(
            {
                "n": n,
                "det_mse": float(det_err.mean()),
                "stoch_mse": float(stoch_err.mean()),
                "runs": runs,
            }
        )
    return rows


def suite_snis(seed: int = 0) -> dict:
    """Deterministic SNIS beats stochastic SNIS at n = 10^4 (fast check)."""
    rows = snis_experiment([10_000], runs=50, seed=seed)
    checks = [
        {
            "name": "det_mse_le_stoch_mse_n1e4",
            "value": rows[0]["det_mse"],
            "threshold": rows[0]["stoch_mse"],
            "comparison": "le",
            "passed": rows[0]["det_mse"] <= rows[0]["stoch_mse"],
        }
    ]
    return {"suite": "snis", "passed": all(c["passed"] for c in checks), "checks": checks}


VERIFY_SUITES = {
    "invariance": oracle.suite_invariance,
    "reversibility": oracle.suite_reversibility,
    "convergence": oracle.suite_convergence,
    "escape_time": oracle.suite_escape_time,
    "returning": oracle.suite_returning,
    "snis": suite_snis,
}


def verify(suites: List[str], seed: int = 0) -> dict:
    """Run the named verification suites; report + overall pass flag."""
    unknown = [s for s in suites if s not in VERIFY_SUITES]
    if unknown:
        raise ValueError(f"unknown suite(s): {', '.join(unknown)}")
    reports = [VERIFY_SUITES[name](seed) for name in suites]
    return {"passed": all(r["passed"] for r in reports), "suites": reports}


# ----------------------------------------------------------------- main


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="orbitmc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("sample", help="run the benchmark sampling protocol")
    ps.add_argument("--target", help="target name (banana, ill_gaussian, logistic, item_response, std_gaussian)")
    ps.add_argument("--kernel", help="kernel kind"
                    " (hmc, recycled_hmc, orbital_periodic, orbital_contracting, linear_combination, diffusing)")
    ps.add_argument("--chains", type=int)
    ps.add_argument("--seed", type=int, help="master seed")
    ps.add_argument("--budget", type=int, help="gradient-evaluation budget per chain")
    ps.add_argument("--out", help="output directory")
    ps.add_argument("--config", help="flat key=value config file")
    ps.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override any config key")

    pv = sub.add_parser("verify", help="run the orbit-theorem verification suites")
    pv.add_argument("suites", nargs="*", default=[],
                    help=f"suites to run (default: all of {', '.join(VERIFY_SUITES)})")
    pv.add_argument("--seed", type=int, default=0)
    pv.add_argument("--out", help="write the JSON report here (default stdout)")

    pn = sub.add_parser("snis", help="deterministic vs stochastic SNIS errors")
    pn.add_argument("--n-grid", default="10,100,1000,10000",
                    help="comma-separated sample budgets")
    pn.add_argument("--runs", type=int, default=200)
    pn.add_argument("--seed", type=int, default=0)
    pn.add_argument("--out", help="output CSV path (default stdout)")
    return p


def _cmd_sample(args) -> int:
    pairs = {}
    if args.config:
        pairs.update(read_config_file(args.config))
    if args.target:
        pairs["target"] = args.target
    if args.kernel:
        pairs["kernel"] = args.kernel
    if args.chains is not None:
        pairs["chains"] = str(args.chains)
    if args.seed is not None:
        pairs["master_seed"] = str(args.seed)
    if args.budget is not None:
        pairs["budget_grad_evals"] = str(args.budget)
    if args.out:
        pairs["output_dir"] = args.out
    for item in args.set:
        if "=" not in item:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        key, val = item.split("=", 1)
        pairs[key.strip()] = val.strip()
    if "workers" not in pairs and os.environ.get("ORBITMC_WORKERS"):
        pairs["workers"] = os.environ["ORBITMC_WORKERS"]
    cfg = parse_config(pairs)
    summary = run_experiment(cfg)
    print(json.dumps({"outputs": summary["outputs"], "total_samples": summary["total_samples"]}, indent=2))
    return summary["exit_code"]


def _cmd_verify(args) -> int:
    names = args.suites or list(VERIFY_SUITES)
    report = verify(names, seed=args.seed)
    blob = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(blob + "\n")
    else:
        print(blob)
    for suite in report["suites"]:
        status = "PASS" if suite["passed"] else "FAIL"
        print(f"[{status}] {suite['suite']}", file=sys.stderr)
    return EXIT_OK if report["passed"] else EXIT_FAILURE


def _cmd_snis(args) -> int:
    grid = [int(tok) for tok in str(args.n_grid).split(",") if tok.strip()]
    rows = snis_experiment(grid, runs=args.runs, seed=args.seed)
    lines = ["# schema=1", "n,det_mse,stoch_mse,runs"]
    lines += [
        f"{r['n']},{_fmt(r['det_mse'])},{_fmt(r['stoch_mse'])},{r['runs']}" for r in rows
    ]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "sample":
            return _cmd_sample(args)
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "snis":
            return _cmd_snis(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RuntimeError as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())
