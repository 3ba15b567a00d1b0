#!/usr/bin/env python3
"""Generate committed reference-moment fixtures for the two posteriors
without analytic moments (synthetic logistic, item-response).

Protocol: dual-averaging/ChEES adaptation, then a long pooled run of
jittered HMC chains (compiled rollouts, parallel workers); pooled posterior
mean and variance over the post-warmup draws are written to
src/orbitmc/fixtures/ with provenance metadata.  These references feed
error curves only; acceptance criteria never depend on them.

    python scripts/gen_reference_fixtures.py [--quick] [--workers N]
"""

import argparse
import json
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from orbitmc import backend, targets
from orbitmc.adaptation import adapt_chees_hmc
from orbitmc.cli import run_sampling_chain

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "src" / "orbitmc" / "fixtures"


def pooled_moments(target_name, target_params, seed, n_chains, adapt_iters,
                   sample_iters, warmup_iters, workers):
    target = targets.make_target(target_name, **target_params)
    rng = np.random.default_rng(seed)
    adapt = adapt_chees_hmc(
        target, n_chains=n_chains, n_iters=adapt_iters, rng=rng, eps0=0.05
    )
    tasks = [
        {
            "target": target_name,
            "target_params": target_params,
            "kernel": {"kind": "hmc", "eps": adapt.eps},
            "t_max": adapt.t_max,
            "chain_index": i,
            "master_seed": seed,
            "x0": adapt.positions[i],
            "budget": None,
            "sample_iters": sample_iters,
            "backend_mode": backend.backend_name(),
        }
        for i in range(n_chains)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_sampling_chain, tasks))
    else:
        results = [run_sampling_chain(t) for t in tasks]

    s1 = np.zeros(target.dim)
    s2 = np.zeros(target.dim)
    count = 0.0
    steps = 0
    for r in results:
        tr = r["trail"]
        w = tr["cum_w"][-1] - tr["cum_w"][warmup_iters - 1]
        s1 += tr["cum_wx"][-1] - tr["cum_wx"][warmup_iters - 1]
        s2 += tr["cum_wx2"][-1] - tr["cum_wx2"][warmup_iters - 1]
        count += w
        steps += r["counters"].grad_evals
    mean = s1 / count
    var = s2 / count - mean**2
    meta = {
        "protocol": "jittered HMC, dual-averaging step size, ChEES t_max",
        "eps": adapt.eps,
        "t_max": adapt.t_max,
        "chains": n_chains,
        "adapt_iters": adapt_iters,
        "sample_iters": sample_iters,
        "warmup_iters": warmup_iters,
        "gradient_evals": steps,
        "pooled_draws": count,
        "seed": seed,
        "backend": backend.backend_name(),
        "target": {"name": target_name, **target_params},
    }
    return mean, var, meta


def write_fixture(name, mean, var, meta):
    FIXTURE_DIR.mkdir(parents=True, exist_ok=True)
    path = FIXTURE_DIR / f"{name}.json"
    path.write_text(
        json.dumps(
            {"mean": mean.tolist(), "variance": var.tolist(), "meta": meta},
            indent=2,
        )
        + "\n"
    )
    print(f"wrote {path}: {meta['pooled_draws']:.0f} pooled draws, "
          f"{meta['gradient_evals']} gradient evals")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true", help="tiny run for smoke testing")
    ap.add_argument("--workers", type=int, default=8)
    args = ap.parse_args()
    scale = 0.01 if args.quick else 1.0

    t0 = time.time()
    mean, var, meta = pooled_moments(
        "logistic",
        {"data_seed": 0},
        seed=101,
        n_chains=10,
        adapt_iters=max(int(600 * scale), 5),
        sample_iters=max(int(100_000 * scale), 20),
        warmup_iters=max(int(10_000 * scale), 2),
        workers=args.workers,
    )
    write_fixture("logistic_synthetic_seed0", mean, var, meta)
    print(f"logistic done at {time.time() - t0:.0f}s")

    mean, var, meta = pooled_moments(
        "item_response",
        {"data_seed": 0},
        seed=202,
        n_chains=10,
        adapt_iters=max(int(300 * scale), 5),
        sample_iters=max(int(2_500 * scale), 20),
        warmup_iters=max(int(400 * scale), 2),
        workers=args.workers,
    )
    write_fixture("item_response_seed0", mean, var, meta)
    print(f"total {time.time() - t0:.0f}s")


if __name__ == "__main__":
    main()
