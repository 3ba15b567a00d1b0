#!/usr/bin/env python3
"""Benchmark: compiled trajectory core vs the pure-NumPy fallback.

Times the two hot loops (fixed-length rollout, threshold-truncated
contracting orbit) on each built-in benchmark target and reports per-step
costs and speedups.  Run from anywhere:

    python benchmarks/bench_backends.py [--steps 2000] [--repeats 5]
"""

import argparse
import json
import time

import numpy as np

from orbitmc import _purepy, backend, targets


def bench(fn, repeats):
    times = []
    fn()  # warmup
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def build_targets():
    return {
        "banana_2d": targets.make_banana(),
        "ill_gaussian_50d": targets.make_ill_conditioned_gaussian(50),
        "logistic_25d": targets.make_logistic_regression(
            targets.make_synthetic_logistic(0)
        ),
        "item_response_501d": targets.generate_item_response(0)[1],
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--json", action="store_true", help="machine-readable output")
    args = ap.parse_args()

    if not backend.HAVE_COMPILED:
        print("compiled core not built; nothing to compare")
        return

    rng = np.random.default_rng(0)
    rows = []
    for name, t in build_targets().items():
        x0 = 0.3 * rng.standard_normal(t.dim)
        v0 = rng.standard_normal(t.dim)
        beta = 0.8 ** (1.0 / t.dim)
        spec = t.core_spec
        n = args.steps

        def run_core():
            from orbitmc import _core

            _core.rollout(spec.kind, spec.f0, spec.f1, spec.i0, spec.i1, spec.meta,
                          x0, v0, 0.05, 1.0, n, 0)

        def run_purepy():
            _purepy.rollout(t, x0, v0, 0.05, 1.0, n, 0)

        def run_core_contract():
            from orbitmc import _core

            _core.contracting_orbit(spec.kind, spec.f0, spec.f1, spec.i0, spec.i1,
                                    spec.meta, x0, v0, 0.05, beta, np.log(1e3), n)

        def run_purepy_contract():
            _purepy.contracting_orbit(t, x0, v0, 0.05, beta, np.log(1e3), n)

        tc = bench(run_core, args.repeats)
        tp = bench(run_purepy, args.repeats)
        cc = bench(run_core_contract, args.repeats)
        cp = bench(run_purepy_contract, args.repeats)
        rows.append(
            {
                "target": name,
                "rollout_core_us_per_step": 1e6 * tc / n,
                "rollout_purepy_us_per_step": 1e6 * tp / n,
                "rollout_speedup": tp / tc,
                "contracting_core_s": cc,
                "contracting_purepy_s": cp,
                "contracting_speedup": cp / cc,
            }
        )

    if args.json:
        print(json.dumps(rows, indent=2))
        return
    hdr = f"{'target':<22}{'core us/step':>14}{'purepy us/step':>16}{'speedup':>9}"
    print(hdr)
    print("-" * len(hdr))
    for r in rows:
        print(
            f"{r['target']:<22}{r['rollout_core_us_per_step']:>14.3f}"
            f"{r['rollout_purepy_us_per_step']:>16.3f}{r['rollout_speedup']:>8.1f}x"
        )
    print()
    print(f"{'target':<22}{'contract core s':>16}{'contract purepy s':>18}{'speedup':>9}")
    for r in rows:
        print(
            f"{r['target']:<22}{r['contracting_core_s']:>16.4f}"
            f"{r['contracting_purepy_s']:>18.4f}{r['contracting_speedup']:>8.1f}x"
        )


if __name__ == "__main__":
    main()
