"""Acceptance gate: one test per criterion, printed pass/fail lines.

Each criterion runs at its stated tolerance (and runtime budget where one
is declared).  Heavier end-to-end criteria drive the same chain runner the
CLI uses, on the compiled backend when available.
"""

import time

import numpy as np
import pytest
from scipy.stats import kstest, norm

from orbitmc import backend, cli, dynamics, kernels, oracle, targets
from orbitmc.adaptation import adapt_chees_hmc
from orbitmc.cli import run_sampling_chain, snis_experiment
from orbitmc.diagnostics import ess, subsample
from orbitmc.dynamics import joint_log_density, phase

from helpers import validate_gradients


def report(num, name, passed, detail, elapsed=None):
    status = "PASS" if passed else "FAIL"
    extra = f" ({elapsed:.1f}s)" if elapsed is not None else ""
    print(f"[ACCEPTANCE {num:>2}] {status} {name}: {detail}{extra}")
    assert passed, f"criterion {num} ({name}): {detail}"


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def test_criterion_01_invariance():
    rep, dt = timed(lambda: oracle.suite_invariance(seed=0))
    worst = max(c["value"] for c in rep["checks"] if c["name"].endswith("invariance"))
    report(1, "invariance residuals", rep["passed"] and dt < 10.0,
           f"max residual {worst:.2e} <= 1e-12 over randomized orbits", dt)


def test_criterion_02_mhg_reduction():
    def run():
        rng = np.random.default_rng(42)
        t2 = targets.make_banana()
        wrapped_c = dynamics.periodic_wrap(dynamics.conformal_leapfrog(t2, 0.2, 0.9), 2)
        t1 = targets.diag_gaussian(np.ones(1), name="g1")
        wrapped_l = dynamics.periodic_wrap(dynamics.leapfrog(t1, 0.3), 2)
        mismatches = 0
        for i in range(5000):
            s = phase(rng.standard_normal(2), rng.standard_normal(2), d=i % 2)
            g = kernels.escaping_test(t2, wrapped_c, s, (0, 1))
            f_s = wrapped_c.forward(s)
            ref = min(1.0, float(np.exp(
                (joint_log_density(t2, f_s) + (f_s.log_jac - s.log_jac))
                - joint_log_density(t2, s))))
            mismatches += int(g != ref)
        for i in range(5000):
            s = phase(rng.standard_normal(1), rng.standard_normal(1), d=i % 2)
            g = kernels.escaping_test(t1, wrapped_l, s, (0, 1))
            f_s = wrapped_l.forward(s)
            ref = min(1.0, float(np.exp(
                (joint_log_density(t1, f_s) + (f_s.log_jac - s.log_jac))
                - joint_log_density(t1, s))))
            mismatches += int(g != ref)
        return mismatches

    mismatches, dt = timed(run)
    report(2, "MHG reduction at T=2", mismatches == 0,
           f"{10_000 - mismatches}/10000 inputs bit-identical to min{{1, ratio}}", dt)


def test_criterion_03_reversibility_dichotomy():
    rep, dt = timed(lambda: oracle.suite_reversibility(seed=0))
    report(3, "reversibility dichotomy", rep["passed"] and dt < 5.0,
           "involutive/diffusing/symmetric-lincomb at 1e-14; 3-cycle > 1e-3", dt)


def test_criterion_04_theorem2_convergence():
    rep, dt = timed(lambda: oracle.suite_convergence(seed=0))
    names = {c["name"]: c for c in rep["checks"]}
    ok = (
        names["escaping_123_t1e5"]["passed"]
        and names["aperiodic_halfg_sums"]["passed"]
        and names["aperiodic_halfg_avg0"]["passed"]
        and names["aperiodic_random_sums"]["passed"]
        and dt < 30.0
    )
    report(4, "single-orbit convergence", ok,
           f"periodic weights and 1/g sums within 1e-3 at t=1e5", dt)


def test_criterion_05_theorem3_convergence():
    def run():
        lattice = np.arange(-20, 21, dtype=float)
        dens = np.exp(-0.5 * lattice**2)
        orbit = oracle.DiscreteOrbit(densities=dens, periodic=False)
        K = oracle.build_kernel_matrix(orbit, "diffusing")
        avg = oracle.time_average_weights(K, 10**5, start=20)
        return float(np.max(np.abs(avg - dens / dens.sum())))

    err, dt = timed(run)
    report(5, "diffusing-kernel convergence", err < 1e-3,
           f"41-point lattice time average off by {err:.2e} < 1e-3 at t=1e5", dt)


def test_criterion_06_escape_time():
    rep, dt = timed(lambda: oracle.suite_escape_time(seed=0))
    report(6, "escape-time formula", rep["passed"],
           "three g-profiles within 3 standard errors of sum(1/g), incl. E t3 = 6", dt)


def test_criterion_07_deterministic_snis():
    def run():
        wins = 0
        for rep in range(20):
            rows = snis_experiment([10_000], runs=200, seed=1000 + rep)
            wins += int(rows[0]["det_mse"] <= rows[0]["stoch_mse"])
        return wins

    wins, dt = timed(run)
    report(7, "deterministic SNIS", wins >= 18 and dt < 120.0,
           f"deterministic MSE <= stochastic in {wins}/20 meta-replications at n=1e4", dt)


def _run_banana_chains(kernel_cfg: dict, eps: float, t_max: float, seed: int,
                       budget: int, chains: int = 10):
    records = []
    for i in range(chains):
        task = {
            "target": "banana",
            "target_params": {},
            "kernel": dict(kernel_cfg, eps=eps),
            "t_max": t_max,
            "chain_index": i,
            "master_seed": seed,
            "x0": np.array([0.0, -2.7]),
            "budget": budget,
            "sample_iters": 0,
            "backend_mode": backend.backend_name(),
        }
        records.append(run_sampling_chain(task))
    return records


def _chain_mean_and_se(record, component=0):
    tr = record["trail"]
    mean_est = tr["cum_wx"][-1] / tr["cum_w"][-1]
    var_est = tr["cum_wx2"][-1] / tr["cum_w"][-1] - mean_est**2
    a = record["sample_arrays"]
    m = min(1000, a["X"].shape[0])
    Xsub, _, _, _ = cli._compress_arrays(
        a["X"], a["w"], a["iterations"], a["grad_evals"], m
    )
    n_eff = max(ess(Xsub[:, component]), 2.0)
    se = np.sqrt(max(var_est[component], 1e-12) / n_eff)
    return mean_est[component], se, n_eff, Xsub[:, component]


def test_criterion_08_end_to_end_banana():
    def run():
        t = targets.make_banana()
        rng = np.random.default_rng(7)
        adapt = adapt_chees_hmc(t, n_chains=10, n_iters=300, rng=rng, eps0=0.1)
        eps = adapt.eps
        results = {}
        for name, kcfg in (
            ("orbital", {"kind": "orbital_periodic", "T": 20, "direction_shift": True}),
            ("contracting", {"kind": "orbital_contracting", "W": 1e3,
                             "beta": 0.8 ** 0.5, "max_orbit_steps": 10_000}),
        ):
            records = _run_banana_chains(kcfg, eps, adapt.t_max, seed=90, budget=100_000)
            means, ses, pools = [], [], []
            for r in records:
                mu, se, n_eff, sub = _chain_mean_and_se(r, component=0)
                means.append(mu)
                ses.append(se)
                stride = max(1, int(np.ceil(len(sub) / n_eff)))
                pools.extend(sub[::stride])
            pooled_mean = float(np.mean(means))
            pooled_se = float(np.sqrt(np.sum(np.square(ses))) / len(means))
            pval = kstest(np.asarray(pools), norm(loc=0.0, scale=np.sqrt(10.0)).cdf).pvalue
            results[name] = (pooled_mean, pooled_se, pval, len(pools))
        return results

    results, dt = timed(run)
    ok = dt < 300.0
    details = []
    for name, (mu, se, pval, n) in results.items():
        good = abs(mu) <= 3 * se and pval > 0.01
        ok = ok and good
        details.append(f"{name}: E[x1]={mu:+.4f} (3se={3*se:.4f}), KS p={pval:.3f} on {n} pts")
    report(8, "end-to-end banana sampling", ok, "; ".join(details), dt)


def _final_mean_error(record, ref_mean):
    tr = record["trail"]
    mean_est = tr["cum_wx"][-1] / tr["cum_w"][-1]
    return float(np.mean(np.abs(mean_est - ref_mean)))


def _ordering_runs(target_name, target_params, kernels_by_name, seeds,
                   budget=100_000, chains=10, adapt_iters=300):
    """Adapt once per seed, then run every (kernel, chain) combination.

    The 'chees' comparator runs as lock-step batched jittered HMC (the
    post-adaptation ChEES-HMC sampler itself); the orbit kernels run
    through the production per-chain driver.  Returns
    {(kernel_name, seed): mean_over_chains(final abs error)}.
    """
    import os
    from concurrent.futures import ProcessPoolExecutor

    from orbitmc.adaptation import run_jittered_hmc_batch

    target = targets.make_target(target_name, **target_params)
    ref = target.reference_mean
    tasks, keys = [], []
    errs = {}
    for seed in seeds:
        rng = np.random.default_rng(seed)
        adapt = adapt_chees_hmc(
            target, n_chains=chains, n_iters=adapt_iters, rng=rng, eps0=0.1
        )
        eps, t_max = adapt.eps, adapt.t_max
        for name, kernel_cfg in kernels_by_name.items():
            if kernel_cfg.get("kind") == "hmc":
                means, _, _, _ = run_jittered_hmc_batch(
                    target, eps, t_max, adapt.positions,
                    np.random.default_rng((seed, 77)), budget,
                )
                errs[(name, seed)] = [
                    float(np.mean(np.abs(means[i] - ref))) for i in range(chains)
                ]
                continue
            kcfg = dict(kernel_cfg)
            if kcfg.get("eps", 0) == 0:
                kcfg["eps"] = eps
            if kcfg.get("kind") == "orbital_periodic" and kcfg.get("T", 0) == 0:
                kcfg["T"] = int(np.clip(round(t_max / eps), 2, 200))
            for i in range(chains):
                tasks.append(
                    {
                        "target": target_name,
                        "target_params": target_params,
                        "kernel": kcfg,
                        "t_max": t_max,
                        "chain_index": i,
                        "master_seed": seed,
                        "x0": adapt.positions[i],
                        "budget": budget,
                        "sample_iters": 0,
                        "backend_mode": backend.backend_name(),
                    }
                )
                keys.append((name, seed))
    workers = min(8, os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_sampling_chain, tasks, chunksize=4))
    else:
        results = [run_sampling_chain(t) for t in tasks]
    for key, rec in zip(keys, results):
        errs.setdefault(key, []).append(_final_mean_error(rec, ref))
    return {key: float(np.mean(v)) for key, v in errs.items()}


def test_criterion_09_desk_scale_ordering():
    def run():
        banana_errs = _ordering_runs(
            "banana",
            {},
            {
                "opt": {"kind": "orbital_contracting", "W": 1e3, "beta": 0.8**0.5,
                        "max_orbit_steps": 10_000},
                "chees": {"kind": "hmc"},
            },
            seeds=range(10),
        )
        opt_wins = sum(
            banana_errs[("opt", s)] <= banana_errs[("chees", s)] for s in range(10)
        )
        gauss_errs = _ordering_runs(
            "ill_gaussian",
            {"dim": 50},
            {
                "orbital": {"kind": "orbital_periodic", "T": 0, "direction_shift": True},
                "opt": {"kind": "orbital_contracting", "W": 1e3,
                        "beta": 0.8 ** (1.0 / 50), "max_orbit_steps": 10_000},
            },
            seeds=range(100, 110),
        )
        orb_wins = sum(
            gauss_errs[("orbital", s)] <= gauss_errs[("opt", s)]
            for s in range(100, 110)
        )
        return opt_wins, orb_wins

    (opt_wins, orb_wins), dt = timed(run)
    ok = opt_wins >= 7 and orb_wins >= 7
    report(9, "desk-scale error ordering", ok,
           f"banana: Opt<=ChEES in {opt_wins}/10 seeds; "
           f"ill-Gaussian: Orbital<=Opt in {orb_wins}/10 seeds", dt)


def test_criterion_10_gradient_checks():
    def run():
        rng = np.random.default_rng(12)
        results = {}
        results["banana"] = validate_gradients(targets.make_banana(), rng, 100)
        results["ill_gaussian"] = validate_gradients(
            targets.make_ill_conditioned_gaussian(50), rng, 100
        )
        logistic = targets.make_logistic_regression(targets.make_synthetic_logistic(0))
        results["logistic"] = validate_gradients(logistic, rng, 100)
        _, irt = targets.generate_item_response(0)
        results["item_response"] = validate_gradients(irt, rng, 100, scale=0.5)
        return results

    results, dt = timed(run)
    ok = all(results.values()) and dt < 10.0
    report(10, "gradient validation", ok,
           f"finite differences at 100 points each: {results}", dt)


def test_criterion_11_determinism(tmp_path):
    def run():
        outputs = []
        for workers in (1, 8):
            cfg = cli.parse_config(
                {
                    "target": "banana",
                    "kernel": "orbital_periodic",
                    "kernel.T": "6",
                    "chains": "8",
                    "adapt_iters": "50",
                    "budget_grad_evals": "4000",
                    "master_seed": "5",
                    "workers": str(workers),
                    "output_dir": str(tmp_path / f"w{workers}"),
                }
            )
            cli.run_experiment(cfg)
            outputs.append((tmp_path / f"w{workers}" / "metrics.csv").read_bytes())
        return outputs[0] == outputs[1]

    same, dt = timed(run)
    report(11, "byte-identical determinism", same,
           "metrics.csv identical under 1 and 8 workers with a fixed seed", dt)
