"""CLI: config handling, experiment outputs, determinism, verify, snis."""

import json
from pathlib import Path

import numpy as np
import pytest

from orbitmc import cli
from orbitmc.cli import (
    ExperimentConfig,
    main,
    mixture_target,
    parse_config,
    read_config_file,
    run_experiment,
    snis_experiment,
    verify,
)

from helpers import grad_matches_fd


def small_cfg(tmp_path, **overrides) -> ExperimentConfig:
    pairs = {
        "target": "banana",
        "kernel": "orbital_periodic",
        "kernel.T": "4",
        "chains": "2",
        "adapt_iters": "50",
        "budget_grad_evals": "3000",
        "master_seed": "11",
        "output_dir": str(tmp_path / "out"),
    }
    pairs.update({k: str(v) for k, v in overrides.items()})
    return parse_config(pairs)


class TestConfig:
    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown config key"):
            parse_config({"tarGet": "banana"})

    def test_bool_coercion(self):
        cfg = parse_config({"write_samples": "true", "kernel.direction_shift": "off"})
        assert cfg.write_samples is True
        assert cfg.kernel.direction_shift is False
        with pytest.raises(ValueError, match="boolean"):
            parse_config({"write_samples": "sure"})

    def test_kernel_and_target_prefixes(self):
        cfg = parse_config(
            {
                "target": "ill_gaussian",
                "target.dim": "10",
                "kernel": "orbital_contracting",
                "kernel.W": "500",
                "kernel.eps": "0.1",
            }
        )
        assert cfg.target_params == {"dim": 10}
        assert cfg.kernel.kind == "orbital_contracting"
        assert cfg.kernel.W == 500.0

    def test_eps_required_without_adaptation(self):
        with pytest.raises(ValueError, match="kernel.eps"):
            parse_config({"adapt_iters": "0"})

    def test_config_file_roundtrip(self, tmp_path):
        p = tmp_path / "cfg.txt"
        p.write_text("target = banana  # comment\nchains = 3\n\n# full-line comment\nkernel = hmc\n")
        pairs = read_config_file(p)
        assert pairs == {"target": "banana", "chains": "3", "kernel": "hmc"}

    def test_malformed_config_line(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("chains 3\n")
        with pytest.raises(ValueError, match="expected 'key = value'"):
            read_config_file(p)


class TestRunExperiment:
    def test_outputs_written(self, tmp_path):
        cfg = small_cfg(tmp_path, write_samples=True)
        summary = run_experiment(cfg)
        out = Path(cfg.output_dir)
        assert (out / "metrics.csv").exists()
        assert (out / "error_curve.csv").exists()
        assert (out / "samples.csv").exists()
        run = json.loads((out / "run.json").read_text())
        assert run["backend"] in ("core", "purepy")
        assert run["config"]["kernel_resolved"]["T"] == 4
        assert "gradient_convention" in run["accounting"]
        assert summary["exit_code"] == 0

    def test_metrics_schema(self, tmp_path):
        cfg = small_cfg(tmp_path)
        run_experiment(cfg)
        lines = (Path(cfg.output_dir) / "metrics.csv").read_text().splitlines()
        assert lines[0] == "# schema=1"
        header = lines[1].split(",")
        assert header[:3] == ["chain", "kernel", "n_samples"]
        assert len(lines) == 2 + cfg.chains

    def test_error_curve_schema(self, tmp_path):
        cfg = small_cfg(tmp_path)
        run_experiment(cfg)
        lines = (Path(cfg.output_dir) / "error_curve.csv").read_text().splitlines()
        assert lines[1] == "stat,budget,mean_err,q25,q75"
        stats = {ln.split(",")[0] for ln in lines[2:]}
        assert stats == {"mean", "variance"}

    def test_same_seed_byte_identical(self, tmp_path):
        cfg_a = small_cfg(tmp_path / "a")
        cfg_b = small_cfg(tmp_path / "b")
        run_experiment(cfg_a)
        run_experiment(cfg_b)
        a = (Path(cfg_a.output_dir) / "metrics.csv").read_bytes()
        b = (Path(cfg_b.output_dir) / "metrics.csv").read_bytes()
        assert a == b

    def test_worker_count_does_not_change_outputs(self, tmp_path):
        cfg_a = small_cfg(tmp_path / "w1", workers=1)
        cfg_b = small_cfg(tmp_path / "w2", workers=2)
        run_experiment(cfg_a)
        run_experiment(cfg_b)
        for name in ("metrics.csv", "error_curve.csv"):
            a = (Path(cfg_a.output_dir) / name).read_bytes()
            b = (Path(cfg_b.output_dir) / name).read_bytes()
            assert a == b

    def test_budget_below_one_step_warns_and_flags(self, tmp_path):
        # gross budget below the adaptation cost leaves nothing for sampling
        cfg = small_cfg(tmp_path, budget_grad_evals=10)
        with pytest.warns(UserWarning, match="no samples"):
            summary = run_experiment(cfg)
        assert summary["exit_code"] == cli.EXIT_EMPTY_RUN
        assert summary["total_samples"] == 0

    def test_net_budget_mode_ignores_adaptation_cost(self, tmp_path):
        cfg = small_cfg(tmp_path, budget_mode="net", budget_grad_evals=500)
        summary = run_experiment(cfg)
        assert summary["budget"]["sampling_per_chain"] == 500
        assert summary["total_samples"] > 0

    def test_budget_overshoot_at_most_one_step(self, tmp_path):
        cfg = small_cfg(tmp_path, budget_mode="net", budget_grad_evals=1000)
        run_experiment(cfg)
        lines = (Path(cfg.output_dir) / "metrics.csv").read_text().splitlines()
        for row in lines[2:]:
            fields = row.split(",")
            grad_evals = int(fields[7])
            # one orbital step costs T (steps) + 1 init
            assert grad_evals <= 1000 + cfg.kernel.T + 1


class TestVerifyCommand:
    def test_single_suite_passes(self, capsys):
        code = main(["verify", "escape_time", "--seed", "3"])
        assert code == 0
        blob = json.loads(capsys.readouterr().out)
        assert blob["passed"] is True

    def test_unknown_suite_is_usage_error(self, capsys):
        assert main(["verify", "nonsense"]) == cli.EXIT_USAGE

    def test_report_file(self, tmp_path):
        out = tmp_path / "report.json"
        code = main(["verify", "reversibility", "--out", str(out)])
        assert code == 0
        assert json.loads(out.read_text())["passed"] is True


class TestSnis:
    def test_mixture_gradient(self, rng):
        t = mixture_target()
        for _ in range(20):
            assert grad_matches_fd(t, rng.normal(0, 2, size=1))

    def test_deterministic_beats_stochastic_at_large_n(self):
        rows = snis_experiment([10_000], runs=40, seed=5)
        assert rows[0]["det_mse"] <= rows[0]["stoch_mse"]

    def test_csv_output(self, tmp_path, capsys):
        out = tmp_path / "snis.csv"
        code = main(
            ["snis", "--n-grid", "10,100", "--runs", "5", "--seed", "0", "--out", str(out)]
        )
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "# schema=1"
        assert lines[1] == "n,det_mse,stoch_mse,runs"
        assert len(lines) == 4

    def test_single_point_estimator(self):
        rows = snis_experiment([1], runs=8, seed=2)
        # one sample: the estimate is the point itself, mse = E x^2 under q
        assert rows[0]["det_mse"] > 0

    def test_doubling_runs_shrinks_se(self):
        # replicate the experiment; the spread of the mse estimate shrinks
        small = [snis_experiment([1000], runs=25, seed=s)[0]["stoch_mse"] for s in range(12)]
        large = [snis_experiment([1000], runs=100, seed=100 + s)[0]["stoch_mse"] for s in range(12)]
        assert np.std(large) < np.std(small)


class TestSampleCommand:
    def test_end_to_end_cli(self, tmp_path, capsys):
        code = main(
            [
                "sample",
                "--target", "std_gaussian",
                "--kernel", "hmc",
                "--chains", "2",
                "--seed", "4",
                "--out", str(tmp_path / "o"),
                "--set", "adapt_iters=30",
                "--set", "sample_iters=50",
                "--set", "target.dim=2",
            ]
        )
        assert code == 0
        assert (tmp_path / "o" / "run.json").exists()

    def test_config_file_with_overrides(self, tmp_path):
        cfgfile = tmp_path / "c.txt"
        cfgfile.write_text(
            "target = banana\nkernel = hmc\nchains = 2\nadapt_iters = 20\nsample_iters = 10\n"
        )
        code = main(
            [
                "sample",
                "--config", str(cfgfile),
                "--out", str(tmp_path / "o2"),
                "--set", "sample_iters=5",
            ]
        )
        assert code == 0
        run = json.loads((tmp_path / "o2" / "run.json").read_text())
        assert run["config"]["sample_iters"] == 5
