"""Run orchestration: determinism, ensembles, coupled refinement, CLI."""

import os
import subprocess
import sys

import numpy as np
import pytest

from savch.config import ConfigError, RunConfig
from savch.harness import (
    build_problem,
    convergence_study,
    coupled_increments,
    fit_rate,
    mc_run,
    run_path,
    simulate_path,
    worker_count,
)


def read_bytes(directory):
    out = {}
    for name in sorted(os.listdir(directory)):
        with open(os.path.join(directory, name), "rb") as fh:
            out[name] = fh.read()
    return out


class TestRunPath:
    def test_zero_noise_fixed_point(self):
        cfg = RunConfig(
            nx=4, T_final=0.1, n_steps=20, noise_scale=0.0,
            phi0_kind="constant", phi0_value=1.0,
        )
        trajectory, _ = run_path(cfg)
        assert float(np.max(np.abs(trajectory[-1].phi - 1.0))) < 1e-12

    def test_zero_noise_energy_decay(self):
        cfg = RunConfig(nx=8, T_final=0.05, n_steps=50, noise_scale=0.0, phi0_kind="cosine")
        _, reports = run_path(cfg)
        e = [rep.E_mod for rep in reports]
        assert all(b <= a + 1e-10 for a, b in zip(e[:-1], e[1:]))

    def test_output_files(self, tmp_path):
        cfg = RunConfig(
            nx=4, T_final=0.05, n_steps=10, noise_scale=0.1, seed=5, snapshot_stride=5
        )
        out = tmp_path / "run"
        run_path(cfg, out_dir=str(out))
        names = sorted(os.listdir(out))
        assert "steps.csv" in names
        assert "config.txt" in names
        assert "snapshot_000000.vtk" in names
        assert "snapshot_000010.vtk" in names
        text = (out / "steps.csv").read_text().splitlines()
        assert text[0].startswith("step,t,mass,E_mod")
        assert len(text) == cfg.n_steps + 2  # header + step 0 + N steps
        vtk = (out / "snapshot_000005.vtk").read_text()
        assert "SCALARS phi double 1" in vtk
        assert "SCALARS mu double 1" in vtk
        mesh_cells = 2 * cfg.nx**2
        assert f"CELLS {mesh_cells} {4 * mesh_cells}" in vtk

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = RunConfig(nx=4, T_final=0.05, n_steps=10, noise_scale=0.1, seed=5)
        run_path(cfg, out_dir=str(tmp_path / "a"))
        run_path(cfg, out_dir=str(tmp_path / "b"))
        assert read_bytes(tmp_path / "a") == read_bytes(tmp_path / "b")


class TestWorkerCount:
    def test_env_cap(self, monkeypatch):
        monkeypatch.setenv("SAVCH_THREADS", "2")
        assert worker_count(16) <= 2

    def test_invalid_env(self, monkeypatch):
        monkeypatch.setenv("SAVCH_THREADS", "many")
        with pytest.raises(ConfigError):
            worker_count(4)

    def test_at_least_one(self, monkeypatch):
        monkeypatch.setenv("SAVCH_THREADS", "1")
        assert worker_count(1) == 1


class TestMonteCarlo:
    def test_needs_two_paths(self):
        with pytest.raises(ConfigError):
            mc_run(RunConfig(paths=1))

    def test_zero_noise_zero_variance(self):
        cfg = RunConfig(nx=4, T_final=0.05, n_steps=8, paths=4, noise_scale=0.0)
        result = mc_run(cfg)
        assert result.complete
        assert all(se == 0.0 for se in result.stderrs.values())

    def test_mean_mass_change_unbiased(self):
        # symmetric increments: per-step mass increments have zero mean
        cfg = RunConfig(
            nx=4, T_final=0.1, n_steps=16, paths=32,
            noise_scale=0.2, rho_kind="rational", seed=123,
        )
        result = mc_run(cfg)
        mean = result.means["mass_change"]
        se = result.stderrs["mass_change"]
        assert abs(mean) <= 3.0 * se

    def test_stderr_scaling_with_paths(self):
        # averaged over disjoint ensembles, se(2M)/se(M) tracks 1/sqrt(2)
        se_m, se_2m = [], []
        for k in range(4):
            base = dict(nx=4, T_final=0.1, n_steps=8, noise_scale=0.2)
            se_m.append(
                mc_run(RunConfig(paths=16, seed=1000 + k, **base)).stderrs["max_drift_r"]
            )
            se_2m.append(
                mc_run(RunConfig(paths=32, seed=2000 + k, **base)).stderrs["max_drift_r"]
            )
        ratio = np.mean(se_2m) / np.mean(se_m)
        target = 1.0 / np.sqrt(2.0)
        assert 0.7 * target <= ratio <= 1.3 * target

    def test_worker_independence(self, tmp_path, monkeypatch):
        cfg = RunConfig(nx=4, T_final=0.05, n_steps=8, paths=4, noise_scale=0.1, seed=3)
        monkeypatch.setenv("SAVCH_THREADS", "1")
        mc_run(cfg, out_dir=str(tmp_path / "serial"))
        monkeypatch.setenv("SAVCH_THREADS", "8")
        mc_run(cfg, out_dir=str(tmp_path / "parallel"))
        assert read_bytes(tmp_path / "serial") == read_bytes(tmp_path / "parallel")

    def test_summary_file(self, tmp_path):
        cfg = RunConfig(nx=4, T_final=0.05, n_steps=8, paths=3, noise_scale=0.1, seed=3)
        mc_run(cfg, out_dir=str(tmp_path))
        lines = (tmp_path / "summary.csv").read_text().splitlines()
        assert lines[0] == "statistic,mean,stderr"
        assert lines[1] == "paths_requested,3,0"
        assert lines[2] == "paths_completed,3,0"
        stats = {line.split(",")[0] for line in lines[3:]}
        assert {"max_drift_r", "mass_change", "nikolskii_l1"} <= stats
        assert sorted(os.listdir(tmp_path))[:1] == ["config.txt"]
        assert {"path_0000.csv", "path_0001.csv", "path_0002.csv"} <= set(os.listdir(tmp_path))

    def test_path_failure_marks_summary_incomplete(self, tmp_path, monkeypatch):
        import savch.harness as harness_mod
        from savch.stepper import StepFailure

        real = harness_mod.simulate_path

        def flaky(cfg, prob, path_id, n_steps=None, increments=None):
            if path_id == 1:
                raise StepFailure("synthetic failure for bookkeeping test")
            return real(cfg, prob, path_id, n_steps=n_steps, increments=increments)

        monkeypatch.setattr(harness_mod, "simulate_path", flaky)
        cfg = RunConfig(nx=4, T_final=0.05, n_steps=8, paths=3, noise_scale=0.1, seed=3)
        result = mc_run(cfg, out_dir=str(tmp_path))
        assert not result.complete
        assert result.failures[0][0] == 1
        assert len(result.summaries) == 2
        lines = (tmp_path / "summary.csv").read_text().splitlines()
        assert "paths_completed,2,0" in lines
        assert "path 1" in (tmp_path / "failures.txt").read_text()
        assert not (tmp_path / "path_0001.csv").exists()


class TestCoupledIncrements:
    def test_aggregation_bit_exact(self):
        cfg = RunConfig(nx=4, T_final=0.1, n_steps=4, levels=3, noise_scale=0.2, seed=17)
        prob = build_problem(cfg)
        incs = coupled_increments(prob, path_id=0, n_levels=3, n_coarsest=4, T=cfg.T_final)
        assert [len(level) for level in incs] == [4, 8, 16]
        for j in range(len(incs) - 1):
            coarse, fine = incs[j], incs[j + 1]
            for m in range(len(coarse)):
                # each coarse increment is exactly the sum of its children
                assert np.array_equal(coarse[m], fine[2 * m] + fine[2 * m + 1])

    def test_fine_level_matches_direct_sampling(self):
        from savch.noise import sample_increment

        cfg = RunConfig(nx=4, T_final=0.1, n_steps=4, levels=3, noise_scale=0.2, seed=17)
        prob = build_problem(cfg)
        incs = coupled_increments(prob, path_id=2, n_levels=3, n_coarsest=4, T=cfg.T_final)
        tau_fine = cfg.T_final / 16
        for step in (1, 7, 16):
            direct = sample_increment(prob.noise, 2, step, tau_fine)
            assert np.array_equal(incs[-1][step - 1], direct)


class TestConvergence:
    def test_rejects_rademacher(self):
        cfg = RunConfig(rv_kind="rademacher", levels=3)
        with pytest.raises(ConfigError, match="rademacher"):
            convergence_study(cfg)

    def test_rejects_too_few_levels(self):
        with pytest.raises(ConfigError, match="levels"):
            convergence_study(RunConfig(levels=2))

    def test_zero_noise_correction_columns_vanish(self, tmp_path):
        # both correction summands carry the noise field, any initial data
        cfg = RunConfig(
            nx=4, T_final=0.1, n_steps=4, levels=3, paths=2,
            noise_scale=0.0, phi0_kind="cosine", seed=1,
        )
        result = convergence_study(cfg, out_dir=str(tmp_path))
        for name in ("sum_tau_xi_O_sq", "sum_tau_xi_G_sq"):
            assert max(result.level_means[name]) == 0.0
            slope, r2 = result.slopes[name]
            assert np.isnan(slope) and np.isnan(r2)
        text = (tmp_path / "slopes.csv").read_text()
        assert "nan" in text

    def test_zero_noise_drift_vanishes_at_equilibrium(self):
        # SAV drift is zero without noise only when phi does not move;
        # the pure phase phi = 1 is such a fixed point
        cfg = RunConfig(
            nx=4, T_final=0.1, n_steps=4, levels=3, paths=2,
            noise_scale=0.0, phi0_kind="constant", phi0_value=1.0, seed=1,
        )
        result = convergence_study(cfg)
        for name in ("max_drift_r", "max_drift_s"):
            assert max(result.level_means[name]) < 1e-12

    def test_small_noisy_study(self, tmp_path):
        cfg = RunConfig(
            nx=4, T_final=0.1, n_steps=8, levels=3, paths=8, noise_scale=0.2, seed=42
        )
        result = convergence_study(cfg, out_dir=str(tmp_path))
        # correction sums scale ~ tau: means strictly decreasing
        means = result.level_means["sum_tau_xi_O_sq"]
        assert means[0] > means[1] > means[2]
        assert result.pair_diffs.shape == (2, 8)
        for name in ("levels.csv", "pairs.csv", "slopes.csv", "config.txt"):
            assert name in os.listdir(tmp_path)


class TestFitRate:
    def test_exact_power_law(self):
        taus = np.array([0.1, 0.05, 0.025, 0.0125])
        slope, r2 = fit_rate(taus, 3.0 * taus**1.5)
        assert abs(slope - 1.5) < 1e-12
        assert abs(r2 - 1.0) < 1e-12

    def test_degenerate_values(self):
        taus = np.array([0.1, 0.05, 0.025])
        slope, r2 = fit_rate(taus, np.zeros(3))
        assert np.isnan(slope) and np.isnan(r2)


class TestCli:
    def run_cli(self, *args, env=None):
        full_env = dict(os.environ)
        if env:
            full_env.update(env)
        return subprocess.run(
            [sys.executable, "-m", "savch.cli", *args],
            capture_output=True, text=True, env=full_env,
        )

    def test_run_subcommand(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("nx = 4\nT_final = 0.05\nn_steps = 8\nnoise_scale = 0.1\n")
        proc = self.run_cli("run", "--config", str(cfg_file), "--out", str(tmp_path / "out"))
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "out" / "steps.csv").exists()

    def test_validation_error_exit_code(self, tmp_path):
        cfg_file = tmp_path / "bad.cfg"
        cfg_file.write_text("n_steps = 0\n")
        proc = self.run_cli("run", "--config", str(cfg_file))
        assert proc.returncode == 2
        assert "error" in proc.stderr

    def test_unknown_key_exit_code(self, tmp_path):
        cfg_file = tmp_path / "bad.cfg"
        cfg_file.write_text("nx_typo = 4\n")
        proc = self.run_cli("run", "--config", str(cfg_file))
        assert proc.returncode == 2

    def test_missing_config_file(self):
        proc = self.run_cli("run", "--config", "/nonexistent/file.cfg")
        assert proc.returncode == 2

    def test_seed_override(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("nx = 4\nT_final = 0.05\nn_steps = 4\n")
        self.run_cli("run", "--config", str(cfg_file), "--seed", "7",
                     "--out", str(tmp_path / "a"))
        self.run_cli("run", "--config", str(cfg_file), "--seed", "8",
                     "--out", str(tmp_path / "b"))
        a = (tmp_path / "a" / "steps.csv").read_bytes()
        b = (tmp_path / "b" / "steps.csv").read_bytes()
        assert a != b

    def test_mc_subcommand(self, tmp_path):
        cfg_file = tmp_path / "mc.cfg"
        cfg_file.write_text("nx = 4\nT_final = 0.05\nn_steps = 4\npaths = 2\n")
        proc = self.run_cli("mc", "--config", str(cfg_file), "--out", str(tmp_path / "out"))
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "out" / "summary.csv").exists()

    def test_selftest_subcommand(self):
        proc = self.run_cli("selftest")
        assert proc.returncode == 0, proc.stdout + proc.stderr
        assert "all checks passed" in proc.stdout
