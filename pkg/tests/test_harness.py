"""Config validation, CSV persistence, rate fits, runners, CLI plumbing."""

import os
import subprocess
import sys

import numpy as np
import pytest

from qnlab.errors import ConfigError, DomainError
from qnlab.harness import (
    CSV_HEADER,
    ExperimentConfig,
    fit_rate,
    measure_wave_speed,
    read_csv,
    run_preset,
    emit_plots,
)


class TestConfig:
    def test_presets_load_and_validate(self):
        for name in ("l-sweep", "s-sweep", "sprime-sweep", "euler-poisson-wave",
                     "euler-poisson-sweep", "gyro-decay", "magnetized-kinetic"):
            cfg = ExperimentConfig.preset(name)
            assert cfg.name == name

    def test_empty_epsilon_rejected(self):
        cfg = ExperimentConfig(epsilon=[])
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_nondecreasing_epsilon_rejected(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(epsilon=[1e-3, 1e-2]).validate()

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("closure: L\nwhatever: 3\n")
        with pytest.raises(ConfigError):
            ExperimentConfig.from_yaml(p)

    def test_yaml_round_trip(self, tmp_path):
        cfg = ExperimentConfig.preset("l-sweep")
        p = tmp_path / "cfg.yaml"
        cfg.to_yaml(p)
        back = ExperimentConfig.from_yaml(p)
        assert back == cfg

    def test_schema_version_guard(self):
        with pytest.raises(ConfigError):
            ExperimentConfig(schema_version=2).validate()


class TestFitRate:
    def test_exact_power_law(self):
        eps = np.array([1e-1, 1e-2, 1e-3, 1e-4])
        fit = fit_rate(eps, 3.0 * eps**0.5)
        assert fit.exponent == pytest.approx(0.5, abs=1e-12)
        assert fit.residual < 1e-12

    def test_noisy_power_law(self):
        rng = np.random.default_rng(0)
        eps = np.logspace(-1, -4, 8)
        vals = eps * np.exp(0.01 * rng.standard_normal(8))
        fit = fit_rate(eps, vals)
        assert fit.exponent == pytest.approx(1.0, abs=0.05)
        lo, hi = fit.ci95
        assert lo < 1.0 < hi

    def test_constant_series(self):
        eps = np.array([1e-1, 1e-2, 1e-3, 1e-4])
        fit = fit_rate(eps, np.full(4, 2.5))
        assert fit.exponent == pytest.approx(0.0, abs=1e-12)

    def test_guards(self):
        with pytest.raises(DomainError):
            fit_rate([1e-1, 1e-2, 1e-3], [1, 1, 1])
        with pytest.raises(DomainError):
            fit_rate([1e-1, 1e-2, 1e-3, 1e-4], [1, 1, -1, 1])


def test_measure_wave_speed_synthetic():
    """Pure cosine at a known frequency is measured to 0.1%."""
    k, c = 2 * np.pi, 1.3
    t = np.linspace(0, 2.0, 2001)
    series = np.column_stack([t, np.cos(k * c * t)])
    speed = measure_wave_speed(series, k)
    assert speed == pytest.approx(c, rel=1e-3)


@pytest.fixture(scope="module")
def mini_l_result(tmp_path_factory):
    cfg = ExperimentConfig.preset("l-sweep")
    cfg.epsilon = [1e-1, 1e-2]
    cfg.kinetic.update(nx=64, nv=64, dt_max=2e-3)
    cfg.fluid["nx"] = 64
    cfg.final_time = 0.1
    cfg.outputs = 6
    csv = tmp_path_factory.mktemp("csv") / "mini.csv"
    result = run_preset(cfg, csv_path=str(csv))
    return result, str(csv)


class TestRunPreset:
    def test_rows_and_columns(self, mini_l_result):
        result, _ = mini_l_result
        assert len(result.rows) == 2 * 6
        assert set(CSV_HEADER.split(",")) <= set(result.rows[0])

    def test_csv_parseable_and_matches(self, mini_l_result):
        result, csv = mini_l_result
        rows = read_csv(csv)
        assert len(rows) == len(result.rows)
        assert rows[0]["time"] == 0.0
        got = sorted({r["epsilon"] for r in rows}, reverse=True)
        assert got == [1e-1, 1e-2]

    def test_csv_prefix_parseable(self, mini_l_result, tmp_path):
        """A truncated file (killed run) still parses row by row."""
        _, csv = mini_l_result
        blob = open(csv, "rb").read()
        cut = tmp_path / "cut.csv"
        cut.write_bytes(blob[: int(len(blob) * 0.6)])
        rows = read_csv(cut)
        assert 0 < len(rows) < 12

    def test_determinism(self, mini_l_result, tmp_path):
        """Same config, same seed: byte-identical CSV."""
        _, csv = mini_l_result
        cfg = ExperimentConfig.preset("l-sweep")
        cfg.epsilon = [1e-1, 1e-2]
        cfg.kinetic.update(nx=64, nv=64, dt_max=2e-3)
        cfg.fluid["nx"] = 64
        cfg.final_time = 0.1
        cfg.outputs = 6
        again = tmp_path / "again.csv"
        run_preset(cfg, csv_path=str(again))
        assert open(csv, "rb").read() == open(again, "rb").read()

    def test_budget_and_checks(self, mini_l_result):
        result, _ = mini_l_result
        assert result.checks["h_monotone_in_eps"]
        assert result.checks["budget_slack_ok"]

    def test_workers_match_serial(self, mini_l_result, tmp_path):
        result, _ = mini_l_result
        cfg = ExperimentConfig.preset("l-sweep")
        cfg.epsilon = [1e-1, 1e-2]
        cfg.kinetic.update(nx=64, nv=64, dt_max=2e-3)
        cfg.fluid["nx"] = 64
        cfg.final_time = 0.1
        cfg.outputs = 6
        par = run_preset(cfg, workers=2)
        a = result.series(1e-2, "total")
        b = par.series(1e-2, "total")
        assert np.array_equal(a, b)


class TestPlots:
    def test_emit_and_determinism(self, mini_l_result, tmp_path):
        result, _ = mini_l_result
        d1, d2 = tmp_path / "p1", tmp_path / "p2"
        w1 = emit_plots(result, d1)
        w2 = emit_plots(result, d2)
        assert len(w1) == 3
        for a, b in zip(w1, w2):
            assert os.path.getsize(a) > 0
            assert open(a, "rb").read() == open(b, "rb").read()

    def test_single_epsilon_skips_sweep_plot(self, tmp_path):
        cfg = ExperimentConfig.preset("euler-poisson-wave")
        cfg.outputs = 5
        cfg.final_time = 0.2
        result = run_preset(cfg)
        written = emit_plots(result, tmp_path / "p")
        names = {os.path.basename(w) for w in written}
        assert "h_vs_epsilon.svg" not in names
        assert "h_vs_time.svg" in names


class TestCli:
    def run_cli(self, *args):
        return subprocess.run([sys.executable, "-m", "qnlab.cli", *args],
                              capture_output=True, text=True)

    def test_scale_preset(self):
        out = self.run_cli("scale", "tokamak-core")
        assert out.returncode == 0
        assert "lambda_D" in out.stdout and "alpha" in out.stdout

    def test_scale_unknown(self):
        assert self.run_cli("scale", "nope").returncode == 2

    def test_run_and_fit_and_plot(self, tmp_path):
        cfg = ExperimentConfig.preset("l-sweep")
        cfg.kinetic.update(nx=32, nv=32, dt_max=4e-3)
        cfg.fluid["nx"] = 32
        cfg.final_time = 0.04
        cfg.outputs = 3
        path = tmp_path / "tiny.yaml"
        cfg.to_yaml(path)
        out_dir = tmp_path / "out"
        out = self.run_cli("sweep", str(path), "--out", str(out_dir))
        assert out.returncode == 0, out.stderr
        csv = out_dir / "l-sweep.csv"
        assert csv.exists()
        fit_out = self.run_cli("fit", str(csv), "--column", "total")
        assert fit_out.returncode == 0 and "exponent" in fit_out.stdout
        plot_out = self.run_cli("plot", str(csv), "--out", str(out_dir))
        assert plot_out.returncode == 0


class TestOtherRunners:
    def test_sprime_mini_run(self):
        """Charge-normalized sweep runner end to end at desk size, with the
        closure energy non-increasing along the run."""
        cfg = ExperimentConfig.preset("sprime-sweep")
        cfg.epsilon = [1e-2]
        cfg.kinetic.update(nx=256, nv=96, dt_max=3e-3)
        cfg.final_time = 0.1
        cfg.outputs = 6
        result = run_preset(cfg)
        e = 1e-2
        en = result.series(e, "energy_total")
        t = result.series(e, "time")
        drift = np.max(np.diff(en) / (np.diff(t) * abs(en[0])))
        assert drift <= 1e-3
        assert result.extras[e]["budget"].slack >= -1e-9
        assert np.allclose(result.series(e, "mass"), 1.0, atol=1e-10)

    def test_magnetized_kinetic_smoke(self):
        """Magnetized runner: exact gyration permutations, conserved energy,
        positive budget slack."""
        cfg = ExperimentConfig.preset("magnetized-kinetic")
        cfg.kinetic.update(nx=48, nv=16)
        cfg.final_time = 0.15
        cfg.outputs = 3
        result = run_preset(cfg)
        e = cfg.epsilon[0]
        assert result.extras[e]["vperp_drift"] == 0.0
        en = result.series(e, "energy_total")
        assert np.max(np.abs(en - en[0])) <= 1e-6 * abs(en[0])
        h = result.series(e, "total")
        assert result.extras[e]["budget"].slack >= -1e-3 * h.max()
