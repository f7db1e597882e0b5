"""Command-line interface: config handling, subcommands, exit codes."""

import hashlib
import json

import pytest

from lqgent import ConfigError
from lqgent.cli import (
    EXIT_CONFIG,
    EXIT_IO,
    EXIT_NUMERICAL,
    EXIT_OK,
    load_config,
    main,
    resolve_physical,
)

BASE = """
[physical]
g_over_omega0 = {g}
gamma_ba_over_omega0 = 0.05
gamma_th_over_gamma_ba = 0.05
gamma_over_omega0 = 1e-10
eta = {eta}
q1 = {q1}
q2 = {q2}

[feedback]
mode = "{mode}"
effort = 0.1

[cost]
kind = "epr"
theta = 0.0
"""


def write_cfg(tmp_path, body, name="run.toml"):
    path = tmp_path / name
    path.write_text(body)
    return str(path)


def base_cfg(tmp_path, g=-0.2, eta=1.0, mode="independent", q1=3.0, q2=1.0, extra=""):
    return write_cfg(tmp_path, BASE.format(g=g, eta=eta, mode=mode, q1=q1, q2=q2) + extra)


class TestConfigLoading:
    def test_unknown_section_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write_cfg(tmp_path, "[plumbing]\nx = 1\n"))

    def test_unknown_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write_cfg(tmp_path, "[physical]\ncoupling = 1.0\n"))

    def test_missing_file(self):
        with pytest.raises(ConfigError):
            load_config("/nonexistent/nowhere.toml")

    def test_both_rate_forms_rejected(self, tmp_path):
        cfg = load_config(
            write_cfg(tmp_path, "[physical]\ngamma_ba = 100.0\ngamma_ba_over_omega0 = 0.05\n")
        )
        with pytest.raises(ConfigError):
            resolve_physical(cfg)

    def test_si_rates_with_trap_frequency(self, tmp_path):
        body = (
            "[physical]\nomega0 = 200000.0\ngamma_ba = 10000.0\n"
            "gamma_th_over_gamma_ba = 0.05\ng_over_omega0 = -0.2\neta = 0.9\n"
        )
        p = resolve_physical(load_config(write_cfg(tmp_path, body)))
        n = p.normalized()
        assert n.gamma_ba == pytest.approx(0.05)
        assert n.gamma_th == pytest.approx(0.0025)
        assert n.g == pytest.approx(-0.2)

    def test_defaults_follow_baseline(self, tmp_path):
        p = resolve_physical(load_config(write_cfg(tmp_path, "[physical]\neta = 0.8\n")))
        assert p.gamma_ba == pytest.approx(0.05)
        assert p.gamma_th == pytest.approx(0.0025)
        assert p.gamma == pytest.approx(1e-10)
        assert p.q1 == 3.0 and p.q2 == 1.0

    def test_bundled_recipes_resolve(self):
        for name in ("fig2.toml", "fig3.toml", "fig4.toml", "fig4_cool.toml"):
            cfg = load_config(name)
            assert "sweep" in cfg


class TestSteady:
    def test_uncoupled_point_reports_zero_entanglement(self, tmp_path, capsys):
        code = main(["steady", "--config", base_cfg(tmp_path, g=0.0),
                     "--out", str(tmp_path / "out")])
        assert code == EXIT_OK
        doc = json.loads((tmp_path / "out" / "steady.json").read_text())
        assert doc["cond_EN"] == 0.0
        assert doc["uncond_EN"] == 0.0

    def test_analytic_boundary_point(self, tmp_path):
        code = main(["steady", "--config", base_cfg(tmp_path, g=-0.19331),
                     "--out", str(tmp_path / "out")])
        assert code == EXIT_OK
        doc = json.loads((tmp_path / "out" / "steady.json").read_text())
        assert doc["cond_EN"] < 0.05
        assert abs(2 * doc["nu_cond"] - 1.0) < 0.1  # within 10% of the boundary
        assert doc["thresholds"]["g_minus"] == pytest.approx(-0.19331, abs=5e-6)

    def test_equal_charges_single_feedback_exits_3(self, tmp_path, capsys):
        code = main(["steady", "--config",
                     base_cfg(tmp_path, mode="single", q1=2.0, q2=2.0)])
        assert code == EXIT_NUMERICAL
        assert "|Q1| != |Q2|" in capsys.readouterr().err

    def test_parse_error_exits_2(self, tmp_path, capsys):
        path = write_cfg(tmp_path, "[physical\neta = 1.0\n")
        assert main(["steady", "--config", path]) == EXIT_CONFIG


class TestSweepCommand:
    SWEEP = """
[sweep]
g_over_omega0 = { min = -0.24, max = -0.18, count = 5 }
eta = { min = 0.6, max = 1.0, count = 4 }
quantities = ["cond_EN", "nu_cond"]
"""

    def test_writes_files_and_summary(self, tmp_path, capsys):
        cfg = base_cfg(tmp_path, extra=self.SWEEP)
        out = tmp_path / "out"
        assert main(["sweep", "--config", cfg, "--out", str(out)]) == EXIT_OK
        captured = capsys.readouterr().out
        assert "entangled cells" in captured
        assert (out / "sweep.csv").exists()
        assert (out / "sweep.json").exists()

    def test_format_selection(self, tmp_path):
        cfg = base_cfg(tmp_path, extra=self.SWEEP)
        out = tmp_path / "csv_only"
        assert main(["sweep", "--config", cfg, "--out", str(out), "--format", "csv"]) == EXIT_OK
        assert (out / "sweep.csv").exists()
        assert not (out / "sweep.json").exists()

    def test_empty_grid_exits_2(self, tmp_path, capsys):
        bad = self.SWEEP.replace("count = 5", "count = 0")
        cfg = base_cfg(tmp_path, extra=bad)
        assert main(["sweep", "--config", cfg]) == EXIT_CONFIG

    def test_missing_section_exits_2(self, tmp_path):
        assert main(["sweep", "--config", base_cfg(tmp_path)]) == EXIT_CONFIG

    def test_unwritable_output_exits_4(self, tmp_path):
        cfg = base_cfg(tmp_path, extra=self.SWEEP)
        blocker = tmp_path / "blocked"
        blocker.write_text("a file, not a directory")
        assert main(["sweep", "--config", cfg, "--out", str(blocker / "sub")]) == EXIT_IO

    def test_byte_identical_outputs(self, tmp_path):
        cfg = base_cfg(tmp_path, extra=self.SWEEP)
        hashes = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["sweep", "--config", cfg, "--out", str(out)]) == EXIT_OK
            hashes.append(hashlib.sha256((out / "sweep.csv").read_bytes()).hexdigest())
        assert hashes[0] == hashes[1]


class TestTrajectoryCommand:
    TRAJ = """
[trajectory]
dt = 0.01
steps = 400
burn_in = 15000
n_traj = 64
seed = 42
decimate = 4
"""

    def test_reproducible_output(self, tmp_path, capsys):
        cfg = base_cfg(tmp_path, eta=0.9, extra=self.TRAJ)
        hashes = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            assert main(["trajectory", "--config", cfg, "--out", str(out)]) == EXIT_OK
            hashes.append(hashlib.sha256((out / "trajectory.csv").read_bytes()).hexdigest())
        assert hashes[0] == hashes[1]
        assert "z" in capsys.readouterr().out

    def test_seed_override_changes_output(self, tmp_path):
        cfg = base_cfg(tmp_path, eta=0.9, extra=self.TRAJ)
        outs = []
        for seed, name in (("42", "s42"), ("43", "s43")):
            out = tmp_path / name
            assert main(["trajectory", "--config", cfg, "--out", str(out),
                         "--seed", seed]) == EXIT_OK
            outs.append((out / "trajectory.csv").read_bytes())
        assert outs[0] != outs[1]

    def test_coarse_dt_exits_2(self, tmp_path):
        cfg = base_cfg(tmp_path, eta=0.9,
                       extra=self.TRAJ.replace("dt = 0.01", "dt = 0.08"))
        assert main(["trajectory", "--config", cfg]) == EXIT_CONFIG

    def test_insufficient_burn_in_exits_2(self, tmp_path):
        cfg = base_cfg(tmp_path, eta=0.9,
                       extra=self.TRAJ.replace("burn_in = 3000", "burn_in = 10"))
        assert main(["trajectory", "--config", cfg]) == EXIT_CONFIG
