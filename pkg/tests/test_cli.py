import json

import numpy as np
import pytest

from optext.cli import main

BASE_OU = """
[model]
a = 0.4
b = 1.0
sigma = 0.8
rho = 0.375
c = 0.3
alpha = 0.25

[boundary]
n_nodes = 40

[sim]
n_paths = 1500
step = 0.002
horizon = 6.0
base_seed = 7
"""

BASE_BM = """
[model]
a = 0.4
b = 0.0
sigma = 0.8
rho = 0.375
c = 0.3
alpha = 0.25

[sim]
n_paths = 1500
step = 0.002
horizon = 6.0
base_seed = 7
"""


@pytest.fixture(scope="module")
def ou_cfg(tmp_path_factory):
    d = tmp_path_factory.mktemp("cfg")
    path = d / "ou.toml"
    path.write_text(BASE_OU)
    return path


@pytest.fixture(scope="module")
def bm_cfg(tmp_path_factory):
    d = tmp_path_factory.mktemp("cfg")
    path = d / "bm.toml"
    path.write_text(BASE_BM)
    return path


class TestConfigHandling:
    def test_missing_sigma_is_config_error(self, tmp_path):
        cfg = tmp_path / "bad.toml"
        cfg.write_text(
            "[model]\na=0.4\nb=1.0\nrho=0.375\nc=0.3\nalpha=0.25\n"
        )
        assert main(["solve", "--config", str(cfg)]) == 2

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "bad.toml"
        cfg.write_text(BASE_OU + "\n[model2]\nz = 1\n")
        assert main(["solve", "--config", str(cfg)]) == 2
        cfg.write_text(BASE_OU.replace("alpha = 0.25", "alpha = 0.25\nbeta = 1"))
        assert main(["solve", "--config", str(cfg)]) == 2

    def test_missing_file(self):
        assert main(["solve", "--config", "/nonexistent/x.toml"]) == 2

    def test_invalid_value(self, tmp_path):
        cfg = tmp_path / "bad.toml"
        cfg.write_text(BASE_OU.replace("sigma = 0.8", "sigma = -1.0"))
        assert main(["solve", "--config", str(cfg)]) == 2


class TestSolve:
    def test_bm_outputs(self, bm_cfg, tmp_path):
        out = tmp_path / "bm_out"
        assert main(["solve", "--config", str(bm_cfg), "--out", str(out)]) == 0
        report = json.loads((out / "critical_prices.json").read_text())
        assert report["branch"] == "bm"
        assert report["x_star"] == pytest.approx(1.9, abs=1e-12)
        assert report["n"] == pytest.approx(0.625, abs=1e-12)
        assert (out / "value_surface.csv").exists()
        assert not (out / "boundary.csv").exists()

    def test_ou_outputs(self, ou_cfg, tmp_path):
        out = tmp_path / "ou_out"
        assert main(["solve", "--config", str(ou_cfg), "--out", str(out)]) == 0
        rows = np.loadtxt(out / "boundary.csv", delimiter=",", skiprows=2)
        assert np.all(np.diff(rows[:, 1]) < 0.0)  # F strictly decreasing
        assert rows[-1, 1] == 0.0
        report = json.loads((out / "critical_prices.json").read_text())
        assert rows[-1, 0] == pytest.approx(report["x0"], abs=1e-12)
        head = (out / "value_surface.csv").read_text().splitlines()[:2]
        assert head[0].startswith("# optext-value-surface-v1")
        assert head[1] == "x,y,w,w_x,w_xx,w_y,region"

    def test_byte_stable_reruns(self, ou_cfg, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert main(["solve", "--config", str(ou_cfg), "--out", str(out1)]) == 0
        assert main(["solve", "--config", str(ou_cfg), "--out", str(out2)]) == 0
        for name in ("critical_prices.json", "boundary.csv", "value_surface.csv"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


class TestVerify:
    def test_pass_case(self, ou_cfg, tmp_path):
        out = tmp_path / "verify"
        assert main(["verify", "--config", str(ou_cfg), "--out", str(out)]) == 0
        rep = json.loads((out / "verify_report.json").read_text())
        assert rep["passed"] is True
        assert "chi_diagnostic" in rep

    def test_forced_failure_names_check(self, ou_cfg, tmp_path, capsys):
        bad = str(ou_cfg) + ".bad"
        with open(ou_cfg) as src, open(bad, "w") as dst:
            dst.write(src.read() + "\n[quadrature]\nrel_tol = 1e-2\n")
        out = tmp_path / "verify_bad"
        code = main(["verify", "--config", bad, "--out", str(out)])
        assert code == 4
        rep = json.loads((out / "verify_report.json").read_text())
        failed = [c["name"] for c in rep["checks"] if not c["passed"]]
        assert failed  # the report names which layer failed
        assert "FAIL" in capsys.readouterr().out

    def test_bm_reports_reserve_independent_stopping(self, bm_cfg, tmp_path):
        out = tmp_path / "verify_bm"
        assert main(["verify", "--config", str(bm_cfg), "--out", str(out)]) == 0
        rep = json.loads((out / "verify_report.json").read_text())
        names = {c["name"] for c in rep["checks"]}
        assert "stopping_value_y_independent" in names


class TestSimulate:
    def test_zero_reserve(self, ou_cfg, tmp_path):
        out = tmp_path / "sim0"
        code = main(
            [
                "simulate", "--config", str(ou_cfg), "--out", str(out),
                "--x", "0.9", "--y", "0.0",
            ]
        )
        assert code == 0
        rep = json.loads((out / "sim_result.json").read_text())
        assert rep["result"]["mean"] == 0.0
        assert rep["result"]["std_error"] == 0.0

    def test_compares_to_analytic(self, ou_cfg, tmp_path):
        out = tmp_path / "sim1"
        code = main(
            [
                "simulate", "--config", str(ou_cfg), "--out", str(out),
                "--x", "0.5", "--y", "1.0",
            ]
        )
        assert code == 0
        rep = json.loads((out / "sim_result.json").read_text())
        assert rep["analytic"]["within_tolerance"] is True

    def test_seed_override_changes_result(self, ou_cfg, tmp_path):
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        args = ["simulate", "--config", str(ou_cfg), "--x", "0.5", "--y", "1.0"]
        main(args + ["--out", str(out1), "--seed", "1"])
        main(args + ["--out", str(out2), "--seed", "2"])
        m1 = json.loads((out1 / "sim_result.json").read_text())["result"]["mean"]
        m2 = json.loads((out2 / "sim_result.json").read_text())["result"]["mean"]
        assert m1 != m2

    def test_environment_overrides(self, ou_cfg, tmp_path, monkeypatch):
        env_out = tmp_path / "env_out"
        monkeypatch.setenv("OPTEXT_OUT", str(env_out))
        monkeypatch.setenv("OPTEXT_SEED", "1")
        args = ["simulate", "--config", str(ou_cfg), "--x", "0.5", "--y", "1.0"]
        assert main(args) == 0
        m_env = json.loads((env_out / "sim_result.json").read_text())
        monkeypatch.delenv("OPTEXT_OUT")
        monkeypatch.delenv("OPTEXT_SEED")
        out = tmp_path / "flag_out"
        main(args + ["--out", str(out), "--seed", "1"])
        m_flag = json.loads((out / "sim_result.json").read_text())
        assert m_env["result"]["mean"] == m_flag["result"]["mean"]

    def test_trace_emission(self, ou_cfg, tmp_path):
        small = str(ou_cfg) + ".small"
        with open(ou_cfg) as src:
            text = src.read().replace("n_paths = 1500", "n_paths = 5")
        with open(small, "w") as dst:
            dst.write(text)
        out = tmp_path / "sim_trace"
        trace = tmp_path / "trace.csv"
        code = main(
            [
                "simulate", "--config", small, "--out", str(out),
                "--x", "0.9", "--y", "1.0", "--trace", str(trace),
            ]
        )
        assert code == 0
        lines = trace.read_text().splitlines()
        assert lines[0] == "# optext-trace-v1"
        assert lines[1] == "path,t,X,Y,xi"
        assert len(lines) > 10


class TestSweepAndOracle:
    def test_sweep_a(self, ou_cfg, tmp_path):
        out = tmp_path / "sweep"
        code = main(
            [
                "sweep", "--config", str(ou_cfg), "--out", str(out),
                "--parameter", "a", "--values", "0.4,0.5",
            ]
        )
        assert code == 0
        rep = json.loads((out / "sweep_report.json").read_text())
        assert rep["passed"] is True
        assert rep["orderings"]["x0_strictly_increasing"] is True
        assert (out / "boundary_a_0.4.csv").exists()
        assert (out / "boundary_a_0.5.csv").exists()

    def test_sweep_rejects_unknown_parameter(self, ou_cfg):
        assert (
            main(
                [
                    "sweep", "--config", str(ou_cfg),
                    "--parameter", "rho", "--values", "0.3,0.4",
                ]
            )
            == 2
        )

    def test_oracle_small_grid(self, bm_cfg, tmp_path):
        cfg = str(bm_cfg) + ".grid"
        with open(bm_cfg) as src, open(cfg, "w") as dst:
            dst.write(src.read() + "\n[grid]\nnx = 120\nny = 16\n")
        out = tmp_path / "oracle"
        assert main(["oracle", "--config", cfg, "--out", str(out)]) == 0
        rep = json.loads((out / "qvi_report.json").read_text())
        assert rep["sup_rel_discrepancy"] <= 0.02
        head = (out / "qvi_grid.csv").read_text().splitlines()[0]
        assert head.startswith("# optext-qvi-grid-v1")
