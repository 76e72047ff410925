import json
import subprocess
import sys

import pytest

from nsv4 import cli


def _run(tmp_path, *argv):
    code = cli.main(list(argv) + ["--out", str(tmp_path)])
    dirs = sorted(p for p in tmp_path.iterdir() if p.is_dir())
    return code, dirs


class TestBound:
    def test_unit_bound(self, tmp_path):
        code, (d,) = _run(tmp_path, "bound", "--g-norm", "1.0", "--nu", "1.0")
        assert code == cli.EXIT_OK
        rep = json.loads((d / "report.json").read_text())
        assert rep["result"]["bound_exact"] == pytest.approx(0.2293, abs=2e-4)
        assert rep["result"]["bound_rounded"] == 0.23
        assert rep["seed"] == 0 and rep["config_hash"] in d.name
        assert (d / "summary.txt").exists() and (d / "meta.json").exists()

    def test_reports_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        a.mkdir()
        b.mkdir()
        _, (da,) = _run(a, "bound", "--g-norm", "2.0", "--nu", "0.5", "--format", "csv")
        _, (db,) = _run(b, "bound", "--g-norm", "2.0", "--nu", "0.5", "--format", "csv")
        for name in ("report.json", "report.csv", "summary.txt"):
            assert (da / name).read_bytes() == (db / name).read_bytes()

    def test_module_entry_point(self, tmp_path):
        out = subprocess.run([sys.executable, "-m", "nsv4", "bound", "--nu", "1", "--out", str(tmp_path)],
                             capture_output=True, text=True)
        assert out.returncode == 0
        assert "exact 0.22926" in out.stdout


class TestConfig:
    def test_config_file_then_flags(self, tmp_path):
        cfgfile = tmp_path / "c.json"
        cfgfile.write_text(json.dumps({"nu": 2.0, "g_norm": 3.0}))
        ns = cli._parser().parse_args(["bound", "--config", str(cfgfile), "--nu", "1.0"])
        cfg = cli.build_config(ns)
        assert (cfg.nu, cfg.g_norm) == (1.0, 3.0)

    def test_subcommand_defaults(self):
        cfg = cli.build_config(cli._parser().parse_args(["trace"]))
        assert (cfg.n_per_dim, cfg.nu, cfg.spin_up) == (8, 1.0, 20.0)

    def test_hash_ignores_output_dir(self):
        a = cli.RunConfig(subcommand="bound", out="x")
        b = cli.RunConfig(subcommand="bound", out="y")
        assert a.hash == b.hash
        assert a.hash != cli.RunConfig(subcommand="bound", seed=1).hash


class TestExitCodes:
    def test_invalid_parameter(self, tmp_path):
        assert cli.main(["bound", "--nu", "-1", "--out", str(tmp_path)]) == cli.EXIT_CONFIG

    def test_unknown_config_key(self, tmp_path):
        cfgfile = tmp_path / "c.json"
        cfgfile.write_text(json.dumps({"viscosity": 1.0}))
        assert cli.main(["bound", "--config", str(cfgfile), "--out", str(tmp_path)]) == cli.EXIT_CONFIG

    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["explode"])
        assert exc.value.code == 2
        assert cli.run(cli.RunConfig(subcommand="explode")) == cli.EXIT_CONFIG

    def test_numerical_failure(self, tmp_path):
        code = cli.main(["simulate", "--n-per-dim", "8", "--dt", "10", "--t", "3000", "--u0-norm", "50",
                         "--forcing", "zero", "--out", str(tmp_path)])
        assert code == cli.EXIT_NUMERIC

    def test_invariant_violation(self, tmp_path, monkeypatch):
        monkeypatch.setitem(cli.HANDLERS, "bound", lambda cfg, out: ({"pass": False}, ["FAIL"], False))
        assert cli.main(["bound", "--out", str(tmp_path)]) == cli.EXIT_INVARIANT


class TestSubcommands:
    def test_selftest(self, tmp_path):
        code, (d,) = _run(tmp_path, "selftest")
        assert code == cli.EXIT_OK
        checks = json.loads((d / "report.json").read_text())["result"]["checks"]
        assert all(c["pass"] for c in checks) and len(checks) == 7

    def test_simulate_writes_checkpoints(self, tmp_path):
        code, (d,) = _run(tmp_path, "simulate", "--n-per-dim", "8", "--t", "0.2", "--dt", "0.02",
                          "--checkpoint-every", "5")
        assert code == cli.EXIT_OK
        assert (d / "ckpt_00000005.nsv4").exists() and (d / "ckpt_00000005.nsv4.json").exists()
        assert (d / "trajectory.csv").read_text().startswith("t,enstrophy,g_dot_u,residual,bound_rhs")

    def test_decay_small(self, tmp_path):
        code, (d,) = _run(tmp_path, "decay-test", "--n-per-dim", "8", "--t", "1")
        assert code == cli.EXIT_OK
        assert json.loads((d / "report.json").read_text())["result"]["max_rel_energy_error"] <= 1e-6

    def test_steady_small(self, tmp_path):
        code, _ = _run(tmp_path, "steady-test", "--n-per-dim", "8", "--nu", "2.0", "--dt", "0.05")
        assert code == cli.EXIT_OK

    def test_rho_check(self, tmp_path):
        code, (d,) = _run(tmp_path, "rho-check", "--n-per-dim", "8", "--trials", "6", "--format", "csv")
        assert code == cli.EXIT_OK
        assert (d / "trials.csv").exists()

    def test_clr_check(self, tmp_path):
        code, (d,) = _run(tmp_path, "clr-check", "--clr-depths", "0,5,10", "--clr-resolution", "12")
        assert code == cli.EXIT_OK
        assert json.loads((d / "report.json").read_text())["result"]["all_within_bound"]

    def test_trace_small(self, tmp_path):
        code, (d,) = _run(tmp_path, "trace", "--t", "4", "--spin-up", "1", "--dt", "0.1", "--n-max", "2")
        assert code == cli.EXIT_OK
        rep = json.loads((d / "report.json").read_text())["result"]
        assert rep["crossing"] == 1

    def test_contraction_small(self, tmp_path):
        code, _ = _run(tmp_path, "contraction-test", "--seeds", "1", "--t", "0.5", "--dt", "0.05")
        assert code == cli.EXIT_OK
