import json
import os
import subprocess
import sys
from pathlib import Path

import jsonschema
import pytest

from pimcaps import cli, report
from pimcaps.config import BUNDLED, ConfigError, all_bundled, bundled, load_config, parse_json, parse_text
from pimcaps.planner import select_dimension

import oracles

GOOD = """\
# tiny test net
name = tiny
batch_size = 2
low_caps = 6
high_caps = 3
low_dim = 4
high_dim = 8
iterations = 2
host_latency = 250 us
vault_freq = 625 MHz
scenarios = BaselineModel, PIMCapsNet
"""


class TestParse:
    @pytest.mark.parametrize("name", BUNDLED)
    def test_bundled_match_table(self, name):
        bc = bundled(name)
        n = bc.network
        assert (n.N_B, n.N_L, n.N_H, n.I) == oracles.BENCHMARKS[name]
        assert (n.C_L, n.C_H) == (8, 16)
        assert bc.name == name and bc.vault_freq == 312.5e6

    def test_mn1_cf3(self):
        n = bundled("caps-mn1").network
        assert (n.N_B, n.N_L, n.N_H, n.I) == (100, 1152, 10, 3)
        n = bundled("caps-cf3").network
        assert (n.N_B, n.N_L, n.N_H, n.I) == (100, 4608, 11, 3)
        assert len(all_bundled()) == 12

    def test_good(self):
        bc = parse_text(GOOD)
        assert bc.host_latency_s == pytest.approx(250e-6)
        assert bc.vault_freq == 625e6
        assert bc.scenarios == ("BaselineModel", "PIMCapsNet")

    def test_iterations_zero_line_numbered(self):
        text = GOOD.replace("iterations = 2", "iterations = 0")
        with pytest.raises(ConfigError) as e:
            parse_text(text, "t.cfg")
        assert e.value.line == 8 and "t.cfg:8" in str(e.value)

    @pytest.mark.parametrize("bad,line", [
        ("colour = red\n", 12),
        ("low_caps = 3\n", 12),
        ("vault_freq2\n", 12),
    ])
    def test_bad_lines(self, bad, line):
        with pytest.raises(ConfigError) as e:
            parse_text(GOOD + bad)
        assert e.value.line == line

    @pytest.mark.parametrize("old,new", [
        ("250 us", "250"), ("250 us", "250 parsecs"), ("625 MHz", "-1 MHz"),
        ("PIMCapsNet", "PIMMagic"), ("low_caps = 6", "low_caps = six"),
    ])
    def test_bad_values(self, old, new):
        with pytest.raises(ConfigError):
            parse_text(GOOD.replace(old, new))

    def test_missing_required(self):
        with pytest.raises(ConfigError, match="batch_size"):
            parse_text("name = x\nlow_caps = 1\nhigh_caps = 1\n")

    def test_json(self):
        obj = {"name": "tiny", "batch_size": 2, "low_caps": 6, "high_caps": 3, "iterations": 2,
               "vault_freq": "625 MHz", "scenarios": ["PIMCapsNet"]}
        bc = parse_json(json.dumps(obj, indent=1))
        assert bc.network.N_L == 6 and bc.scenarios == ("PIMCapsNet",)
        obj["iterations"] = 0
        with pytest.raises(ConfigError) as e:
            parse_json(json.dumps(obj, indent=1))
        assert e.value.line is not None

    def test_load_paths(self, tmp_path):
        p = tmp_path / "tiny.cfg"
        p.write_text(GOOD)
        assert load_config(p).name == "tiny"
        j = tmp_path / "tiny.json"
        j.write_text(json.dumps({"name": "j", "batch_size": 1, "low_caps": 2, "high_caps": 2}))
        assert load_config(j).name == "j"
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "nope.cfg")


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def validate(name, text):
    data = json.loads(text) if name in ("simulate", "calibrate") else report.read_csv(text)
    jsonschema.validate(data, report.load_schema(name))
    return data


class TestCli:
    def test_plan(self, capsys):
        code, out, _ = run(["plan", "--config", "caps-mn1"], capsys)
        assert code == 0
        rows = validate("plan", out)
        assert len(rows) == 3 and sum(int(r["selected"]) for r in rows) == 1
        rep = select_dimension(bundled("caps-mn1").network, report.cost_params(report.hardware(bundled("caps-mn1"))))
        for r, c in zip(rows, rep.costs):
            assert (r["dim"], float(r["E"]), float(r["M"]), float(r["S"])) == (c.dim, c.E, c.M, c.S)

    def test_missing_config_vs_sim_error(self, capsys, tmp_path):
        code, _, err = run(["plan", "--config", str(tmp_path / "missing.cfg")], capsys)
        assert code == 2 and "config error" in err
        p = tmp_path / "bad.cfg"
        p.write_text(GOOD.replace("iterations = 2", "iterations = 0"))
        code, _, err = run(["plan", "--config", str(p)], capsys)
        assert code == 2 and ":8" in err
        code, _, err = run(["simulate", "--config", "caps-sv1", "--scenario", "NoSuch"], capsys)
        assert code == 3

    def test_write_failure(self, capsys, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        code, _, err = run(["calibrate", "--out", str(blocker / "sub" / "c.json")], capsys)
        assert code == 4 and "I/O error" in err

    def test_simulate_deterministic(self, capsys, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        for p in (a, b):
            assert run(["simulate", "--config", "caps-sv1", "--seed", "7", "--out", str(p)], capsys)[0] == 0
        assert a.read_bytes() == b.read_bytes()
        data = validate("simulate", a.read_text())
        assert data["scenario"] == "PIMCapsNet" and data["seed"] == 7

    def test_simulate_trace(self, capsys, tmp_path):
        t = tmp_path / "trace.csv"
        code, out, _ = run(["simulate", "--config", "caps-sv1", "--dim", "L", "--trace", str(t)], capsys)
        assert code == 0 and json.loads(out)["metrics"]["dim"] == "L"
        rows = validate("trace", t.read_text())
        assert rows

    def test_en3_intra_comm(self, capsys):
        code, out, _ = run(["simulate", "--config", "caps-en3", "--scenario", "PIMIntra"], capsys)
        assert code == 0
        assert json.loads(out)["metrics"]["intervault_comm_cycles"] > 0

    def test_calibrate(self, capsys):
        code, out, _ = run(["calibrate", "--seed", "0"], capsys)
        assert code == 0
        data = validate("calibrate", out)
        assert data["params"]["recovery_factor"] == "0x3f801d84"

    def test_compare(self, capsys):
        code, out, _ = run(["compare", "--config", "caps-mn1", "--config", "caps-sv1",
                            "--scenario", "BaselineModel,PIMIntra", "--scenario", "PIMCapsNet"], capsys)
        assert code == 0
        rows = validate("compare", out)
        assert list(rows[0]) == ["config", "metric", "BaselineModel", "PIMIntra", "PIMCapsNet"]
        assert [r["config"] for r in rows] == ["caps-mn1"] * 3 + ["caps-sv1"] * 3
        for r in rows:
            assert float(r["BaselineModel"]) == 1.0
            if r["metric"] == "speedup_rp":
                assert float(r["PIMCapsNet"]) > 1

    def test_sweep(self, capsys):
        code, out, _ = run(["sweep", "--config", "caps-en1"], capsys)
        assert code == 0
        rows = validate("sweep", out)
        assert len(rows) == 9
        assert {float(r["freq_hz"]) for r in rows} == {312.5e6, 625e6, 937.5e6}
        for f in {r["freq_hz"] for r in rows}:
            cells = [r for r in rows if r["freq_hz"] == f]
            assert sum(int(r["sim_best"]) for r in cells) == 1

    def test_sweep_custom_freqs(self, capsys):
        code, out, _ = run(["sweep", "--config", "caps-sv1", "--freq", "400MHz", "--freq", "0.8GHz"], capsys)
        assert code == 0
        assert {float(r["freq_hz"]) for r in report.read_csv(out)} == {400e6, 800e6}

    def test_env_out_dir(self, capsys, tmp_path, monkeypatch):
        monkeypatch.setenv(cli.OUT_DIR_ENV, str(tmp_path / "outs"))
        code, out, _ = run(["plan", "--config", "caps-sv2"], capsys)
        assert code == 0 and out == ""
        assert (tmp_path / "outs" / "caps-sv2.plan.csv").exists()

    def test_out_dir_argument(self, capsys, tmp_path):
        assert run(["calibrate", "--out", str(tmp_path)], capsys)[0] == 0
        assert json.loads((tmp_path / "calibration.json").read_text())["seed"] == 0

    def test_idempotent_plan(self, capsys):
        first = run(["plan", "--config", "caps-cf2", "--freq", "625MHz"], capsys)[1]
        assert first == run(["plan", "--config", "caps-cf2", "--freq", "625"], capsys)[1]

    def test_atomic_write_leaves_no_temp(self, tmp_path):
        target = tmp_path / "x.json"
        report.write_atomic(target, "one")
        report.write_atomic(target, "two")
        assert target.read_text() == "two"
        assert [p.name for p in tmp_path.iterdir()] == ["x.json"]

    def test_console_script(self, tmp_path):
        env = dict(os.environ, PIMCAPS_OUT_DIR="")
        res = subprocess.run([sys.executable, "-m", "pimcaps.cli", "plan", "--config", "caps-mn1"],
                             capture_output=True, text=True, env=env)
        assert res.returncode == 0 and res.stdout.startswith("dim,")
