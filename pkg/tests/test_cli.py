import json
import subprocess
import sys
from pathlib import Path

import pytest

from mpe_lab.cli import main
from mpe_lab.data import read_jsonl
from mpe_lab.environments import TinyMDPSpec
from mpe_lab.truth import exact_theta_tiny

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SMOKE = CONFIGS / "smoke.json"


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def _write(tmp_path, obj, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return path


class TestSimulate:
    def test_jsonl(self, tmp_path, capsys):
        out = tmp_path / "d.jsonl"
        code, stdout, _ = _run(capsys, "simulate", "--config", SMOKE, "--n", 40, "--seed", 2, "--out", out)
        assert code == 0
        info = json.loads(stdout)
        assert (info["n"], info["T"], info["p"]) == (40, 2, 3)
        ds = read_jsonl(out, gamma=info["gamma"])
        assert ds.n == 40 and ds.T == 2

    def test_csv(self, tmp_path, capsys):
        out = tmp_path / "d.csv"
        code, _, _ = _run(capsys, "simulate", "--config", SMOKE, "--n", 5, "--format", "csv", "--out", out)
        assert code == 0
        # T action rows plus the terminal state row per unit
        assert len(out.read_text().strip().splitlines()) == 1 + 5 * 3

    def test_reproducible(self, tmp_path, capsys):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        _run(capsys, "simulate", "--config", SMOKE, "--n", 20, "--seed", 4, "--out", a)
        _run(capsys, "simulate", "--config", SMOKE, "--n", 20, "--seed", 4, "--out", b)
        assert a.read_bytes() == b.read_bytes()


class TestEstimate:
    @pytest.fixture
    def data(self, tmp_path, capsys):
        path = tmp_path / "d.jsonl"
        _run(capsys, "simulate", "--config", SMOKE, "--n", 300, "--seed", 1, "--out", path)
        return path

    @pytest.mark.parametrize("method", ["asrw", "direct", "srw"])
    def test_methods(self, data, capsys, method):
        code, stdout, _ = _run(capsys, "estimate", data, "--config", SMOKE, "--method", method, "--folds", 3)
        assert code == 0
        rep = json.loads(stdout)
        assert rep["method"] == method and rep["n"] == 300
        assert rep["ci"][0] <= rep["theta_hat"] <= rep["ci"][1]

    def test_oracle_score(self, data, capsys):
        code, stdout, _ = _run(capsys, "estimate", data, "--config", SMOKE, "--score", "oracle", "--folds", 3)
        assert code == 0 and json.loads(stdout)["score"] == "oracle"

    def test_tiny_oracle(self, tmp_path, capsys):
        cfg = _write(tmp_path, {"env": "tiny"})
        data = tmp_path / "t.jsonl"
        _run(capsys, "simulate", "--config", cfg, "--n", 20_000, "--out", data)
        code, stdout, _ = _run(capsys, "estimate", data, "--config", cfg, "--method", "srw", "--score", "oracle")
        assert code == 0
        rep = json.loads(stdout)
        assert abs(rep["theta_hat"] - exact_theta_tiny(TinyMDPSpec())) <= 4 * rep["se"]

    def test_tiny_learned_unsupported(self, tmp_path, capsys):
        cfg = _write(tmp_path, {"env": "tiny"})
        data = tmp_path / "t.jsonl"
        _run(capsys, "simulate", "--config", cfg, "--n", 50, "--out", data)
        code, _, err = _run(capsys, "estimate", data, "--config", cfg)
        assert code == 2 and "odds-tilt" in err

    def test_shape_mismatch(self, data, tmp_path, capsys):
        cfg = _write(tmp_path, {"env": "benchmark", "env_params": {"T": 4, "p": 3}})
        code, _, err = _run(capsys, "estimate", data, "--config", cfg)
        assert code == 2 and "T=2" in err

    def test_missing_file(self, tmp_path, capsys):
        code, _, err = _run(capsys, "estimate", tmp_path / "nope.jsonl")
        assert code == 2 and "error" in err


class TestOracle:
    def test_tiny_exact(self, tmp_path, capsys):
        code, stdout, _ = _run(capsys, "oracle", "--config", _write(tmp_path, {"env": "tiny"}))
        assert code == 0
        assert json.loads(stdout)["theta_true"] == exact_theta_tiny(TinyMDPSpec())

    def test_crn(self, capsys):
        code, stdout, _ = _run(capsys, "oracle", "--config", SMOKE, "--M", 10_000, "--epsilon", 0.1)
        out = json.loads(stdout)
        assert code == 0 and out["M"] == 10_000 and out["epsilon"] == 0.1 and out["mc_se"] > 0

    def test_bad_epsilon(self, capsys):
        code, _, err = _run(capsys, "oracle", "--config", SMOKE, "--epsilon", -1)
        assert code == 2 and "epsilon" in err


class TestConfigErrors:
    def test_unknown_key(self, tmp_path, capsys):
        code, _, err = _run(capsys, "oracle", "--config", _write(tmp_path, {"enviroment": "tiny"}))
        assert code == 2 and "enviroment" in err

    def test_bad_json(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert _run(capsys, "oracle", "--config", path)[0] == 2

    def test_direction_mismatch(self, tmp_path, capsys):
        cfg = _write(tmp_path, {"env": "benchmark", "direction": "odds_tilt"})
        code, _, err = _run(capsys, "oracle", "--config", cfg)
        assert code == 2 and "odds_tilt" in err

    def test_unknown_env(self, tmp_path, capsys):
        assert _run(capsys, "oracle", "--config", _write(tmp_path, {"env": "casino"}))[0] == 2

    def test_bad_subcommand(self):
        with pytest.raises(SystemExit):
            main(["frobnicate"])


class TestBench:
    def test_smoke(self, tmp_path, capsys):
        code, stdout, _ = _run(capsys, "bench", "--config", SMOKE, "--outdir", tmp_path / "out")
        assert code == 0
        info = json.loads(stdout)
        assert info["rows"] == 4 and info["failed_replications"] == 0
        assert (tmp_path / "out" / "summary.csv").exists() and (tmp_path / "out" / "rmse_scatter.svg").exists()

    def test_needs_outdir(self, capsys):
        code, _, err = _run(capsys, "bench", "--config", SMOKE)
        assert code == 2 and "outdir" in err


class TestValidate:
    def test_all_pass(self, capsys):
        code, stdout, _ = _run(capsys, "validate")
        assert code == 0
        lines = stdout.strip().splitlines()
        assert all(line.startswith("PASS") for line in lines[:-1])
        assert lines[-1].endswith("checks passed")

    def test_entry_point_module(self):
        res = subprocess.run([sys.executable, "-m", "mpe_lab.cli", "--help"], capture_output=True, text=True)
        assert res.returncode == 0 and "validate" in res.stdout
