import json
import math
import subprocess
import sys

import pytest

from preexp.cli import bundled_programs, main
from preexp.syntax import desugar, parse


def call(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, [json.loads(line) for line in out.splitlines()], err


class TestCheck:
    def test_all_bundled(self, capsys):
        names = bundled_programs()
        assert len(names) == 6
        code, records, err = call(capsys, "check", *names)
        assert code == 0 and err == ""
        assert [r["program"].split("/")[-1] for r in records] == names

    def test_example_path_falls_back_to_bundle(self, capsys):
        code, (record,), _ = call(capsys, "check", "examples/ex2.pl")
        assert code == 0
        assert "while" in record["core"] and record["return"] is None

    def test_return_reported(self, capsys):
        _, (record,), _ = call(capsys, "check", "epilogue")
        assert record["return"] == "t"

    def test_core_reparses(self, capsys, tmp_path):
        src = tmp_path / "p.pl"
        src.write_text("if (flip(0.5)) { x := 1 } else { x := 2 }")
        _, (record,), _ = call(capsys, "check", str(src))
        assert parse(record["core"]) == desugar(parse(src.read_text()))

    def test_parse_error(self, capsys, tmp_path):
        src = tmp_path / "bad.pl"
        src.write_text("x := (1")
        code, records, err = call(capsys, "check", str(src))
        assert code == 1 and records == [] and "1:8" in err

    def test_missing_file(self, capsys):
        code, _, err = call(capsys, "check", "nowhere.pl")
        assert code == 1 and "no such program" in err


class TestTransforms:
    def test_unfold(self, capsys):
        code, (record,), _ = call(capsys, "unfold", "ex2", "--depth", "2")
        assert code == 0 and record["depth"] == 2
        assert "while" not in record["source"] and "diverge" in record["source"]

    def test_negative_depth(self, capsys):
        code, _, _ = call(capsys, "unfold", "ex2", "--depth", "-1")
        assert code == 1

    def test_noscore(self, capsys):
        code, (record,), _ = call(capsys, "noscore", "ex1")
        assert code == 0 and "score" not in record["source"]
        assert record["source"].count("observe") == 2


class TestRun:
    def test_scripted(self, capsys):
        code, (record,), _ = call(capsys, "run", "ex2", "--draws", "0.1")
        assert code == 0
        assert record == {"program": "<bundled>/ex2.pl", "outcome": "terminated",
                          "state": {"b": 1.0, "k": 1.0, "u": 0.1}, "score": 0.5, "steps": 21}

    def test_exhausted(self, capsys):
        code, (record,), _ = call(capsys, "run", "limit", "--budget", "100")
        assert code == 0 and record["outcome"] == "exhausted" and record["steps"] == 100
        assert 0.5 < record["score"] < 1.0

    def test_diverged(self, capsys):
        code, (record,), _ = call(capsys, "run", "epilogue", "--unfold", "2", "--draws", "0.9")
        assert record["outcome"] == "diverged" and record["score"] == 1.0

    def test_state(self, capsys, tmp_path):
        src = tmp_path / "inc.pl"
        src.write_text("y := x + 1")
        code, (record,), _ = call(capsys, "run", str(src), "--state", '{"x": 2}')
        assert code == 0 and record["state"] == {"x": 2.0, "y": 3.0}

    @pytest.mark.parametrize("argv", [
        ["run", "ex2", "--state", "[1]"],
        ["run", "ex2", "--state", "{"],
        ["run", "ex2", "--draws", "a,b"],
        ["run", "ex1", "--draws", "0.5"],
        ["run", "ex2", "--budget", "0"],
        ["frobnicate"],
        [],
    ])
    def test_invalid(self, capsys, argv):
        code, records, err = call(capsys, *argv)
        assert code == 1 and records == [] and err


class TestEstimate:
    def test_wp(self, capsys):
        code, (record,), _ = call(capsys, "estimate", "ex2", "--samples", "20000",
                                  "--seed", "1", "--budget", "10000")
        assert code == 0 and record["mode"] == "wp"
        assert abs(record["mean"] - (math.pi ** 2 / 12 - 0.5)) < 4 * record["stderr"] + 1e-3
        assert sum(record["counts"].values()) == 20000

    def test_posterior(self, capsys):
        code, (record,), _ = call(capsys, "estimate", "epilogue", "--unfold", "3", "--post", "t",
                                  "--mode", "posterior", "--samples", "20000")
        assert code == 0 and abs(record["mean"] - 0.5) < 0.02
        assert "common random numbers" in record["normalizer"]

    def test_vanishing_normalizer(self, capsys, tmp_path):
        src = tmp_path / "never.pl"
        src.write_text("x :~ U; observe(x > 2)")
        code, _, err = call(capsys, "estimate", str(src), "--mode", "posterior",
                            "--samples", "100")
        assert code == 2 and "infeasible" in err

    def test_unbounded_wlp_is_capped(self, capsys):
        code, (record,), _ = call(capsys, "estimate", "ex1", "--post", "a * a", "--mode", "wlp",
                                  "--samples", "1000")
        assert code == 0 and 0.0 <= record["mean"] <= 1.0

    def test_bad_samples(self, capsys):
        assert call(capsys, "estimate", "ex2", "--samples", "0")[0] == 1


class TestQuad:
    def test_regression(self, capsys):
        code, (record,), _ = call(capsys, "quad", "ex1", "--post", "a*a", "--nodes", "512")
        assert code == 0 and record["value"] == pytest.approx(0.1017778717587168, abs=1e-7)

    def test_bracket(self, capsys):
        code, (record,), _ = call(capsys, "quad", "ex2", "--mode", "bracket", "--depth", "20",
                                  "--nodes", "256")
        assert code == 0 and record["low"] <= record["high"]

    def test_infeasible(self, capsys):
        code, records, err = call(capsys, "quad", "ex1", "--nodes", "512", "--ceiling", "1000")
        assert code == 2 and records == [] and "Monte Carlo" in err

    def test_environment_ceiling(self, capsys, monkeypatch):
        monkeypatch.setenv("PREEXP_COST_CEILING", "100")
        assert call(capsys, "quad", "ex1")[0] == 2


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "preexp", "check", "limit"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and proc.stderr == ""
    assert json.loads(proc.stdout)["program"] == "<bundled>/limit.pl"
