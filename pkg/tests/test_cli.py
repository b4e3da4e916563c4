"""
Tests for the boussinesq-lab command line
"""

import json

import pytest

from boussinesq_lab.cli import build_parser, main
from boussinesq_lab.constants import (
    ENV_OUTPUT_ROOT,
    EXIT_CHECK_FAILED,
    EXIT_CONFIG_ERROR,
    EXIT_DIVERGENCE,
    EXIT_OK,
)

from .conftest import FIXTURES


@pytest.fixture
def scenario_file(temp_dir, scenario_text):
    def make(name="small", **kwargs):
        path = temp_dir / f"{name}.cfg"
        path.write_text(scenario_text(**kwargs))
        return path

    return make


class TestParser:
    def test_verbs(self):
        parser = build_parser()
        args = parser.parse_args(["run", "x.cfg", "--n", "128", "--t-end", "0.5"])
        assert (args.verb, args.n, args.t_end, args.dt) == ("run", 128, 0.5, None)
        args = parser.parse_args(["check", "runs/x", "energy"])
        assert args.mode == "assert"
        args = parser.parse_args(["calibrate", "sweep", "--holdout", "a,b"])
        assert args.holdout == "a,b"

    def test_unknown_check_id(self):
        with pytest.raises(SystemExit) as info:
            main(["check", "runs/x", "speed"])
        assert info.value.code == 2


class TestExitCodes:
    def test_bad_scenario(self):
        assert main(["run", str(FIXTURES / "bad.cfg")]) == EXIT_CONFIG_ERROR

    def test_bad_override(self, scenario_file, temp_dir):
        path = scenario_file()
        assert main(["run", str(path), "--output-root", str(temp_dir), "--n", "100"]) == 2

    def test_missing_run_directory(self, temp_dir):
        assert main(["check", str(temp_dir / "nothing"), "energy"]) == EXIT_CONFIG_ERROR

    def test_empty_corpus(self, temp_dir):
        assert main(["calibrate", str(temp_dir)]) == EXIT_CONFIG_ERROR


@pytest.mark.integration
class TestRuns:
    def test_run_report_and_check(self, scenario_file, temp_dir, capsys):
        path = scenario_file(checks="energy = assert\ncz = report")
        root = temp_dir / "out"
        assert main(["run", str(path), "--output-root", str(root), "--t-end", "0.1"]) == EXIT_OK
        run_dir = root / "small"
        assert capsys.readouterr().out.strip() == str(run_dir)
        scenario = json.loads((run_dir / "scenario.json").read_text())
        assert scenario["time"]["t_end"] == 0.1

        assert main(["report", str(run_dir)]) == EXIT_OK
        assert main(["check", str(run_dir), "energy"]) == EXIT_OK
        assert main(["check", str(run_dir), "cz", "--mode", "assert:0"]) == EXIT_CHECK_FAILED
        summary = json.loads((run_dir / "summary.json").read_text())
        assert not summary["passed"]

    def test_output_root_from_environment(self, scenario_file, temp_dir, monkeypatch):
        monkeypatch.setenv(ENV_OUTPUT_ROOT, str(temp_dir / "env"))
        path = scenario_file(name="env_disc", checks="energy = report")
        assert main(["run", str(path), "--t-end", "0.04"]) == EXIT_OK
        assert (temp_dir / "env" / "env_disc" / "manifest.json").is_file()

    def test_divergence(self, scenario_file, temp_dir):
        path = scenario_file(name="violent", checks="energy = report")
        text = path.read_text().replace("radius = 1.0", "radius = 1.0\nvorticity = 1e4")
        path.write_text(text)
        code = main(["run", str(path), "--output-root", str(temp_dir)])
        assert code == EXIT_DIVERGENCE
        manifest = json.loads((temp_dir / "violent" / "manifest.json").read_text())
        assert manifest["meta"]["completed"] is False
