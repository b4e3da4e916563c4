"""
Tests for scenario parsing and validation
"""

import math
from pathlib import Path

import pytest

from boussinesq_lab.config import (
    CHECK_IDS,
    CheckRequest,
    ScenarioConfig,
    parse_check_request,
    parse_config,
    parse_config_text,
    parse_float,
    parse_points,
)
from boussinesq_lab.constants import ENV_OUTPUT_ROOT
from boussinesq_lab.exceptions import ConfigurationError

from .conftest import FIXTURES, SCENARIOS


class TestValues:
    @pytest.mark.parametrize(
        "text, expected",
        [
            ("0.5", 0.5),
            ("2/3", 2.0 / 3.0),
            ("8pi", 8.0 * math.pi),
            ("pi/4", math.pi / 4.0),
            ("-1e-3", -1e-3),
            ("inf", math.inf),
        ],
    )
    def test_parse_float(self, text, expected):
        assert parse_float(text) == pytest.approx(expected)

    @pytest.mark.parametrize("text", ["", "abc", "1..2", "pi pi"])
    def test_parse_float_rejects(self, text):
        with pytest.raises(ValueError):
            parse_float(text)

    def test_parse_points(self):
        assert parse_points("corners") == "corners"
        assert parse_points(" None ") == "none"
        assert parse_points("1, 1; -1, 0.5") == [(1.0, 1.0), (-1.0, 0.5)]
        with pytest.raises(ValueError):
            parse_points("1, 2, 3")


class TestScenarioFiles:
    def test_shipped_scenarios_parse(self):
        paths = sorted(SCENARIOS.glob("*.cfg")) + sorted(SCENARIOS.glob("sweep/*.cfg"))
        assert len(paths) >= 8
        for path in paths:
            cfg = parse_config(path)
            assert cfg.name == path.stem
            assert all(c.check_id in CHECK_IDS for c in cfg.checks)

    def test_euler_disc(self):
        cfg = parse_config(SCENARIOS / "euler_disc.cfg")
        assert cfg.grid["n"] == 256
        assert cfg.grid["length"] == pytest.approx(8.0 * math.pi)
        assert cfg.patch["kind"] == "disc" and not cfg.is_singular
        assert cfg.checks[0] == CheckRequest("conservation", "assert")
        assert cfg.formats == ["csv", "json", "bsqf"]

    def test_smooth_disc_twin(self):
        cfg = parse_config(SCENARIOS / "smooth_disc_twin.cfg")
        assert cfg.checks[0] == CheckRequest("uniqueness", "assert")
        assert cfg.analysis["twin_deltas"] == [1e-2, 1e-3, 1e-4]
        assert cfg.analysis["workers"] == 1

    def test_square_is_singular(self):
        cfg = parse_config(SCENARIOS / "square_plateau.cfg")
        assert cfg.is_singular
        assert cfg.singular_points() is None

    def test_every_violation_is_listed(self):
        with pytest.raises(ConfigurationError) as info:
            parse_config(FIXTURES / "bad.cfg")
        violations = info.value.violations
        assert "[patch] section is missing" in violations
        assert any(v.startswith("grid.n = 100") for v in violations)
        assert any(v.startswith("analysis.eps = 1.2") for v in violations)
        assert len(violations) == 3

    def test_missing_file(self, temp_dir):
        with pytest.raises(ConfigurationError, match="does not exist"):
            parse_config(temp_dir / "nope.cfg")


class TestValidation:
    def test_small_scenario(self, scenario_text):
        cfg = parse_config_text(scenario_text(), "small")
        assert cfg.density == {"amplitude": 0.05, "profile": "linear"}
        assert cfg.singular_points().shape == (0, 2)

    @pytest.mark.parametrize(
        "old, new, fragment",
        [
            ("n = 64", "n = 48", "grid.n = 48"),
            ("dt = 2e-2", "dt = -1", "time.dt"),
            ("t_end = 0.2", "t_end = 0.21", "whole number of steps"),
            ("kind = disc", "kind = hexagon", "patch.kind"),
            ("kind = disc", "kind = custom_levelset", "Python API"),
            ("profile = linear", "profile = wavy", "density.profile"),
            ("sample_pairs = 1000", "sample_pairs = 10", "below 1000"),
            ("[analysis]", "[analysis]\nmollify_mode = heat", "analysis.mollify_mode"),
            ("[analysis]", "[analysis]\ntwin_deltas = 1e-2", "analysis.twin_deltas"),
            ("[analysis]", "[analysis]\na = 2.5", "analysis.a"),
            ("[analysis]", "[analysis]\nfoo = 1", "analysis.foo is not a known key"),
            ("[checks]", "[extra]\n[checks]", "[extra] is not a known section"),
        ],
    )
    def test_rejects(self, scenario_text, old, new, fragment):
        with pytest.raises(ConfigurationError) as info:
            parse_config_text(scenario_text().replace(old, new, 1))
        assert any(fragment in v for v in info.value.violations)

    @pytest.mark.parametrize(
        "checks, fragment",
        [
            ("speed = assert", "unknown check id"),
            ("energy = maybe", "mode must be"),
            ("energy = fit:2", "only assert takes a constant"),
        ],
    )
    def test_rejects_checks(self, scenario_text, checks, fragment):
        with pytest.raises(ConfigurationError) as info:
            parse_config_text(scenario_text(checks=checks))
        assert any(fragment in v for v in info.value.violations)

    def test_check_request(self):
        assert parse_check_request("cz", "assert:2.5") == CheckRequest("cz", "assert", 2.5)
        assert parse_check_request("energy", "Report").mode == "report"
        with pytest.raises(ConfigurationError):
            parse_check_request("nope")


class TestOverridesAndOutput:
    def test_overrides(self, scenario_text):
        cfg = parse_config_text(scenario_text(), "small")
        updated = cfg.with_overrides(n=128, t_end=0.4, dt=None)
        assert updated.grid["n"] == 128 and updated.time["t_end"] == 0.4
        assert updated.time["dt"] == cfg.time["dt"]
        assert cfg.grid["n"] == 64

    def test_invalid_override(self, scenario_text):
        with pytest.raises(ConfigurationError):
            parse_config_text(scenario_text()).with_overrides(n=100)

    def test_output_root(self, scenario_text, monkeypatch, temp_dir):
        cfg = parse_config_text(scenario_text(), "small")
        monkeypatch.delenv(ENV_OUTPUT_ROOT, raising=False)
        assert cfg.output_dir() == Path("runs") / "small"
        monkeypatch.setenv(ENV_OUTPUT_ROOT, str(temp_dir))
        assert cfg.output_dir() == temp_dir / "small"
        assert cfg.output_dir("elsewhere") == Path("elsewhere") / "small"

    def test_dict_round_trip(self, scenario_text):
        cfg = parse_config_text(scenario_text(checks="cz = assert:3\nenergy = report"), "small")
        restored = ScenarioConfig.from_dict(cfg.to_dict())
        assert restored.checks == cfg.checks
        assert restored.to_dict() == cfg.to_dict()

    def test_dyadic_scales(self, scenario_text, small_grid):
        cfg = parse_config_text(scenario_text(), "small")
        scales = cfg.h_grid(small_grid)
        assert len(scales) == 1 and scales[0] == pytest.approx(math.exp(-1.0))

    def test_grid_too_coarse_for_dyadic_scales(self):
        cfg = parse_config(SCENARIOS / "euler_disc.cfg")
        with pytest.raises(ConfigurationError) as info:
            cfg.with_overrides(n=128)
        assert any("n >= 256" in v for v in info.value.violations)
