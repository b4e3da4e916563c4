"""
Scenario files

A scenario is an INI file with the sections grid, time, patch, density,
analysis, checks and output. Every key is typed by ``SCHEMA``; unknown
sections and keys are errors, and every violation is collected before
``ConfigurationError`` is raised.

Example:
    [grid]
    n = 256
    length = 8pi

    [time]
    dt = 2e-3
    t_end = 1.0

    [patch]
    kind = disc
    radius = 1.0

    [checks]
    conservation = assert
"""

import configparser
import math
import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from .constants import (
    DEFAULT_A,
    DEFAULT_CFL_MAX,
    DEFAULT_CONTOUR_POINTS,
    DEFAULT_DEALIAS_FRACTION,
    DEFAULT_DIAGNOSTICS_EVERY,
    DEFAULT_EPS,
    DEFAULT_LENGTH,
    DEFAULT_N,
    DEFAULT_PLATEAU_RADIUS,
    DEFAULT_SAMPLE_PAIRS,
    DEFAULT_SEED,
    ENV_OUTPUT_ROOT,
    TWIN_DELTAS,
)
from .exceptions import ConfigurationError

CHECK_IDS = (
    "lp_bounds",
    "cz",
    "log_estimate",
    "lifespan",
    "plateau_density",
    "transport_holder",
    "energy",
    "frame_lower_bound",
    "distance_inclusion",
    "blowup_profile",
    "plateau_persistence",
    "conservation",
    "uniqueness",
    "stationary_sigma",
    "mollify_init",
)

PATCH_KINDS = ("disc", "ellipse", "square", "custom_levelset")
DENSITY_PROFILES = ("zero", "constant", "linear", "banded", "tapered")
OUTPUT_FORMATS = ("csv", "json", "bsqf")
MOLLIFIER_MODES = ("compact_mollifier", "spectral_cutoff")

_NUMBER = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)?\s*(pi)?\s*$")


def parse_float(text: str) -> float:
    """Float with optional fraction and pi suffix: '0.5', '2/3', '8pi', 'pi/4', 'inf'"""
    text = text.strip()
    if text.lower() in ("inf", "+inf", "-inf", "nan"):
        return float(text)
    if "/" in text:
        num, _, den = text.partition("/")
        return parse_float(num) / parse_float(den)
    match = _NUMBER.match(text)
    if not match or (match.group(1) is None and match.group(2) is None):
        raise ValueError(f"not a number: {text!r}")
    value = float(match.group(1)) if match.group(1) is not None else 1.0
    return value * math.pi if match.group(2) else value


def parse_int(text: str) -> int:
    value = parse_float(text)
    if not float(value).is_integer():
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


def parse_float_list(text: str) -> List[float]:
    return [parse_float(item) for item in text.split(",") if item.strip()]


def parse_points(text: str) -> Union[str, List[Tuple[float, float]]]:
    """'corners', 'none' or 'x1, y1; x2, y2'"""
    if text.strip().lower() in ("corners", "none", ""):
        return text.strip().lower() or "none"
    points = []
    for item in text.split(";"):
        coords = parse_float_list(item)
        if len(coords) != 2:
            raise ValueError(f"point {item.strip()!r} does not have two coordinates")
        points.append((coords[0], coords[1]))
    return points


def parse_text(text: str) -> str:
    return text.strip()


# section -> key -> (parser, default); a default of REQUIRED makes the key mandatory
REQUIRED = object()

SCHEMA: Dict[str, Dict[str, Tuple[Callable[[str], Any], Any]]] = {
    "grid": {
        "n": (parse_int, DEFAULT_N),
        "length": (parse_float, DEFAULT_LENGTH),
        "dealias_fraction": (parse_float, DEFAULT_DEALIAS_FRACTION),
    },
    "time": {
        "dt": (parse_float, REQUIRED),
        "t_end": (parse_float, REQUIRED),
        "diagnostics_every": (parse_int, DEFAULT_DIAGNOSTICS_EVERY),
        "history_every": (parse_int, 1),
        "cfl_max": (parse_float, DEFAULT_CFL_MAX),
    },
    "patch": {
        "kind": (parse_text, REQUIRED),
        "radius": (parse_float, 1.0),
        "center": (parse_float_list, [0.0, 0.0]),
        "a": (parse_float, 1.0),
        "b": (parse_float, 0.5),
        "angle": (parse_float, 0.0),
        "half_side": (parse_float, 1.0),
        "vorticity": (parse_float, 1.0),
        "mollify_width": (parse_float, None),
        "singular_set": (parse_points, "corners"),
        "plateau_radius": (parse_float, DEFAULT_PLATEAU_RADIUS),
        "tangency_order": (parse_float, None),
        "contour_points": (parse_int, DEFAULT_CONTOUR_POINTS),
    },
    "density": {
        "amplitude": (parse_float, 0.0),
        "profile": (parse_text, "constant"),
    },
    "analysis": {
        "eps": (parse_float, DEFAULT_EPS),
        "a": (parse_float, DEFAULT_A),
        "h_grid": (parse_text, "dyadic"),
        "sample_pairs": (parse_int, DEFAULT_SAMPLE_PAIRS),
        "seed": (parse_int, DEFAULT_SEED),
        "constant": (parse_float, 1.0),
        "constant0": (parse_float, 1.0),
        "fits": (parse_text, ""),
        "contour_every": (parse_int, 1),
        "mollify_n": (parse_float, None),
        "mollify_mode": (parse_text, "compact_mollifier"),
        "twin_deltas": (parse_float_list, list(TWIN_DELTAS)),
        "workers": (parse_int, 1),
    },
    "output": {
        "directory": (parse_text, ""),
        "formats": (parse_text, "csv,json,bsqf"),
    },
}


@dataclass(frozen=True)
class CheckRequest:
    """One requested check

    Attributes:
        check_id: One of CHECK_IDS
        mode: 'fit', 'assert' or 'report'
        constant: Explicit constant of 'assert:<C>'
    """

    check_id: str
    mode: str = "assert"
    constant: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {"check": self.check_id, "mode": self.mode, "constant": self.constant}


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario

    Attributes:
        name: Scenario name (file stem by default)
        grid: [grid] values
        time: [time] values
        patch: [patch] values
        density: [density] values
        analysis: [analysis] values
        checks: Requested checks in file order
        output: [output] values
        source: File the scenario was read from
    """

    name: str
    grid: Dict[str, Any]
    time: Dict[str, Any]
    patch: Dict[str, Any]
    density: Dict[str, Any]
    analysis: Dict[str, Any]
    checks: Tuple[CheckRequest, ...] = ()
    output: Dict[str, Any] = field(default_factory=dict)
    source: str = ""

    @property
    def eps(self) -> float:
        return self.analysis["eps"]

    @property
    def a(self) -> float:
        return self.analysis["a"]

    @property
    def formats(self) -> List[str]:
        return [f.strip() for f in self.output["formats"].split(",") if f.strip()]

    @property
    def is_singular(self) -> bool:
        sigma = self.patch["singular_set"]
        if sigma == "corners":
            return self.patch["kind"] == "square"
        return sigma != "none" and len(sigma) > 0

    def singular_points(self) -> Optional[np.ndarray]:
        """Explicit Sigma_0, or None to use the shape's corners"""
        sigma = self.patch["singular_set"]
        if sigma == "corners":
            return None
        if sigma == "none":
            return np.zeros((0, 2))
        return np.asarray(sigma, dtype=np.float64)

    def h_grid(self, grid: Any) -> np.ndarray:
        from .dyadic_analyzer import dyadic_scales, validate_scales

        spec = self.analysis["h_grid"]
        if spec == "dyadic":
            return dyadic_scales(grid)
        return validate_scales(parse_float_list(spec), grid)

    def output_dir(self, root: Optional[Union[str, Path]] = None) -> Path:
        """Run directory; a relative output.directory is placed under the output root"""
        directory = Path(self.output["directory"] or self.name)
        if directory.is_absolute():
            return directory
        base = root if root is not None else os.environ.get(ENV_OUTPUT_ROOT, "runs")
        return Path(base) / directory

    def with_overrides(self, **overrides: Any) -> "ScenarioConfig":
        """Apply CLI overrides (n, t_end, dt); None values are ignored"""
        grid, time = dict(self.grid), dict(self.time)
        if overrides.get("n") is not None:
            grid["n"] = int(overrides["n"])
        for key in ("t_end", "dt"):
            if overrides.get(key) is not None:
                time[key] = float(overrides[key])
        updated = replace(self, grid=grid, time=time)
        _raise_if_invalid(updated, self.source)
        return updated

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "grid": dict(self.grid),
            "time": dict(self.time),
            "patch": {k: v for k, v in self.patch.items() if k != "level"},
            "density": dict(self.density),
            "analysis": dict(self.analysis),
            "checks": [c.to_dict() for c in self.checks],
            "output": dict(self.output),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], source: str = "") -> "ScenarioConfig":
        """Rebuild a scenario saved with ``to_dict`` (the scenario.json of a run)"""
        patch = dict(data["patch"])
        sigma = patch.get("singular_set")
        if isinstance(sigma, list):
            patch["singular_set"] = [tuple(p) for p in sigma]
        cfg = cls(
            name=data["name"],
            grid=dict(data["grid"]),
            time=dict(data["time"]),
            patch=patch,
            density=dict(data["density"]),
            analysis={
                **{key: default for key, (_, default) in SCHEMA["analysis"].items()},
                **data["analysis"],
            },
            checks=tuple(
                CheckRequest(c["check"], c["mode"], c.get("constant")) for c in data["checks"]
            ),
            output=dict(data["output"]),
            source=source,
        )
        _raise_if_invalid(cfg, source or data["name"])
        return cfg


def _parse_check(key: str, text: str, violations: List[str]) -> Optional[CheckRequest]:
    if key not in CHECK_IDS:
        violations.append(f"checks.{key}: unknown check id (known: {', '.join(CHECK_IDS)})")
        return None
    mode, _, constant = text.strip().partition(":")
    mode = mode.strip().lower()
    if mode not in ("fit", "assert", "report"):
        violations.append(
            f"checks.{key} = {text!r}: mode must be fit, assert, assert:<C> or report"
        )
        return None
    if constant:
        if mode != "assert":
            violations.append(f"checks.{key} = {text!r}: only assert takes a constant")
            return None
        try:
            return CheckRequest(key, mode, parse_float(constant))
        except ValueError as e:
            violations.append(f"checks.{key}: {e}")
            return None
    return CheckRequest(key, mode)


def parse_check_request(check_id: str, mode: str = "assert") -> CheckRequest:
    """Parse a check id and 'fit', 'assert', 'assert:<C>' or 'report' given outside a file

    Raises:
        ConfigurationError: Unknown id or malformed mode
    """
    violations: List[str] = []
    request = _parse_check(check_id, mode, violations)
    if request is None:
        raise ConfigurationError("invalid check request", violations)
    return request


def _validate(cfg: ScenarioConfig) -> List[str]:
    violations = []
    grid, time, patch, density, analysis = cfg.grid, cfg.time, cfg.patch, cfg.density, cfg.analysis
    n = grid["n"]
    if n < 16 or n & (n - 1):
        violations.append(f"grid.n = {n} must be a power of two >= 16")
    if not grid["length"] > 0.0:
        violations.append(f"grid.length = {grid['length']} must be positive")
    elif not violations and analysis["h_grid"] == "dyadic":
        finest = 2.0 * grid["length"] / n
        if finest > math.exp(-1.0):
            violations.append(
                f"grid.n = {n} leaves no dyadic scale: 2 dx = {finest:.4g} exceeds 1/e"
                f" (use n >= {2 ** math.ceil(math.log2(2.0 * math.e * grid['length']))})"
            )
    if not 0.0 < grid["dealias_fraction"] <= 1.0:
        violations.append(f"grid.dealias_fraction = {grid['dealias_fraction']} outside (0, 1]")
    if time["dt"] is not None and not time["dt"] > 0.0:
        violations.append(f"time.dt = {time['dt']} must be positive")
    if time["t_end"] is not None and not time["t_end"] >= 0.0:
        violations.append(f"time.t_end = {time['t_end']} must be nonnegative")
    if time["dt"] and time["t_end"]:
        steps = time["t_end"] / time["dt"]
        if abs(steps - round(steps)) > 1e-9 * max(steps, 1.0):
            violations.append(
                f"time.t_end = {time['t_end']} is not a whole number of steps dt = {time['dt']}"
            )
    if analysis["mollify_mode"] not in MOLLIFIER_MODES:
        violations.append(
            f"analysis.mollify_mode = {analysis['mollify_mode']!r}"
            f" is not one of {', '.join(MOLLIFIER_MODES)}"
        )
    if analysis["mollify_n"] is not None and not analysis["mollify_n"] > 0.0:
        violations.append(f"analysis.mollify_n = {analysis['mollify_n']} must be positive")
    if analysis["workers"] < 1:
        violations.append(f"analysis.workers = {analysis['workers']} must be at least 1")
    deltas = analysis["twin_deltas"]
    if len(set(deltas)) < 2 or len(set(deltas)) != len(deltas) or min(deltas) <= 0.0:
        violations.append(
            f"analysis.twin_deltas = {deltas} needs at least two distinct positive values"
        )
    if patch["kind"] is not None and patch["kind"] not in PATCH_KINDS:
        violations.append(f"patch.kind = {patch['kind']!r} is not one of {', '.join(PATCH_KINDS)}")
    if patch["kind"] == "custom_levelset":
        violations.append("patch.kind = custom_levelset needs a level function; use the Python API")
    if len(patch["center"]) != 2:
        violations.append("patch.center must have two coordinates")
    if not patch["plateau_radius"] > 0.0:
        violations.append(f"patch.plateau_radius = {patch['plateau_radius']} must be positive")
    if density["profile"] not in DENSITY_PROFILES:
        violations.append(
            f"density.profile = {density['profile']!r} is not one of {', '.join(DENSITY_PROFILES)}"
        )
    if not 0.0 < analysis["eps"] < 1.0:
        violations.append(
            f"analysis.eps = {analysis['eps']} outside the Hölder range 0 < ε < 1"
        )
    if not 1.0 < analysis["a"] < 2.0:
        hint = " (singular patches need grad rho0 in L^a)" if cfg.is_singular else ""
        violations.append(f"analysis.a = {analysis['a']} outside 1 < a < 2{hint}")
    if analysis["sample_pairs"] < 1000:
        violations.append(f"analysis.sample_pairs = {analysis['sample_pairs']} below 1000")
    if analysis["h_grid"] != "dyadic":
        try:
            parse_float_list(analysis["h_grid"])
        except ValueError as e:
            violations.append(f"analysis.h_grid: {e}")
    unknown = [f for f in cfg.formats if f not in OUTPUT_FORMATS]
    if unknown:
        violations.append(f"output.formats: unknown {', '.join(unknown)}")
    return violations


def _raise_if_invalid(cfg: ScenarioConfig, source: str) -> None:
    violations = _validate(cfg)
    if violations:
        raise ConfigurationError(f"invalid scenario {source}", violations)


def parse_config_text(
    text: str, name: str = "scenario", source: str = "<string>"
) -> ScenarioConfig:
    """Parse scenario text; see ``parse_config``"""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # type: ignore[assignment]
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigurationError(f"invalid scenario {source}", [str(e).splitlines()[0]]) from e

    violations: List[str] = []
    values: Dict[str, Dict[str, Any]] = {}
    for section in parser.sections():
        if section not in SCHEMA and section != "checks":
            violations.append(f"[{section}] is not a known section")
    for section, keys in SCHEMA.items():
        if section == "patch" and not parser.has_section("patch"):
            violations.append("[patch] section is missing")
        raw = parser[section] if parser.has_section(section) else {}
        parsed: Dict[str, Any] = {}
        for key in raw:
            if key not in keys:
                violations.append(f"{section}.{key} is not a known key")
        for key, (convert, default) in keys.items():
            if key in raw:
                try:
                    parsed[key] = convert(raw[key])
                except ValueError as e:
                    violations.append(f"{section}.{key}: {e}")
                    parsed[key] = default if default is not REQUIRED else None
            elif default is REQUIRED:
                if section != "patch" or parser.has_section("patch"):
                    violations.append(f"{section}.{key} is required")
                parsed[key] = None
            else:
                parsed[key] = default
        values[section] = parsed

    checks = []
    if parser.has_section("checks"):
        for key, text_value in parser["checks"].items():
            request = _parse_check(key, text_value, violations)
            if request is not None:
                checks.append(request)

    cfg = ScenarioConfig(
        name=name,
        grid=values["grid"],
        time=values["time"],
        patch=values["patch"],
        density=values["density"],
        analysis=values["analysis"],
        checks=tuple(checks),
        output=values["output"],
        source=source,
    )
    violations.extend(_validate(cfg))
    if violations:
        raise ConfigurationError(f"invalid scenario {source}", violations)
    return cfg


def parse_config(path: Union[str, Path]) -> ScenarioConfig:
    """Read and validate a scenario file

    Raises:
        ConfigurationError: Missing file, unknown section or key, bad value;
            lists every violation

    Example:
        >>> cfg = parse_config("scenarios/euler_disc.cfg")
        >>> cfg.patch["kind"]
        'disc'
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"invalid scenario {path}", [f"file {path} does not exist"])
    return parse_config_text(path.read_text(encoding="utf-8"), path.stem, str(path))
