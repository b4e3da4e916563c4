"""
Scenario orchestration

``run_scenario`` builds the patch, integrates it, evaluates the requested
checks and persists the run directory. ``run_check``, ``emit_reports`` and
``calibrate_corpus`` work from run directories already on disk; every read
goes through the checksum manifest first.

Example:
    >>> cfg = parse_config("scenarios/euler_disc.cfg")
    >>> status = run_scenario(cfg, output_root="runs")
    >>> summary = emit_reports("runs/euler_disc")
"""

import json
import math
import os
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .boussinesq_solver import Diagnostics, SolverConfig, State, run
from .config import CHECK_IDS, CheckRequest, ScenarioConfig, parse_check_request, parse_config
from .constants import (
    BLOWUP_CSV,
    CHECKS_NAME,
    COMMUTATOR_GRID,
    COMMUTATOR_LEVELS,
    COMMUTATOR_PAIRS,
    COMPARISON_COLUMNS,
    COMPARISON_CSV,
    CONTOUR_PREFIX,
    DEFAULT_ENCODING,
    DEFAULT_SEED,
    ENV_OUTPUT_ROOT,
    EXIT_CHECK_FAILED,
    EXIT_DIVERGENCE,
    EXIT_OK,
    FIELD_DIR,
    FIELD_DUMP_SUFFIX,
    FITS_NAME,
    GRONWALL_CSV,
    LP_PROFILE_TAG,
    MANIFEST_NAME,
    MAX_FRAME_SNAPSHOTS,
    MOLLIFY_CHECK_PAIRS,
    NORM_STREAM_NAME,
    PATCH_NAME,
    SCENARIO_NAME,
    SERIES_COLUMNS,
    SERIES_CSV,
    SUMMARY_COLUMNS,
    SUMMARY_CSV,
    SUMMARY_JSON,
    TRACERS_NAME,
)
from .dyadic_analyzer import NormReport, conormal_norm, inflate
from .estimates import (
    EstimateFit,
    assert_fit,
    calibrate,
    check_conservation,
    check_cz,
    check_energy_bound,
    check_lifespan,
    check_log_estimate,
    check_lp_bounds,
    check_plateau_density_bound,
    check_stationary_sigma,
    commutator_report,
    cz_ratios,
    default_mollify_level,
    gronwall_diagnostics,
    log_estimate_terms,
    lp_bound_ratios,
    minimal_constant,
    mollify_init,
    plateau_density_ratios,
    random_pairs,
    singular_lifespan_bound,
    transport_holder_norms,
    transport_holder_report,
    uniqueness_twin_experiment,
)
from .exceptions import (
    CFLViolationError,
    ConfigurationError,
    ConstructionError,
    DegeneracyError,
    DivergenceError,
    DomainError,
    FitError,
    InsufficientDataError,
)
from .flow_transport import (
    FrameFamily,
    VelocityHistory,
    check_distance_set_inclusion,
    check_frame_lower_bound,
    inverse_delta_scale,
    shoelace_area,
    transport_frame,
)
from .logger import logger
from .patch_lab import (
    BlowupProfile,
    PatchSpec,
    boundary_holder_estimate,
    build_admissible_family,
    build_patch,
    check_hypothesis_h,
    plateau_persistence,
    singular_blowup_profile,
    singular_family_at,
)
from .persistence import RunDirectory
from .report import CheckReport, CheckRow
from .spectral_core import GridSpec, ScalarField, spectral_derivative

PathLike = Union[str, Path]

# Errors that make a single check unevaluable without aborting the run
CHECK_ERRORS = (DomainError, DegeneracyError, InsufficientDataError, ConstructionError, FitError)

CZ_EXTRA_INDICES = (3.0, 6.0)
BLOWUP_R2_MIN = 0.9
BLOWUP_SLOPE_FACTOR = 2.0
SMOOTH_SLOPE_FRACTION = 0.05
CONTOUR_COLUMNS = ("s", "x1", "x2")


def grid_from_config(cfg: ScenarioConfig) -> GridSpec:
    return GridSpec(cfg.grid["n"], cfg.grid["length"], cfg.grid["dealias_fraction"])


def solver_config(cfg: ScenarioConfig) -> SolverConfig:
    time = cfg.time
    return SolverConfig(
        dt=time["dt"],
        t_end=time["t_end"],
        cfl_max=time["cfl_max"],
        dealias_fraction=cfg.grid["dealias_fraction"],
        diagnostics_every=time["diagnostics_every"],
        history_every=time["history_every"],
    )


def patch_from_config(
    cfg: ScenarioConfig, grid: Optional[GridSpec] = None
) -> Tuple[PatchSpec, State]:
    """Build the scenario's patch and initial state (deterministic in cfg)"""
    grid = grid or grid_from_config(cfg)
    patch = cfg.patch
    return build_patch(
        patch["kind"],
        patch,
        grid,
        mollify_width=patch["mollify_width"],
        profile=cfg.density["profile"],
        amplitude=cfg.density["amplitude"],
        plateau_radius=patch["plateau_radius"],
        singular_set=cfg.singular_points(),
        tangency_order=patch["tangency_order"],
        contour_points=patch["contour_points"],
        vorticity=patch["vorticity"],
    )


def boundary_hook(spec: PatchSpec, h: float) -> Callable[[State, NormReport], None]:
    """Diagnostics hook filling ``holder_boundary`` from the contour tracers"""

    def hook(state: State, report: NormReport) -> None:
        if state.tracers is None or spec.contour.shape[0] == 0:
            return
        try:
            report.holder_boundary = boundary_holder_estimate(
                state.tracers[spec.contour_slice],
                state.tracers[spec.singular_slice],
                h,
                state.grid,
            ).exponent
        except InsufficientDataError as e:
            logger.debug("boundary exponent skipped at t={t:.4g}: {error}", t=state.t, error=str(e))
            report.holder_boundary = math.nan

    return hook


@dataclass
class ScenarioRun:
    """A finished (or aborted) run as the checks see it

    Built in memory by ``run_scenario`` or read back from disk by
    ``load_run``; both give the same values, so every check is reproducible
    from the run directory alone.

    Attributes:
        cfg: The scenario
        spec: Rebuilt patch description
        reports: NormReport per snapshot
        snapshots: State per snapshot, tracers included
        completed: False when the solver stopped early
        directory: Run directory, when the run lives on disk
        constant0: C0 of the lifespan bounds
    """

    cfg: ScenarioConfig
    spec: PatchSpec
    reports: List[NormReport]
    snapshots: List[State]
    completed: bool = True
    directory: Optional[RunDirectory] = None
    constant0: float = field(default=1.0, init=False)
    _frames: Dict[int, FrameFamily] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if len(self.reports) != len(self.snapshots) or not self.reports:
            raise InsufficientDataError(len(self.snapshots), 1, "matching snapshots and reports")
        self.constant0 = self.cfg.analysis["constant0"]

    @property
    def grid(self) -> GridSpec:
        return self.spec.grid

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])

    @cached_property
    def h_grid(self) -> np.ndarray:
        return self.cfg.h_grid(self.grid)

    @property
    def check_scale(self) -> float:
        """Finest resolved scale; frames and distance sets are evaluated there"""
        return float(np.min(self.h_grid))

    @cached_property
    def source(self) -> VelocityHistory:
        return VelocityHistory(list(self.times), [s.omega for s in self.snapshots])

    @cached_property
    def frame_indices(self) -> List[int]:
        count = len(self.snapshots)
        if count <= MAX_FRAME_SNAPSHOTS:
            return list(range(count))
        return sorted({int(round(i)) for i in np.linspace(0, count - 1, MAX_FRAME_SNAPSHOTS)})

    def singular_points(self, k: int) -> np.ndarray:
        tracers = self.snapshots[k].tracers
        if tracers is None:
            return self.spec.singular_set
        return tracers[self.spec.singular_slice]

    def contour(self, k: int) -> np.ndarray:
        tracers = self.snapshots[k].tracers
        if tracers is None:
            return self.spec.contour
        return tracers[self.spec.contour_slice]

    def exclusion(self, k: int) -> Optional[np.ndarray]:
        """Neighbourhood of Sigma_t that holds the image of (Sigma_0)_h"""
        if not self.spec.is_singular:
            return None
        radius = inverse_delta_scale(self.check_scale, self.reports[k].ll_accum)
        return inflate(self.grid, self.singular_points(k), radius)

    @cached_property
    def family0(self) -> FrameFamily:
        if self.spec.is_singular:
            return singular_family_at(self.spec, self.check_scale)
        return build_admissible_family(self.spec)

    def frame(self, k: int) -> FrameFamily:
        if k not in self._frames:
            if k == 0:
                self._frames[k] = self.family0
            else:
                self._frames[k] = transport_frame(self.family0, self.source, self.snapshots[k].t)
        return self._frames[k]

    @cached_property
    def blowup_profiles(self) -> List[BlowupProfile]:
        if len(self.h_grid) < 3:
            raise InsufficientDataError(len(self.h_grid), 3, "scales in the analysis grid")
        return [
            singular_blowup_profile(s.v, self.singular_points(k), self.h_grid)
            for k, s in enumerate(self.snapshots)
        ]

    def areas(self) -> List[float]:
        if self.spec.contour.shape[0] == 0:
            return []
        return [shoelace_area(self.contour(k)) for k in range(len(self.snapshots))]

    @cached_property
    def transport_norms(self) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
        eps = self.cfg.eps
        return {
            "rho": transport_holder_norms([s.rho for s in self.snapshots], eps),
            "omega": transport_holder_norms(
                [s.omega for s in self.snapshots],
                eps - 1.0,
                [spectral_derivative(s.rho, 1) for s in self.snapshots],
            ),
        }

    def annotate_conormal(self) -> None:
        """Record the conormal norms of omega and rho along the transported family"""
        eps = self.cfg.eps
        for k in self.frame_indices:
            try:
                family = self.frame(k)
                exclude = self.exclusion(k)
                state = self.snapshots[k]
                self.reports[k].conormal[(eps, family.family_id)] = (
                    conormal_norm(state.omega, family, exclude, eps),
                    conormal_norm(state.rho, family, exclude, eps),
                )
            except CHECK_ERRORS as e:
                logger.warning("conormal norm skipped at snapshot {k}: {error}", k=k, error=str(e))


def _merge(check_id: str, parts: Iterable[CheckReport], C: Optional[float] = None) -> CheckReport:
    merged = CheckReport(check_id, mode="assert", constant=C)
    for part in parts:
        merged.rows.extend(part.rows)
        merged.notes.update(part.notes)
    return merged


def _skipped(check_id: str, reason: str) -> CheckReport:
    logger.info("check {check} skipped: {reason}", check=check_id, reason=reason)
    return CheckReport(check_id, notes={"skipped": reason})


def _lp_indices(run: ScenarioRun) -> Tuple[float, ...]:
    return (run.cfg.a, 2.0, math.inf)


def _cz_indices(run: ScenarioRun) -> Tuple[float, ...]:
    return (run.cfg.a, 2.0) + CZ_EXTRA_INDICES


def _eval_lp_bounds(run: ScenarioRun, C: float) -> CheckReport:
    return check_lp_bounds(run.reports, _lp_indices(run), C)


def _samples_lp_bounds(run: ScenarioRun) -> List[float]:
    return lp_bound_ratios(run.reports, _lp_indices(run))


def _eval_cz(run: ScenarioRun, C: float) -> CheckReport:
    p_list = _cz_indices(run)
    return _merge("cz", (check_cz(s.omega, p_list, C, s.t) for s in run.snapshots), C)


def _samples_cz(run: ScenarioRun) -> List[float]:
    p_list = _cz_indices(run)
    return [ratio for s in run.snapshots for ratio in cz_ratios(s.omega, p_list)]


def _eval_log_estimate(run: ScenarioRun, C: float) -> CheckReport:
    eps, a = run.cfg.eps, run.cfg.a
    parts = (
        check_log_estimate(
            run.snapshots[k].omega, run.frame(k), run.exclusion(k), eps, a, C, run.snapshots[k].t
        )
        for k in run.frame_indices
    )
    return _merge("log_estimate", parts, C)


def _samples_log_estimate(run: ScenarioRun) -> List[float]:
    eps, a = run.cfg.eps, run.cfg.a
    return [
        log_estimate_terms(run.snapshots[k].omega, run.frame(k), run.exclusion(k), eps, a).ratio
        for k in run.frame_indices
    ]


def _eval_lifespan(run: ScenarioRun, C: float) -> CheckReport:
    report = check_lifespan(run.reports, run.cfg.a, C, run.constant0, run.completed)
    if run.spec.is_singular:
        first = run.reports[0]
        omega0 = run.snapshots[0].omega
        report.notes["T_singular"] = singular_lifespan_bound(
            first.grad_rho_lp[math.inf],
            first.omega_lp[run.cfg.a] + first.omega_lp[math.inf],
            omega0.lp_norm(1.0) + first.omega_lp[math.inf],
            run.spec.plateau_radius,
            C,
            run.constant0,
        )
    return report


def _eval_plateau_density(run: ScenarioRun, C: float) -> CheckReport:
    if not run.spec.is_singular:
        return _skipped("plateau_density", "smooth patch has no plateau")
    return check_plateau_density_bound(run.reports, run.spec.plateau_radius, C)


def _samples_plateau_density(run: ScenarioRun) -> List[float]:
    if not run.spec.is_singular:
        return []
    return plateau_density_ratios(run.reports, run.spec.plateau_radius)


def _eval_transport_holder(run: ScenarioRun, C: float) -> CheckReport:
    eps = run.cfg.eps
    v_accum = [r.v_accum for r in run.reports]
    parts = []
    for name, r in (("rho", eps), ("omega", eps - 1.0)):
        norms, forcing = run.transport_norms[name]
        parts.append(transport_holder_report(run.times, norms, forcing, v_accum, r, C))
    return _merge("transport_holder", parts, C)


def _samples_transport_holder(run: ScenarioRun) -> List[float]:
    return [minimal_constant(lambda C: _eval_transport_holder(run, C))]


def _eval_energy(run: ScenarioRun, C: Optional[float]) -> CheckReport:
    return check_energy_bound(run.reports)


def _eval_conservation(run: ScenarioRun, C: Optional[float]) -> CheckReport:
    return check_conservation(run.reports, run.areas())


def _eval_frame_lower_bound(run: ScenarioRun, C: Optional[float]) -> CheckReport:
    indices = run.frame_indices
    return check_frame_lower_bound(
        run.family0,
        [(run.frame(k), run.reports[k].v_accum) for k in indices],
        run.exclusion(0),
        [run.exclusion(k) for k in indices],
    )


def _eval_distance_inclusion(run: ScenarioRun, C: Optional[float]) -> CheckReport:
    spec = run.spec
    a0 = spec.singular_set if spec.is_singular else spec.contour[:: max(1, len(spec.contour) // 64)]
    h = run.check_scale
    parts = (
        check_distance_set_inclusion(
            a0, run.source, h, run.snapshots[k].t, run.reports[k].ll_accum, run.grid
        )
        for k in run.frame_indices
    )
    return _merge("distance_inclusion", parts)


def _eval_blowup_profile(run: ScenarioRun, C: Optional[float]) -> CheckReport:
    """Singular: R^2 at t = 0 and slope within a factor 2 of the initial one up to t_final/2.
    Smooth: the masked sup does not grow with -log h."""
    profiles = run.blowup_profiles
    first = profiles[0]
    report = CheckReport("blowup_profile")
    if run.spec.is_singular:
        report.add(CheckRow.compare("blowup_profile.r2", 0.0, BLOWUP_R2_MIN, first.r_squared))
        horizon = 0.5 * run.snapshots[-1].t
        for state, profile in zip(run.snapshots, profiles):
            if state.t > horizon + 1e-12:
                break
            ratio = math.inf
            if profile.slope > 0.0 and first.slope > 0.0:
                ratio = abs(math.log(profile.slope / first.slope))
            report.add(
                CheckRow.compare(
                    "blowup_profile.slope", state.t, ratio, math.log(BLOWUP_SLOPE_FACTOR)
                )
            )
    else:
        for state, profile, rep in zip(run.snapshots, profiles, run.reports):
            report.add(
                CheckRow.compare(
                    "blowup_profile.slope",
                    state.t,
                    abs(profile.slope),
                    SMOOTH_SLOPE_FRACTION * rep.grad_v_linf,
                )
            )
    report.notes.update({"slope0": first.slope, "r_squared0": first.r_squared})
    return report


def _eval_plateau_persistence(run: ScenarioRun, C: Optional[float]) -> CheckReport:
    return plateau_persistence(run, run.spec)


def _eval_uniqueness(run: ScenarioRun, C: Optional[float]) -> CheckReport:
    if not run.completed:
        return _skipped("uniqueness", "the reference run did not complete")
    first = run.snapshots[0]
    result = uniqueness_twin_experiment(
        State.initial(first.omega, first.rho),
        solver_config(run.cfg),
        deltas=run.cfg.analysis["twin_deltas"],
    )
    result.report.notes["determinism"] = result.determinism
    return result.report


def _eval_stationary_sigma(run: ScenarioRun, C: Optional[float]) -> CheckReport:
    return check_stationary_sigma(run.grid)


def _eval_mollify_init(run: ScenarioRun, C: Optional[float]) -> CheckReport:
    analysis, spec = run.cfg.analysis, run.spec
    mode = analysis["mollify_mode"]
    n = analysis["mollify_n"] or default_mollify_level(run.grid, mode)
    data = mollify_init(
        run.snapshots[0].v,
        spec.rho0,
        n,
        mode,
        spec.singular_set if spec.is_singular else None,
        spec.plateau_radius,
        random_pairs(run.grid, MOLLIFY_CHECK_PAIRS, analysis["seed"]),
        analysis["eps"],
    )
    data.report.notes.update(n=n, mode=mode)
    return data.report


@dataclass(frozen=True)
class CheckEntry:
    """How one check id is evaluated

    Attributes:
        evaluate: (run, C) -> CheckReport; C is None for constant-free checks
        samples: Constants each sufficient for one observation, fitted by ``calibrate``
        uses_constant: Whether the bound carries a constant at all
    """

    evaluate: Callable[[ScenarioRun, Any], CheckReport]
    samples: Optional[Callable[[ScenarioRun], List[float]]] = None
    uses_constant: bool = True


CHECKS: Dict[str, CheckEntry] = {
    "lp_bounds": CheckEntry(_eval_lp_bounds, _samples_lp_bounds),
    "cz": CheckEntry(_eval_cz, _samples_cz),
    "log_estimate": CheckEntry(_eval_log_estimate, _samples_log_estimate),
    "lifespan": CheckEntry(_eval_lifespan),
    "plateau_density": CheckEntry(_eval_plateau_density, _samples_plateau_density),
    "transport_holder": CheckEntry(_eval_transport_holder, _samples_transport_holder),
    "energy": CheckEntry(_eval_energy, uses_constant=False),
    "frame_lower_bound": CheckEntry(_eval_frame_lower_bound, uses_constant=False),
    "distance_inclusion": CheckEntry(_eval_distance_inclusion, uses_constant=False),
    "blowup_profile": CheckEntry(_eval_blowup_profile, uses_constant=False),
    "plateau_persistence": CheckEntry(_eval_plateau_persistence, uses_constant=False),
    "conservation": CheckEntry(_eval_conservation, uses_constant=False),
    "uniqueness": CheckEntry(_eval_uniqueness, uses_constant=False),
    "stationary_sigma": CheckEntry(_eval_stationary_sigma, uses_constant=False),
    "mollify_init": CheckEntry(_eval_mollify_init, uses_constant=False),
}


def load_fits(path: PathLike) -> Dict[str, EstimateFit]:
    """Fits of a calibration corpus, verified against its manifest when one exists"""
    path = Path(path)
    directory = RunDirectory(path.parent, create=False)
    if directory.exists(MANIFEST_NAME):
        data = directory.read_json(path.name)
    else:
        data = json.loads(path.read_text(encoding=DEFAULT_ENCODING))
    return {key: EstimateFit.from_dict(value) for key, value in data["fits"].items()}


def fits_for(cfg: ScenarioConfig) -> Dict[str, EstimateFit]:
    """Load analysis.fits; relative names are tried from the cwd, then next to the scenario

    Raises:
        ConfigurationError: The file named in analysis.fits does not exist
    """
    name = cfg.analysis["fits"]
    if not name:
        return {}
    path = Path(name)
    if not path.is_absolute() and not path.is_file() and cfg.source:
        path = Path(cfg.source).parent / name
    if not path.is_file():
        raise ConfigurationError(
            f"invalid scenario {cfg.source or cfg.name}", [f"analysis.fits: {name} does not exist"]
        )
    return load_fits(path)


def _resolve_constant(
    run: ScenarioRun, request: CheckRequest, fits: Dict[str, EstimateFit]
) -> Tuple[float, Optional[EstimateFit]]:
    check_id = request.check_id
    entry = CHECKS[check_id]
    if request.mode == "assert" and request.constant is not None:
        return request.constant, None
    if request.mode == "assert":
        if check_id not in fits:
            raise ConfigurationError(
                "no calibrated constant",
                [f"checks.{check_id} = assert needs a {check_id} fit in analysis.fits"],
            )
        fit = fits[check_id]
        if fit.constant0 is not None:
            run.constant0 = fit.constant0
        return fit.constant, None
    if request.mode == "fit" and entry.samples is not None:
        fit = calibrate(
            check_id, entry.samples(run), run.cfg.analysis["seed"], corpus=run.cfg.name
        )
        return fit.constant, fit
    if request.mode == "fit":
        logger.warning(
            "{check} cannot be fitted on one run; using analysis.constant", check=check_id
        )
    return run.cfg.analysis["constant"], None


def evaluate_check(
    run: ScenarioRun, request: CheckRequest, fits: Optional[Dict[str, EstimateFit]] = None
) -> Tuple[CheckReport, Optional[EstimateFit]]:
    """Evaluate one requested check

    Evaluation errors (degenerate family, too few points, failed fit) are
    logged and recorded in ``notes['error']``; an assert-mode check with an
    error counts as failed.

    Raises:
        ConfigurationError: assert mode without a usable fit
    """
    entry = CHECKS[request.check_id]
    C: Optional[float] = None
    fit: Optional[EstimateFit] = None
    try:
        if entry.uses_constant:
            C, fit = _resolve_constant(run, request, fits or {})
        report = entry.evaluate(run, C)
    except CHECK_ERRORS as e:
        logger.error(
            "check {check} could not be evaluated: {error}", check=request.check_id, error=str(e)
        )
        report = CheckReport(request.check_id, notes={"error": str(e)})
    report.mode = request.mode
    report.constant = C
    if fit is not None:
        report.notes["fit"] = fit.to_dict()
    return report, fit


def check_fails(report: CheckReport) -> bool:
    """Only assert-mode checks decide the exit status"""
    return report.mode == "assert" and (not report.passed or "error" in report.notes)


def evaluate_checks(
    run: ScenarioRun, requests: Sequence[CheckRequest], workers: Optional[int] = None
) -> Tuple[List[CheckReport], Dict[str, EstimateFit]]:
    """Evaluate every request; reports keep the request order

    With more than one worker (analysis.workers by default) the checks run
    on a thread pool. They only read the run; the FFT-heavy ones release
    the GIL.
    """
    needs_fits = any(r.mode == "assert" and r.constant is None for r in requests)
    fits = fits_for(run.cfg) if needs_fits else {}
    workers = run.cfg.analysis["workers"] if workers is None else workers
    if workers > 1 and len(requests) > 1:
        with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="check") as pool:
            results = list(pool.map(lambda request: evaluate_check(run, request, fits), requests))
    else:
        results = [evaluate_check(run, request, fits) for request in requests]
    reports, fitted = [], {}
    for request, (report, fit) in zip(requests, results):
        reports.append(report)
        if fit is not None:
            fitted[request.check_id] = fit
    return reports, fitted


def _field_name(which: str, k: int) -> str:
    return f"{FIELD_DIR}/{which}_{k:04d}{FIELD_DUMP_SUFFIX}"


def _contour_rows(points: np.ndarray) -> List[Tuple[float, float, float]]:
    closed = np.vstack([points, points[:1]])
    s = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(closed, axis=0).T))[:-1]])
    return [(float(a), float(x), float(y)) for a, (x, y) in zip(s, points)]


def _slack_by_time(report: CheckReport) -> Dict[float, float]:
    out: Dict[float, float] = {}
    for row in report.rows:
        out[row.t] = min(out.get(row.t, math.inf), row.slack)
    return out


def _series_rows(
    reports: Sequence[NormReport], a: float, checks: Sequence[CheckReport]
) -> List[List[Any]]:
    slacks = [_slack_by_time(c) for c in checks]
    rows = []
    for r in reports:
        row: List[Any] = [
            r.t,
            r.omega_lp[math.inf],
            r.omega_lp[2.0],
            r.omega_lp[a],
            r.grad_rho_lp[math.inf],
            r.grad_rho_lp[a],
            r.v_accum,
            r.w_accum,
            r.ll_norm,
            r.l_sigma,
            r.holder_boundary,
        ]
        row.extend(s.get(r.t) for s in slacks)
        rows.append(row)
    return rows


def _checks_payload(scenario: str, checks: Sequence[CheckReport]) -> Dict[str, Any]:
    return {"scenario": scenario, "checks": [c.to_dict() for c in checks]}


def _fits_payload(corpus: str, seed: int, fits: Dict[str, EstimateFit]) -> Dict[str, Any]:
    return {
        "corpus": corpus,
        "seed": seed,
        "lp_profile": LP_PROFILE_TAG,
        "fits": {key: fit.to_dict() for key, fit in sorted(fits.items())},
    }


def persist_run(
    run_dir: RunDirectory,
    scenario_run: ScenarioRun,
    checks: Sequence[CheckReport],
    fits: Dict[str, EstimateFit],
) -> None:
    """Write every artifact of a run except the manifest and the summary"""
    cfg, spec = scenario_run.cfg, scenario_run.spec
    formats = cfg.formats
    run_dir.write_json(SCENARIO_NAME, cfg.to_dict())
    run_dir.write_json(PATCH_NAME, spec.to_dict())
    run_dir.write_reports(NORM_STREAM_NAME, scenario_run.reports)
    run_dir.write_json(
        TRACERS_NAME,
        {
            "singular": [spec.singular_slice.start, spec.singular_slice.stop],
            "contour": [spec.contour_slice.start, spec.contour_slice.stop],
            "plateau": [spec.plateau_slice.start, spec.plateau_slice.stop],
            "snapshots": [
                {"t": s.t, "step": s.step, "tracers": s.tracers} for s in scenario_run.snapshots
            ],
        },
    )
    if "bsqf" in formats:
        for k, state in enumerate(scenario_run.snapshots):
            run_dir.write_field(_field_name("omega", k), state.omega, state.t)
            run_dir.write_field(_field_name("rho", k), state.rho, state.t)
    run_dir.write_json(CHECKS_NAME, _checks_payload(cfg.name, checks))
    if fits:
        run_dir.write_json(FITS_NAME, _fits_payload(cfg.name, cfg.analysis["seed"], fits))
    if "csv" not in formats:
        return
    columns = SERIES_COLUMNS + tuple(f"slack.{c.check_id}" for c in checks)
    run_dir.write_csv(SERIES_CSV, columns, _series_rows(scenario_run.reports, cfg.a, checks))
    if spec.contour.shape[0]:
        every = cfg.analysis["contour_every"]
        for k in range(0, len(scenario_run.snapshots), every):
            run_dir.write_csv(
                f"{CONTOUR_PREFIX}_{k:04d}.csv",
                CONTOUR_COLUMNS,
                _contour_rows(scenario_run.contour(k)),
            )
    if spec.is_singular:
        try:
            profiles = scenario_run.blowup_profiles
        except InsufficientDataError as e:
            logger.warning("blowup profile not written: {error}", error=str(e))
        else:
            rows = [
                (state.t, h, sup)
                for state, profile in zip(scenario_run.snapshots, profiles)
                for h, sup in profile.rows()
            ]
            run_dir.write_csv(BLOWUP_CSV, ("t", "h", "masked_sup"), rows)


def _gronwall(run_dir: RunDirectory, scenario_run: ScenarioRun) -> None:
    cfg = scenario_run.cfg
    try:
        snapshots = [
            (
                scenario_run.snapshots[k].t,
                scenario_run.snapshots[k].omega,
                scenario_run.frame(k),
                scenario_run.reports[k].v_accum,
            )
            for k in scenario_run.frame_indices
        ]
    except CHECK_ERRORS as e:
        logger.warning("Gronwall diagnostics skipped: {error}", error=str(e))
        return
    rows = gronwall_diagnostics(snapshots, cfg.eps, cfg.analysis["constant"])
    if "csv" in cfg.formats:
        run_dir.write_csv(
            GRONWALL_CSV,
            ("t", "gamma", "upsilon"),
            [(r["t"], r["gamma"], r["upsilon"]) for r in rows],
        )


def run_scenario(cfg: ScenarioConfig, output_root: Optional[PathLike] = None) -> int:
    """Build, integrate, check and persist one scenario

    The run directory receives field dumps, the NormReport stream, check
    reports, plot-ready CSV files, the summary and a sha256 manifest; run.log
    holds the DEBUG log of the run.

    Returns:
        EXIT_OK, EXIT_CHECK_FAILED (an assert-mode check failed) or
        EXIT_DIVERGENCE (the solver stopped; partial artifacts are written)

    Raises:
        ConfigurationError: Invalid patch or missing calibration file
    """
    run_dir = RunDirectory(cfg.output_dir(output_root))
    handler_id = logger.add(run_dir.log_path, level="DEBUG", mode="w")
    try:
        with logger.contextualize(scenario=cfg.name):
            return _run_scenario(cfg, run_dir)
    finally:
        logger.remove(handler_id)


def _run_scenario(cfg: ScenarioConfig, run_dir: RunDirectory) -> int:
    grid = grid_from_config(cfg)
    spec, initial = patch_from_config(cfg, grid)
    meta: Dict[str, Any] = {
        "scenario": cfg.name,
        "source": cfg.source,
        "lp_profile": LP_PROFILE_TAG,
    }
    try:
        meta["hypothesis_h"] = check_hypothesis_h(spec)
        logger.info("hypothesis (H) constant c = {c:.4e}", c=meta["hypothesis_h"])
    except InsufficientDataError as e:
        logger.warning("hypothesis (H) not measurable: {error}", error=str(e))

    h_grid = cfg.h_grid(grid)
    diagnostics = Diagnostics(
        grid,
        cfg.eps,
        cfg.a,
        cfg.analysis["sample_pairs"],
        spec.singular_slice,
        h_grid,
        hooks=[boundary_hook(spec, float(np.min(h_grid)))],
    )
    status = EXIT_OK
    try:
        series = run(initial, solver_config(cfg), diagnostics, scenario=cfg.name)
    except (DivergenceError, CFLViolationError) as e:
        series = e.partial
        status = EXIT_DIVERGENCE

    scenario_run = ScenarioRun(
        cfg, spec, series.reports, series.snapshots, series.completed, directory=run_dir
    )
    checks, fits = evaluate_checks(scenario_run, cfg.checks)
    if status == EXIT_OK and any(check_fails(c) for c in checks):
        status = EXIT_CHECK_FAILED
    if any(c.check_id in ("log_estimate", "frame_lower_bound") for c in checks):
        scenario_run.annotate_conormal()
        _gronwall(run_dir, scenario_run)

    persist_run(run_dir, scenario_run, checks, fits)
    meta.update({"status": status, "completed": series.completed, "series": series.to_dict()})
    run_dir.write_manifest(meta)
    emit_reports(run_dir.path)
    if status == EXIT_OK:
        logger.success(
            "scenario {name} passed; artifacts in {path}", name=cfg.name, path=run_dir.path
        )
    else:
        logger.error("scenario {name} exited with status {status}", name=cfg.name, status=status)
    return status


def load_run(run_dir: PathLike) -> ScenarioRun:
    """Read a run directory back into a ScenarioRun

    Raises:
        ChecksumError: Any artifact differs from the manifest
        ConfigurationError: The run was written without field dumps
    """
    directory = RunDirectory(run_dir, create=False)
    directory.verify()
    meta = directory.read_manifest()["meta"]
    cfg = ScenarioConfig.from_dict(directory.read_json(SCENARIO_NAME), meta.get("source", ""))
    grid = grid_from_config(cfg)
    spec, _ = patch_from_config(cfg, grid)
    if not directory.exists(_field_name("omega", 0)):
        raise ConfigurationError(
            f"run {directory.path} has no field dumps",
            ["output.formats must include bsqf for checks to be re-run"],
        )
    reports = directory.read_reports(NORM_STREAM_NAME)
    snapshots = []
    for k, entry in enumerate(directory.read_json(TRACERS_NAME)["snapshots"]):
        omega, t = directory.read_field(_field_name("omega", k))
        rho, _ = directory.read_field(_field_name("rho", k))
        tracers = entry["tracers"]
        snapshots.append(
            State(
                t,
                ScalarField(grid, omega.values),
                ScalarField(grid, rho.values),
                None if tracers is None else np.asarray(tracers, dtype=np.float64),
                int(entry["step"]),
            )
        )
    return ScenarioRun(
        cfg, spec, reports, snapshots, bool(meta.get("completed", True)), directory=directory
    )


def _read_checks(directory: RunDirectory) -> List[CheckReport]:
    return [CheckReport.from_dict(c) for c in directory.read_json(CHECKS_NAME)["checks"]]


def _order(checks: Iterable[CheckReport]) -> List[CheckReport]:
    return sorted(checks, key=lambda c: CHECK_IDS.index(c.check_id))


def run_check(run_dir: PathLike, check_id: str, mode: str = "assert") -> CheckReport:
    """Evaluate one check on a persisted run and update its reports

    Raises:
        ConfigurationError: Unknown check id or mode, or missing field dumps
        ChecksumError: A persisted artifact was modified
    """
    request = parse_check_request(check_id, mode)
    scenario_run = load_run(run_dir)
    directory = scenario_run.directory
    assert directory is not None
    needs_fits = request.mode == "assert" and request.constant is None
    with logger.contextualize(scenario=scenario_run.cfg.name):
        report, fit = evaluate_check(
            scenario_run, request, fits_for(scenario_run.cfg) if needs_fits else None
        )
    manifest = directory.read_manifest()
    directory.checksums = dict(manifest["files"])
    checks = [c for c in _read_checks(directory) if c.check_id != check_id]
    directory.write_json(
        CHECKS_NAME, _checks_payload(scenario_run.cfg.name, _order(checks + [report]))
    )
    if fit is not None:
        fits: Dict[str, EstimateFit] = {}
        if directory.exists(FITS_NAME):
            fits = load_fits(directory.file(FITS_NAME))
        fits[check_id] = fit
        directory.write_json(
            FITS_NAME, _fits_payload(scenario_run.cfg.name, scenario_run.cfg.analysis["seed"], fits)
        )
    directory.write_manifest(manifest["meta"])
    emit_reports(directory.path)
    return report


def summary_rows(checks: Sequence[CheckReport]) -> List[Tuple[Any, ...]]:
    """One row per (check, snapshot time): the row of smallest slack, passing when all pass"""
    rows = []
    for report in checks:
        groups: Dict[float, List[CheckRow]] = defaultdict(list)
        for row in report.rows:
            groups[row.t].append(row)
        for t in sorted(groups, key=lambda value: (math.isnan(value), value)):
            group = groups[t]
            worst = min(group, key=lambda r: r.slack)
            rows.append(
                (
                    report.check_id,
                    t,
                    worst.p,
                    worst.lhs,
                    worst.rhs,
                    worst.slack,
                    all(r.passed for r in group),
                )
            )
    return rows


def compare_rows(
    rows_a: Sequence[Tuple[Any, ...]], rows_b: Sequence[Tuple[Any, ...]]
) -> List[Tuple[Any, ...]]:
    """Outer join of two summaries on (check, t) with delta_slack = slack_b - slack_a"""

    def keyed(rows: Sequence[Tuple[Any, ...]]) -> Dict[Tuple[str, float], Tuple[Any, ...]]:
        return {(row[0], round(row[1], 9)): row for row in rows}

    a, b = keyed(rows_a), keyed(rows_b)
    order = {check: i for i, check in enumerate(CHECK_IDS)}
    keys = sorted(set(a) | set(b), key=lambda k: (order.get(k[0], len(order)), k[1]))
    out = []
    for check, t in keys:
        left = a[(check, t)][2:] if (check, t) in a else (None,) * 5
        right = b[(check, t)][2:] if (check, t) in b else (None,) * 5
        delta = None
        if left[3] is not None and right[3] is not None:
            delta = right[3] - left[3]
        out.append((check, t) + tuple(left) + tuple(right) + (delta,))
    return out


def emit_reports(run_dir: PathLike, compare_dir: Optional[PathLike] = None) -> Dict[str, Any]:
    """Consolidated summary.csv and summary.json of a run directory

    With ``compare_dir`` the two runs are also joined on (check, t) into
    comparison.csv with paired columns and the slack difference.

    Raises:
        ChecksumError: Naming the first corrupt or missing artifact
    """
    directory = RunDirectory(run_dir, create=False)
    directory.verify()
    manifest = directory.read_manifest()
    directory.checksums = dict(manifest["files"])
    meta = manifest["meta"]
    checks = _read_checks(directory)
    rows = summary_rows(checks)
    directory.write_csv(SUMMARY_CSV, SUMMARY_COLUMNS, rows)
    summary: Dict[str, Any] = {
        "scenario": meta.get("scenario"),
        "status": meta.get("status"),
        "completed": meta.get("completed", True),
        "passed": not any(check_fails(c) for c in checks),
        "rows": len(rows),
        "checks": [
            {
                "check": c.check_id,
                "mode": c.mode,
                "constant": c.constant,
                "passed": c.passed and "error" not in c.notes,
                "min_slack": c.min_slack,
                "rows": len(c.rows),
                "error": c.notes.get("error"),
            }
            for c in checks
        ],
    }
    if compare_dir is not None:
        other = RunDirectory(compare_dir, create=False)
        other.verify()
        paired = compare_rows(rows, summary_rows(_read_checks(other)))
        directory.write_csv(COMPARISON_CSV, COMPARISON_COLUMNS, paired)
        deltas = [row[-1] for row in paired if row[-1] is not None]
        summary["comparison"] = {
            "against": other.read_manifest()["meta"].get("scenario", str(other.path)),
            "rows": len(paired),
            "min_delta_slack": min(deltas, default=None),
        }
    directory.write_json(SUMMARY_JSON, summary)
    directory.write_manifest(meta)
    return summary


def commutator_samples(seed: int = DEFAULT_SEED) -> List[float]:
    """Commutator ratios of random band-limited pairs at every resolvable level"""
    n, length = COMMUTATOR_GRID
    grid = GridSpec(n, length)
    levels = [m for m in COMMUTATOR_LEVELS if 1.0 / m >= grid.dx]
    pairs = random_pairs(grid, COMMUTATOR_PAIRS, seed)
    return [row.lhs for row in commutator_report(pairs, levels).rows]


def calibrate_corpus(
    corpus_dir: PathLike,
    output_root: Optional[PathLike] = None,
    seed: int = DEFAULT_SEED,
    holdout: Sequence[str] = (),
) -> Path:
    """Run every scenario of a corpus, fit each constant and write fits.json

    Scenarios named in ``holdout`` do not enter the fit; their samples are
    asserted against it and counted in ``violations``.

    Returns:
        Path of the written fits.json

    Raises:
        ConfigurationError: No scenarios in the corpus, or an invalid one
    """
    corpus = Path(corpus_dir)
    paths = sorted(corpus.glob("*.cfg"))
    if not paths:
        raise ConfigurationError(f"invalid corpus {corpus}", [f"no *.cfg scenarios in {corpus}"])
    root = Path(output_root if output_root is not None else os.environ.get(ENV_OUTPUT_ROOT, "runs"))
    train: Dict[str, List[float]] = defaultdict(list)
    held: Dict[str, List[float]] = defaultdict(list)
    used = []
    for path in paths:
        cfg = replace(parse_config(path), checks=())
        status = run_scenario(cfg, root)
        if status != EXIT_OK:
            logger.warning(
                "corpus scenario {name} exited with {status}; skipped",
                name=cfg.name,
                status=status,
            )
            continue
        used.append(cfg.name)
        scenario_run = load_run(cfg.output_dir(root))
        bucket = held if cfg.name in holdout else train
        for check_id, entry in CHECKS.items():
            if entry.samples is None:
                continue
            try:
                bucket[check_id].extend(entry.samples(scenario_run))
            except CHECK_ERRORS as e:
                logger.warning(
                    "{check} samples of {name} skipped: {error}",
                    check=check_id,
                    name=cfg.name,
                    error=str(e),
                )
    train["commutator"].extend(commutator_samples(seed))

    fits: Dict[str, EstimateFit] = {}
    for check_id, samples in sorted(train.items()):
        try:
            fit = calibrate(check_id, samples, seed, corpus=corpus.name)
        except FitError as e:
            logger.warning("no fit for {check}: {error}", check=check_id, error=str(e))
            continue
        if held.get(check_id):
            assert_fit(fit, held[check_id])
        fits[check_id] = fit

    target = RunDirectory(root / f"{corpus.name}_calibration")
    target.write_json(FITS_NAME, _fits_payload(corpus.name, seed, fits))
    target.write_manifest({"corpus": corpus.name, "scenarios": used, "holdout": list(holdout)})
    logger.success(
        "calibrated {k} constants on {m} scenarios of {corpus}",
        k=len(fits),
        m=len(used),
        corpus=corpus.name,
    )
    return target.file(FITS_NAME)
