"""
boussinesq_lab - A numerical laboratory for Boussinesq vortex patches

Integrates the 2D inviscid Boussinesq system on a periodic box from patch
initial data, measures the norms the well-posedness theory is built on
(dyadic Hölder, conormal, Lσ, log-Lipschitz) and checks the a priori
estimates against the computed flow.

Basic Usage:
    >>> from boussinesq_lab import parse_config, run_scenario
    >>> cfg = parse_config("scenarios/euler_disc.cfg")
    >>> status = run_scenario(cfg, "runs")

    $ boussinesq-lab run scenarios/euler_disc.cfg --n 128
    $ boussinesq-lab report runs/euler_disc

Features:
    - Pseudo-spectral RK4 solver with CFL control and divergence detection
    - Littlewood-Paley blocks and the norms built on them
    - Lagrangian flow maps and transported vector-field families
    - Patch builders for smooth, corner and custom level-set boundaries
    - Estimate checks in fit, assert and report modes
    - Checksummed run directories with CSV/JSON reports
"""

from .boussinesq_solver import Diagnostics, RunSeries, SolverConfig, State, run, step
from .config import CHECK_IDS, CheckRequest, ScenarioConfig, parse_config, parse_config_text
from .dyadic_analyzer import (
    NormReport,
    conormal_norm,
    dyadic_blocks,
    holder_norm,
    l_sigma_norm,
    log_lipschitz_norm,
)
from .estimates import EstimateFit, assert_fit, calibrate, lifespan_bound
from .exceptions import (
    CFLViolationError,
    CheckFailedError,
    ChecksumError,
    ConfigurationError,
    ConstructionError,
    DegeneracyError,
    DivergenceError,
    DomainError,
    FitError,
    InsufficientDataError,
    LabError,
)
from .flow_transport import FlowMap, FrameFamily, VelocityHistory, integrate_flow, transport_frame
from .harness import calibrate_corpus, emit_reports, load_run, run_check, run_scenario
from .logger import Logger, logger
from .patch_lab import PatchSpec, build_patch, check_hypothesis_h
from .persistence import RunDirectory
from .report import CheckReport, CheckRow
from .spectral_core import GridSpec, ScalarField, VelocityField, biot_savart

__version__ = "0.1.0"
__all__ = [
    # Logging
    "logger",
    "Logger",
    # Grid and fields
    "GridSpec",
    "ScalarField",
    "VelocityField",
    "biot_savart",
    # Norms
    "NormReport",
    "dyadic_blocks",
    "holder_norm",
    "conormal_norm",
    "l_sigma_norm",
    "log_lipschitz_norm",
    # Solver
    "SolverConfig",
    "State",
    "Diagnostics",
    "RunSeries",
    "step",
    "run",
    # Transport
    "FlowMap",
    "FrameFamily",
    "VelocityHistory",
    "integrate_flow",
    "transport_frame",
    # Patches
    "PatchSpec",
    "build_patch",
    "check_hypothesis_h",
    # Estimates
    "CheckRow",
    "CheckReport",
    "EstimateFit",
    "calibrate",
    "assert_fit",
    "lifespan_bound",
    # Scenarios and runs
    "CHECK_IDS",
    "CheckRequest",
    "ScenarioConfig",
    "parse_config",
    "parse_config_text",
    "RunDirectory",
    "run_scenario",
    "run_check",
    "load_run",
    "emit_reports",
    "calibrate_corpus",
    # Exceptions
    "LabError",
    "ConfigurationError",
    "DomainError",
    "DegeneracyError",
    "DivergenceError",
    "CFLViolationError",
    "InsufficientDataError",
    "ConstructionError",
    "FitError",
    "CheckFailedError",
    "ChecksumError",
]
