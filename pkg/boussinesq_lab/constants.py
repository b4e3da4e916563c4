"""
Constants and default values for boussinesq_lab

This module holds the numerical defaults of the laboratory, the frozen
artifact contracts (CSV columns, binary field header, exit codes) and the
logging defaults.
"""

import math

# Analysis defaults
DEFAULT_EPS = 0.5
DEFAULT_A = 1.5
DEFAULT_PLATEAU_RADIUS = 0.3
DEFAULT_SAMPLE_PAIRS = 4096

# Grid defaults
DEFAULT_N = 256
DEFAULT_LENGTH = 8.0 * math.pi
DEFAULT_DEALIAS_FRACTION = 2.0 / 3.0
MIN_GRID_POINTS = 16

# Time stepping
DEFAULT_CFL_MAX = 0.5
MAX_DT_HALVINGS = 4
DEFAULT_DIAGNOSTICS_EVERY = 10

# Patch construction
DEFAULT_MOLLIFY_CELLS = 4.0
DEFAULT_CONTOUR_POINTS = 1024
ANTIALIAS_SUPERSAMPLE = 8

# Under-resolution: energy fraction in the outer band of the dealias shell
UNDER_RESOLUTION_TAIL = 1e-6
TAIL_BAND_START = 0.8

# Littlewood-Paley profile; every calibrated constant depends on it
LP_PROFILE_TAG = "lp-bump-v1"
LP_CHI_INNER = 0.75
LP_CHI_OUTER = 4.0 / 3.0

# Calibration
CALIBRATION_MARGIN = 1.5
DEFAULT_SEED = 20240611

# Twin runs and stationary solutions
TWIN_DELTAS = (1e-2, 1e-3, 1e-4)
TWIN_THETA_MIN = 0.5
TWIN_THETA_TOLERANCE = 1e-2
SIGMA_TOLERANCE = 1e-6
SIGMA_QUADRATURE_POINTS = 1 << 20
MOLLIFY_CHECK_PAIRS = 4

# Artifacts
SCHEMA_VERSION = 1
FIELD_MAGIC = b"BSQF"
FIELD_DUMP_SUFFIX = ".bsqf"
MANIFEST_NAME = "manifest.json"
NORM_STREAM_NAME = "norm_reports.jsonl"
CHECKS_NAME = "checks.json"
SUMMARY_CSV = "summary.csv"
SUMMARY_JSON = "summary.json"
SERIES_CSV = "series.csv"
BLOWUP_CSV = "blowup_profile.csv"
CONTOUR_PREFIX = "contour"
RUN_LOG_NAME = "run.log"
SCENARIO_NAME = "scenario.json"
TRACERS_NAME = "tracers.json"
FITS_NAME = "fits.json"
COMPARISON_CSV = "comparison.csv"
GRONWALL_CSV = "gronwall.csv"
PATCH_NAME = "patch.json"
FIELD_DIR = "fields"

SERIES_COLUMNS = (
    "t",
    "omega_linf",
    "omega_l2",
    "omega_la",
    "grad_rho_linf",
    "grad_rho_la",
    "v_accum",
    "w_accum",
    "ll_norm",
    "l_sigma",
    "holder_boundary",
)

SUMMARY_COLUMNS = ("check", "t", "p", "lhs", "rhs", "slack", "passed")

COMPARISON_COLUMNS = (
    "check",
    "t",
    "p_a",
    "lhs_a",
    "rhs_a",
    "slack_a",
    "passed_a",
    "p_b",
    "lhs_b",
    "rhs_b",
    "slack_b",
    "passed_b",
    "delta_slack",
)

# Commutator calibration torus and mollification levels
COMMUTATOR_GRID = (256, 2.0 * math.pi)
COMMUTATOR_LEVELS = (4, 8, 16, 32, 64)
COMMUTATOR_PAIRS = 20

# Frame transport is evaluated on at most this many snapshots of a run
MAX_FRAME_SNAPSHOTS = 9

# Exit codes
EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_DIVERGENCE = 3

# Environment variables
ENV_OUTPUT_ROOT = "BOUSSINESQ_LAB_OUTPUT_ROOT"
ENV_LEVEL = "BOUSSINESQ_LAB_LEVEL"
ENV_FORMAT = "BOUSSINESQ_LAB_FORMAT"

# Level name to number mapping
LEVEL_MAP = {
    "TRACE": 5,
    "DEBUG": 10,
    "DIAGNOSTIC": 15,
    "INFO": 20,
    "SUCCESS": 25,
    "WARNING": 30,
    "ERROR": 40,
    "CRITICAL": 50,
}

LEVEL_NAMES = {v: k for k, v in LEVEL_MAP.items()}

# Format strings
DEFAULT_FORMAT = "{time:%H:%M:%S} | {level:<10} | {run} | {name}:{function}:{line} - {message}"
SIMPLE_FORMAT = "{level:<10} | {message}"
FILE_FORMAT = (
    "{time:%Y-%m-%d %H:%M:%S.%f} | {level:<10} | {run} | {name}:{function}:{line} | {message}"
)

DEFAULT_ENCODING = "utf-8"
