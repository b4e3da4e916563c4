"""
Command line entry point ``boussinesq-lab``

Verbs:
    run <cfg>                       build, integrate, check and persist a scenario
    check <run-dir> <check-id>      re-evaluate one check on a persisted run
    report <run-dir>                write summary.csv / summary.json
    calibrate <corpus-dir>          fit the constants of a scenario corpus

Exit codes: 0 pass, 1 check failure, 2 configuration or checksum error,
3 solver divergence.
"""

import argparse
import math
import sys
from typing import Callable, Dict, List, Optional

from .config import CHECK_IDS, parse_config
from .constants import (
    DEFAULT_FORMAT,
    DEFAULT_SEED,
    ENV_OUTPUT_ROOT,
    EXIT_CHECK_FAILED,
    EXIT_CONFIG_ERROR,
    EXIT_DIVERGENCE,
    EXIT_OK,
    LEVEL_MAP,
)
from .exceptions import (
    CFLViolationError,
    CheckFailedError,
    ChecksumError,
    ConfigurationError,
    DivergenceError,
    LabError,
)
from .harness import calibrate_corpus, check_fails, emit_reports, run_check, run_scenario
from .logger import logger


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="boussinesq-lab",
        description="Numerical laboratory for Boussinesq vortex patches.",
    )
    parser.add_argument(
        "--log-level",
        choices=sorted(LEVEL_MAP, key=LEVEL_MAP.get),
        help="stderr log level (default: $BOUSSINESQ_LAB_LEVEL or INFO)",
    )
    verbs = parser.add_subparsers(dest="verb", required=True)

    run = verbs.add_parser("run", help="run a scenario file")
    run.add_argument("config", help="scenario .cfg file")
    run.add_argument(
        "--output-root", help=f"root of relative output directories (default: ${ENV_OUTPUT_ROOT})"
    )
    run.add_argument("--n", type=int, help="override grid.n")
    run.add_argument("--t-end", type=float, help="override time.t_end")
    run.add_argument("--dt", type=float, help="override time.dt")

    check = verbs.add_parser("check", help="re-evaluate one check on a run directory")
    check.add_argument("run_dir")
    check.add_argument("check_id", choices=CHECK_IDS)
    check.add_argument(
        "--mode", default="assert", help="fit, assert, assert:<C> or report (default: assert)"
    )

    report = verbs.add_parser("report", help="consolidate the reports of a run directory")
    report.add_argument("run_dir")
    report.add_argument("--compare", metavar="RUN_DIR", help="second run to pair with")

    calibrate = verbs.add_parser("calibrate", help="fit constants over a corpus of scenarios")
    calibrate.add_argument("corpus_dir")
    calibrate.add_argument("--output-root")
    calibrate.add_argument("--seed", type=int, default=DEFAULT_SEED)
    calibrate.add_argument(
        "--holdout", default="", help="comma-separated scenario names kept out of the fit"
    )
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = parse_config(args.config).with_overrides(n=args.n, t_end=args.t_end, dt=args.dt)
    status = run_scenario(cfg, args.output_root)
    sys.stdout.write(f"{cfg.output_dir(args.output_root)}\n")
    return status


def _cmd_check(args: argparse.Namespace) -> int:
    report = run_check(args.run_dir, args.check_id, args.mode)
    if check_fails(report):
        violation = report.first_violation()
        raise CheckFailedError(
            report.check_id,
            violation.t if violation else math.nan,
            report.notes.get("error", ""),
        )
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    summary = emit_reports(args.run_dir, args.compare)
    logger.info(
        "{rows} summary rows for {scenario}; passed={passed}",
        rows=summary["rows"],
        scenario=summary["scenario"],
        passed=summary["passed"],
    )
    return EXIT_OK


def _cmd_calibrate(args: argparse.Namespace) -> int:
    holdout = [name.strip() for name in args.holdout.split(",") if name.strip()]
    path = calibrate_corpus(args.corpus_dir, args.output_root, args.seed, holdout)
    sys.stdout.write(f"{path}\n")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "run": _cmd_run,
    "check": _cmd_check,
    "report": _cmd_report,
    "calibrate": _cmd_calibrate,
}


@logger.catch(message="boussinesq-lab stopped on an unexpected error", reraise=True)
def _dispatch(args: argparse.Namespace) -> int:
    try:
        return COMMANDS[args.verb](args)
    except (ConfigurationError, ChecksumError) as e:
        logger.error("{error}", error=str(e))
        return EXIT_CONFIG_ERROR
    except (DivergenceError, CFLViolationError) as e:
        logger.error("{error}", error=str(e))
        return EXIT_DIVERGENCE
    except LabError as e:
        logger.error("{error}", error=str(e))
        return EXIT_CHECK_FAILED


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.log_level:
        logger.remove()
        logger.add(sys.stderr, level=args.log_level, format=DEFAULT_FORMAT)
    return _dispatch(args)


if __name__ == "__main__":
    sys.exit(main())
