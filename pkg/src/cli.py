"""
Command-line front end.

Subcommands: ``test``, ``tune``, ``cv``, ``nulltable`` and ``simulate``.
Reports go to stdout or ``--out`` as JSON (test, tune, cv) or CSV
(nulltable, simulate); log records go to stderr.
"""

import argparse
import io
import json
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog
from pydantic import ValidationError

from src import __version__
from src.config import Settings, get_settings
from src.errors import CSDError, DataFileError, DegenerateSplitError, TargetError
from src.models import RefinedSpec, StatisticKind, TestConfig
from src.services.datafile import parse_csv
from src.services.designs import CASES
from src.services.induced_order import rdd_split
from src.services.manifest import ManifestManager
from src.services.nulldist import (
    achieved_level,
    critical_value,
    critical_value_table,
    limiting_critical_value,
    null_distribution,
    scaled_critical_value,
    statistic_null_distribution,
)
from src.services.refined import refined_critical_value
from src.services.runner import rdd_tuning, run_multi_target, run_rdd, select_q
from src.services.simbench import SimOverrides, run_grid
from src.utils.logging import LEVELS, bind_run_context, setup_logging
from src.utils.validation import InputValidator, require

logger = structlog.get_logger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2

# (report text, format, resolved config)
Report = Tuple[str, str, Dict[str, Any]]


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def to_json(payload: Dict[str, Any]) -> str:
    """Stable JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n"


def to_csv(rows: Sequence[Dict[str, Any]]) -> str:
    buffer = io.StringIO()
    pd.DataFrame(list(rows)).to_csv(buffer, index=False, lineterminator="\n")
    return buffer.getvalue()


def build_parser(settings: Settings) -> argparse.ArgumentParser:
    """Argument parser with defaults taken from ``settings``."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--log-level",
        type=str.upper,
        choices=LEVELS,
        default=settings.log_level.upper(),
        help="Log level for stderr records",
    )
    common.add_argument("--out", type=Path, default=None, help="Report path (stdout when omitted)")

    statistic = argparse.ArgumentParser(add_help=False)
    statistic.add_argument("--statistic", choices=[k.value for k in StatisticKind], default=StatisticKind.KS.value)

    null = argparse.ArgumentParser(add_help=False)
    null.add_argument("--method", choices=["auto", "exact", "mc"], default="auto", help="Critical value engine")
    null.add_argument("--draws", type=int, default=settings.mc_draws, help="Monte Carlo draws")
    null.add_argument("--seed", type=int, default=settings.seed, help="Monte Carlo root seed")

    rdd = argparse.ArgumentParser(add_help=False)
    rdd.add_argument("--cutoff", type=float, default=None, help="RDD cutoff; the data file has no group column")
    rdd.add_argument("--y-side", choices=["below", "above"], default="below", help="Side of the cutoff treated as Y")
    rdd.add_argument("--rdd-moments", choices=["side", "pooled"], default="side", help="Tuning moments in RDD mode")

    parser = argparse.ArgumentParser(
        prog="csd",
        description="Conditional stochastic dominance tests with induced order statistics",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", parents=[common, statistic, null, rdd], help="Test dominance at target points")
    p.add_argument("data", type=Path)
    p.add_argument("--alpha", type=float, default=settings.alpha)
    p.add_argument("--target", type=float, action="append", default=[], help="Target covariate value (repeatable)")
    p.add_argument("--qy", type=int, default=None, help="Manual q_y (requires --qx)")
    p.add_argument("--qx", type=int, default=None, help="Manual q_x (requires --qy)")
    p.add_argument("--refined-r", type=int, default=None, help="Refined critical value with support size r")
    p.add_argument("--refined-auto", action="store_true", help="Refined critical value with r estimated from the data")

    p = sub.add_parser("tune", parents=[common, rdd], help="Rule-of-thumb q at target points")
    p.add_argument("data", type=Path)
    p.add_argument("--target", type=float, action="append", default=[])

    p = sub.add_parser("cv", parents=[common, statistic, null], help="Critical value for one (q_y, q_x)")
    p.add_argument("--qy", type=int, required=True)
    p.add_argument("--qx", type=int, required=True)
    p.add_argument("--alpha", type=float, default=settings.alpha)
    p.add_argument("--refined-r", type=int, default=None)

    p = sub.add_parser("nulltable", parents=[common, null], help="Critical value table as CSV")
    p.add_argument("--qy", type=int, nargs="+", required=True)
    p.add_argument("--qx", type=int, nargs="+", required=True)
    p.add_argument("--alpha", type=float, nargs="+", required=True)

    p = sub.add_parser("simulate", parents=[common, statistic], help="Monte Carlo size and power study")
    p.add_argument("--design", type=int, action="append", required=True, choices=range(1, 8))
    p.add_argument("--case", action="append", required=True, choices=CASES)
    p.add_argument("--n", type=int, action="append", required=True)
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--seed", type=int, default=settings.seed)
    p.add_argument("--refined", action="store_true", help="Also run the refined test")
    p.add_argument("--workers", type=int, default=settings.workers)

    return parser


def _manual_q(args: argparse.Namespace) -> List[Tuple[int, int]]:
    if args.qy is None and args.qx is None:
        return []
    require((args.qy is not None and args.qx is not None, "--qy and --qx must be given together"))
    return [(args.qy, args.qx)]


def _refined_spec(args: argparse.Namespace, settings: Settings) -> Optional[RefinedSpec]:
    if args.refined_r is None and not getattr(args, "refined_auto", False):
        return None
    return RefinedSpec(
        r=args.refined_r,
        grid_resolution=settings.refined_grid_resolution,
        refinement_iterations=settings.refined_iterations,
        max_grid_tuples=settings.refined_max_grid_tuples,
    )


def run_test_command(args: argparse.Namespace, settings: Settings) -> Report:
    manual_q = _manual_q(args)
    config = TestConfig(
        alpha=args.alpha,
        targets=args.target,
        statistic=args.statistic,
        q_mode="manual" if manual_q else "auto",
        manual_q=manual_q,
        cv_method=args.method,
        draws=args.draws,
        seed=args.seed,
        refined=_refined_spec(args, settings),
        rdd_cutoff=args.cutoff,
        rdd_y_side=args.y_side,
        rdd_moments=args.rdd_moments,
    )
    if args.cutoff is not None:
        data = parse_csv(args.data, rdd=True)
        outcome = run_rdd(data.sample, config, settings)
    else:
        require((len(args.target) >= 1, "at least one --target is required"))
        data = parse_csv(args.data)
        outcome = run_multi_target(data.ysample, data.xsample, config, settings=settings)
    report = outcome.to_dict()
    return to_json(report), "json", report["config"]


def run_tune_command(args: argparse.Namespace, settings: Settings) -> Report:
    targets = list(args.target)
    tuning = None
    if args.cutoff is not None:
        data = parse_csv(args.data, rdd=True)
        targets = targets or [args.cutoff]
        ysample, xsample = rdd_split(data.sample, args.cutoff, args.y_side)
        tuning = rdd_tuning(data.sample, ysample, xsample, args.rdd_moments, settings)
    else:
        require((len(targets) >= 1, "at least one --target is required"))
        data = parse_csv(args.data)
        ysample, xsample = data.ysample, data.xsample

    rows = []
    for z0 in sorted(targets):
        try:
            q_y, q_x, detail = select_q(ysample, xsample, z0, tuning, settings)
        except CSDError as e:
            raise TargetError(z0, e) from e
        rows.append({"target": z0, "q_y": q_y, "q_x": q_x, **detail})

    config = {"targets": sorted(targets), "cutoff": args.cutoff, "y_side": args.y_side, "rdd_moments": args.rdd_moments}
    return to_json({"config": config, "targets": rows}), "json", config


def run_cv_command(args: argparse.Namespace, settings: Settings) -> Report:
    require(InputValidator.validate_count(args.qy, "q_y"))
    require(InputValidator.validate_count(args.qx, "q_x"))
    require(InputValidator.validate_alpha(args.alpha))
    kind = StatisticKind(args.statistic)
    if kind == StatisticKind.KS:
        nd = null_distribution(args.qy, args.qx, args.method, args.draws, args.seed, settings)
    else:
        nd = statistic_null_distribution(kind, args.qy, args.qx, args.method, args.draws, args.seed, settings)

    c = critical_value(nd, args.alpha)
    report: Dict[str, Any] = {
        "q_y": args.qy,
        "q_x": args.qx,
        "alpha": args.alpha,
        "statistic": kind.value,
        "critical_value": c,
        "achieved_level": achieved_level(nd, args.alpha),
        "null": nd.describe(),
    }
    if kind == StatisticKind.KS:
        report["scaled_critical_value"] = scaled_critical_value(args.qy, args.qx, c)
        report["limiting_critical_value"] = limiting_critical_value(args.alpha)
    if args.refined_r is not None:
        require((kind == StatisticKind.KS, "the refined critical value applies to the KS statistic only"))
        refined = refined_critical_value(args.qy, args.qx, args.refined_r, args.alpha, _refined_spec(args, settings))
        report["refined"] = {
            "r": refined.r,
            "critical_value": refined.value,
            "c_lb": refined.c_lb,
            "c_ub": refined.c_ub,
            "minimizing_tuple": list(refined.minimizing_tuple),
            "minimum_probability": refined.minimum_probability,
            "grid_points": refined.grid_points,
            "warnings": list(refined.warnings),
        }

    config = {k: report[k] for k in ("q_y", "q_x", "alpha", "statistic")}
    config.update({"method": args.method, "draws": args.draws, "seed": args.seed, "refined_r": args.refined_r})
    return to_json(report), "json", config


def run_nulltable_command(args: argparse.Namespace, settings: Settings) -> Report:
    for alpha in args.alpha:
        require(InputValidator.validate_alpha(alpha))
    rows = critical_value_table(args.qy, args.qx, args.alpha, args.method, args.draws, args.seed, settings)
    for row in rows:
        row["scaled_c"] = scaled_critical_value(row["q_y"], row["q_x"], row["c"])
        row["limiting_c"] = limiting_critical_value(row["alpha"])
    config = {"q_y": args.qy, "q_x": args.qx, "alpha": args.alpha, "method": args.method, "draws": args.draws, "seed": args.seed}
    return to_csv(rows), "csv", config


def run_simulate_command(args: argparse.Namespace, settings: Settings) -> Report:
    overrides = SimOverrides(
        statistic=args.statistic,
        refined=args.refined,
        refined_spec=RefinedSpec(
            grid_resolution=settings.refined_grid_resolution,
            refinement_iterations=settings.refined_iterations,
            max_grid_tuples=settings.refined_max_grid_tuples,
        ) if args.refined else None,
    )
    results = run_grid(
        args.design,
        args.case,
        args.n,
        args.alpha,
        args.reps,
        args.seed,
        overrides=overrides,
        workers=args.workers,
        settings=settings,
    )
    rows = [result.to_row() for result in results]
    config = {
        "designs": args.design,
        "cases": args.case,
        "n": args.n,
        "reps": args.reps,
        "alpha": args.alpha,
        "seed": args.seed,
        "statistic": args.statistic,
        "refined": args.refined,
    }
    return to_csv(rows), "csv", config


COMMANDS: Dict[str, Callable[[argparse.Namespace, Settings], Report]] = {
    "test": run_test_command,
    "tune": run_tune_command,
    "cv": run_cv_command,
    "nulltable": run_nulltable_command,
    "simulate": run_simulate_command,
}


def _error_payload(error: Exception) -> Dict[str, Any]:
    payload: Dict[str, Any] = {"error": type(error).__name__, "message": str(error)}
    if isinstance(error, DataFileError) and error.line is not None:
        payload["line"] = error.line
    if isinstance(error, TargetError):
        payload["target"] = error.target
        payload["cause"] = type(error.cause).__name__
    if isinstance(error, DegenerateSplitError):
        payload["side"] = error.side
        payload["cutoff"] = error.cutoff
    if isinstance(error, OSError) and error.filename is not None:
        payload["path"] = str(error.filename)
    return payload


def _emit(text: str, out: Optional[Path]) -> None:
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as f:
        f.write(text)
    logger.info("Report written", path=str(out))


def dispatch(argv: Sequence[str], settings: Optional[Settings] = None) -> int:
    """
    Parse ``argv``, run the subcommand and write its report.

    Args:
        argv: Arguments without the program name
        settings: Toolkit settings (environment defaults)

    Returns:
        Exit code: 0 on success, 1 on a computation or input error, 2 on a usage error
    """
    settings = settings or get_settings()
    argv = list(argv)
    try:
        args = build_parser(settings).parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else (EXIT_OK if e.code is None else EXIT_USAGE)

    setup_logging(args.log_level, settings.log_file)
    bind_run_context(command=args.command, seed=getattr(args, "seed", None))
    manager = ManifestManager(settings)

    try:
        manifest = manager.start(
            args.command,
            argv,
            inputs=[args.data] if getattr(args, "data", None) and args.data.exists() else [],
            seeds={"seed": getattr(args, "seed", None)},
        )
        logger.info("Command started", command=args.command)
        text, fmt, config = COMMANDS[args.command](args, settings)
        _emit(text, args.out)
        manager.save(manager.finish(manifest, config, args.out), args.out)
    except ValidationError as e:
        # pydantic reports field problems on the run configuration
        details = "; ".join(err["msg"] for err in e.errors())
        logger.error("Invalid configuration", command=args.command, error=details)
        print(json.dumps({"error": "InvalidParameterError", "message": details}, sort_keys=True), file=sys.stderr)
        return EXIT_ERROR
    except CSDError as e:
        logger.error("Command failed", command=args.command, error=str(e))
        print(json.dumps(_error_payload(e), sort_keys=True, default=_json_default), file=sys.stderr)
        return EXIT_ERROR
    except OSError as e:
        logger.error("File access failed", command=args.command, error=str(e))
        print(json.dumps(_error_payload(e), sort_keys=True, default=_json_default), file=sys.stderr)
        return EXIT_ERROR

    logger.info("Command completed", command=args.command, format=fmt)
    return EXIT_OK
