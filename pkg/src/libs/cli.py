# src/libs/cli.py

import argparse
import json
import logging
import sys
from typing import Any, Dict, List, Optional, Sequence

from libs.complexity import build_counterexample, build_det_lb_instance, build_sto_lb_instance, complexity_report
from libs.core import load_instance, save_instance
from libs.errors import BairError, ConfigError, InstanceError
from libs.harness import (
    DEFAULT_CAPACITY,
    FIGURE_D_VALUES,
    check_lemma_grid,
    default_workers,
    figure_compare,
    gen_synthetic,
    lemma_frame,
    read_config,
    run_experiment,
    write_figure,
    write_results,
)
from libs.logger import LOG_FILE, resolve_log_level, setup_logger
from libs.utils import DEFAULT_CONFIG_FILE, get_setting, load_config, save_to_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FAILURE = 2

# ================================
# Argument Parsing
# ================================


class UsageError(ConfigError):
    """Bad command-line usage."""


class CliParser(argparse.ArgumentParser):
    """ArgumentParser that raises instead of exiting on bad usage."""

    def error(self, message: str) -> None:
        raise UsageError(f"{self.prog}: {message}")


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from e


def build_parser() -> CliParser:
    parser = CliParser(
        prog="bairc",
        description="Best arm identification under resource constraints: instances, bounds and Monte Carlo runs.",
    )
    parser.add_argument(
        "--settings", default=DEFAULT_CONFIG_FILE, help="Application settings YAML (default: %(default)s)."
    )
    parser.add_argument("--log-level", default=None, help="Logging level, e.g. DEBUG or INFO.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    p = sub.add_parser("gen-instance", help="Write a synthetic benchmark instance.")
    p.add_argument("--K", type=int, required=True, help="Number of arms (even).")
    p.add_argument("--L", type=int, default=1, help="Number of resources (default: %(default)s).")
    p.add_argument("--rewards", choices=["onegroup", "trap", "poly", "geom"], required=True, help="Reward profile.")
    p.add_argument("--match", choices=["hmh", "hml", "m"], required=True, help="Reward/consumption match pattern.")
    p.add_argument("--mode", choices=["det", "corr", "uncorr"], required=True, help="Consumption randomness.")
    p.add_argument("--capacity", type=float, default=DEFAULT_CAPACITY, help="Capacity of every resource.")
    p.add_argument("--out", required=True, help="Instance JSON path.")

    p = sub.add_parser("gen-lower-bound", help="Write a lower-bound family member or the counterexample.")
    p.add_argument("--family", choices=["det", "sto", "counterexample"], required=True, help="Construction.")
    p.add_argument("--K", type=int, required=True, help="Number of arms.")
    p.add_argument("--i", type=int, default=1, help="Arm whose reward is flipped (default: %(default)s).")
    p.add_argument(
        "--rewards", type=_float_list, default=None,
        help="Comma-separated rewards 1/2 = r_1 >= ... >= r_K >= 1/4 (default: evenly spaced).",
    )
    p.add_argument(
        "--consumptions", type=_float_list, default=None,
        help="Comma-separated non-increasing consumptions of the single resource (default: all 1).",
    )
    p.add_argument("--capacity", type=float, default=1000.0, help="Capacity (default: %(default)s).")
    p.add_argument("--out", required=True, help="Instance JSON path.")

    p = sub.add_parser("complexity", help="Report gaps, hardness measures and bounds of an instance.")
    p.add_argument("--instance", required=True, help="Instance JSON path.")
    p.add_argument("--json", action="store_true", help="Print the report as JSON.")

    p = sub.add_parser("run", help="Run a Monte Carlo experiment config.")
    p.add_argument("--config", required=True, help="Experiment config (JSON).")
    p.add_argument("--threads", type=int, default=None, help="Worker processes; results do not depend on it.")

    p = sub.add_parser("figure-compare", help="Deterministic vs. stochastic consumption on the two-arm instance.")
    p.add_argument("--dvals", type=_float_list, default=list(FIGURE_D_VALUES), help="Comma-separated d values.")
    p.add_argument("--trials", type=int, default=10000, help="Trials per d and setting (default: %(default)s).")
    p.add_argument("--seed", type=int, default=0, help="Master seed (default: %(default)s).")
    p.add_argument("--threads", type=int, default=None, help="Worker processes.")
    p.add_argument("--out", required=True, help="Output CSV path.")

    p = sub.add_parser("check-lemma", help="Monte Carlo check of the consumption concentration bound.")
    p.add_argument("--d", type=_float_list, required=True, help="Comma-separated mean consumptions in (0, 1).")
    p.add_argument("--N", type=_int_list, required=True, help="Comma-separated sample sizes.")
    p.add_argument("--reps", type=int, default=100000, help="Repetitions per cell (default: %(default)s).")
    p.add_argument("--seed", type=int, default=0, help="Master seed (default: %(default)s).")
    p.add_argument("--out", default=None, help="Optional CSV path for the table.")
    return parser


# ================================
# Subcommands
# ================================


def _workers(args: argparse.Namespace, settings: Dict[str, Any]) -> int:
    if args.threads is not None:
        if args.threads < 1:
            raise UsageError(f"--threads must be positive, got {args.threads}")
        return args.threads
    return int(get_setting(settings, "harness.workers", None) or default_workers())


def cmd_gen_instance(args: argparse.Namespace, settings: Dict[str, Any]) -> int:
    instance = gen_synthetic(args.K, args.L, args.rewards, args.match, args.mode, args.capacity)
    save_instance(instance, args.out)
    return EXIT_OK


def cmd_gen_lower_bound(args: argparse.Namespace, settings: Dict[str, Any]) -> int:
    K = args.K
    if args.family == "counterexample":
        save_instance(build_counterexample(K, args.capacity), args.out)
        return EXIT_OK

    if K < 2:
        raise InstanceError("lower-bound families need K >= 2")
    rewards = args.rewards or [0.5 - 0.25 * k / (K - 1) for k in range(K)]
    consumptions = args.consumptions or [1.0] * K
    if len(rewards) != K or len(consumptions) != K:
        raise UsageError(f"--rewards and --consumptions need {K} values each")
    builder = build_det_lb_instance if args.family == "det" else build_sto_lb_instance
    save_instance(builder(rewards, [consumptions], args.i, [args.capacity]), args.out)
    return EXIT_OK


def _format_report(report: Dict[str, Any]) -> str:
    lines = []
    for key, value in report.items():
        if isinstance(value, float):
            value = f"{value:.6g}"
        elif isinstance(value, list):
            value = json.dumps(value)
        lines.append(f"{key}: {value}")
    return "\n".join(lines)


def cmd_complexity(args: argparse.Namespace, settings: Dict[str, Any]) -> int:
    report = complexity_report(load_instance(args.instance)).to_dict()
    if args.json:
        print(json.dumps(report, indent=2))
    else:
        print(_format_report(report))
    return EXIT_OK


def cmd_run(args: argparse.Namespace, settings: Dict[str, Any]) -> int:
    config = read_config(args.config)
    results = run_experiment(
        config,
        workers=_workers(args, settings),
        chunk_size=get_setting(settings, "harness.chunk_size", None),
        defaults=get_setting(settings, "strategies", {}) or {},
    )
    write_results(results, config.output_path)
    return EXIT_OK


def cmd_figure_compare(args: argparse.Namespace, settings: Dict[str, Any]) -> int:
    points = figure_compare(
        args.dvals,
        trials=args.trials,
        master_seed=args.seed,
        workers=_workers(args, settings),
        chunk_size=get_setting(settings, "harness.chunk_size", None),
    )
    write_figure(points, args.out)
    return EXIT_OK


def cmd_check_lemma(args: argparse.Namespace, settings: Dict[str, Any]) -> int:
    checks = check_lemma_grid(args.d, args.N, args.reps, args.seed)
    frame = lemma_frame(checks)
    print(frame.to_string(index=False))
    if args.out:
        save_to_csv(frame, args.out)

    failed = [c for c in checks if not c.passed]
    if failed:
        for c in failed:
            logger.error(f"Concentration bound violated at d={c.d:g}, N={c.n}: {c.empirical_prob:.4g} > {c.tolerance:.4g}.")
        return EXIT_FAILURE
    return EXIT_OK


COMMANDS = {
    "gen-instance": cmd_gen_instance,
    "gen-lower-bound": cmd_gen_lower_bound,
    "complexity": cmd_complexity,
    "run": cmd_run,
    "figure-compare": cmd_figure_compare,
    "check-lemma": cmd_check_lemma,
}

# ================================
# Entry Points
# ================================


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments, run one subcommand and map the outcome to an exit code.

    Returns:
        int: 0 on success, 1 on validation or I/O errors, 2 on runtime or statistical failures.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv) if argv is not None else None)
    except SystemExit as e:
        # --help and --version exit through argparse
        return int(e.code or 0)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return EXIT_INVALID

    try:
        settings = load_config(args.settings)
    except Exception as e:
        print(f"could not read settings '{args.settings}': {e}", file=sys.stderr)
        return EXIT_INVALID

    level = resolve_log_level(args.log_level or get_setting(settings, "general.log_level"))
    setup_logger(level, log_to_console=True, log_file=get_setting(settings, "general.log_file", LOG_FILE))

    try:
        return COMMANDS[args.command](args, settings)
    except (ValueError, OSError) as e:
        # ConfigError, InstanceError and NoUniqueBestArmError are ValueErrors
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (BairError, RuntimeError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
