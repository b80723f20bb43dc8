"""Command line interface.

Subcommands: run (single path), mc (Monte Carlo ensemble), convergence
(coupled-noise rate study), selftest (built-in identity battery).
Exit codes: 0 success, 2 configuration/validation error, 3 numerical
failure.  The SAVCH_THREADS environment variable caps the worker pool.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, RunConfig, parse_config
from .diagnostics import DiagnosticFailure
from .harness import convergence_study, mc_run, run_path
from .stepper import NumericalError, StepFailure

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", help="config file (key = value lines)")
    parser.add_argument("--seed", type=int, metavar="S", help="override the RNG seed")
    parser.add_argument("--out", metavar="DIR", help="override the output directory")


def _load_config(args: argparse.Namespace, mode: str) -> RunConfig:
    if args.config:
        cfg = parse_config(args.config)
    else:
        cfg = RunConfig()
    cfg.mode = mode
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = args.out
    cfg.validate()
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="savch",
        description="Stochastic Cahn-Hilliard solver with dynamic boundary "
        "conditions (augmented SAV finite element scheme)",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("run", "simulate a single path and write per-step diagnostics"),
        ("mc", "run a Monte Carlo ensemble of independent paths"),
        ("convergence", "coupled-noise convergence-rate study over dyadic tau levels"),
    ):
        _add_common(sub.add_parser(name, help=text))
    sub.add_parser("selftest", help="run the built-in identity checks")

    args = parser.parse_args(argv)

    if args.command == "selftest":
        from .selftest import run_selftest

        return EXIT_NUMERICAL if run_selftest() else EXIT_OK

    try:
        cfg = _load_config(args, args.command)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "run":
            run_path(cfg, path_id=0, out_dir=cfg.out_dir)
            print(f"run complete: {cfg.n_steps} steps written to {cfg.out_dir}")
        elif args.command == "mc":
            result = mc_run(cfg, out_dir=cfg.out_dir)
            print(
                f"mc complete: {len(result.summaries)}/{cfg.paths} paths, "
                f"summary in {cfg.out_dir}"
            )
            if not result.complete:
                for pid, msg in result.failures:
                    print(f"path {pid} failed: {msg}", file=sys.stderr)
                return EXIT_NUMERICAL
        else:
            result = convergence_study(cfg, out_dir=cfg.out_dir)
            print(f"convergence study complete: {cfg.levels} levels, tables in {cfg.out_dir}")
            for name, (slope, r2) in result.slopes.items():
                print(f"  {name}: slope {slope:.3f}, R^2 {r2:.4f}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StepFailure, NumericalError, DiagnosticFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
