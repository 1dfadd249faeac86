"""
Command line entry point.

    rmtlab run configs/semicircle.toml --seed 7 --threads 4 --out results/semicircle.csv
    rmtlab validate configs/gaps.toml
    rmtlab list-experiments

Worker threads default to $RMTLAB_THREADS, then to the config file.
"""

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

from rmtlab.config import EXPERIMENTS, FORMATS, load_config
from rmtlab.experiments import validate
from rmtlab.harness import (
    EXIT_INVALID_CONFIG,
    EXIT_IO,
    EXIT_OK,
    EXIT_UNKNOWN_EXPERIMENT,
    ConfigError,
    UnknownExperimentError,
    run_file,
)

logger = logging.getLogger(__name__)

THREADS_ENV = "RMTLAB_THREADS"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rmtlab",
        description="Monte Carlo experiments on Wigner matrices, Dyson Brownian motion and beta log-gases",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=(
            "exit codes: 0 passed, 1 a check failed, 2 unknown experiment, "
            "3 invalid config, 4 I/O error"
        ),
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug output")
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="Run the experiment a config file describes")
    run_parser.add_argument("config", help="TOML experiment file")
    run_parser.add_argument("--seed", type=int, default=None, help="Override the master seed")
    run_parser.add_argument("--threads", type=int, default=None, help=f"Worker threads (default: ${THREADS_ENV})")
    run_parser.add_argument("--out", default=None, help="Report path")
    run_parser.add_argument("--format", choices=FORMATS, default=None, help="Report format")

    validate_parser = commands.add_parser("validate", help="Check a config file without sampling")
    validate_parser.add_argument("config", help="TOML experiment file")

    commands.add_parser("list-experiments", help="Print the registered experiment names")
    return parser


def _threads(value: Optional[int]) -> Optional[int]:
    if value is not None:
        return value
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return int(env)
        except ValueError:
            logger.warning("ignoring %s=%r, not an integer", THREADS_ENV, env)
    return None


def _validate(path: str) -> int:
    try:
        config = load_config(path)
        validate(config)
    except UnknownExperimentError as error:
        print(f"{path}: {error}", file=sys.stderr)
        return EXIT_UNKNOWN_EXPERIMENT
    except ConfigError as error:
        print(f"{path}: {error}", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    except OSError as error:
        print(f"{path}: {error}", file=sys.stderr)
        return EXIT_IO
    print(f"{path}: ok ({config.experiment})")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(format="%(name)s: %(levelname)s: %(message)s", level=level)

    if args.command == "list-experiments":
        for name in EXPERIMENTS:
            print(name)
        return EXIT_OK
    if args.command == "validate":
        return _validate(args.config)

    code, report = run_file(args.config, args.seed, _threads(args.threads), args.out, args.format)
    if report is not None:
        print(report)
    return code


if __name__ == "__main__":
    sys.exit(main())
