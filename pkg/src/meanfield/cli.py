"""Command-line entry point: ``meanfield <experiment> [--config PATH] ...``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 resource rejection.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import EXPERIMENTS, ExperimentConfig, parse_config
from .errors import BootstrapFailure, ConfigError, NumericalFailure, ResourceRejection
from .experiments import run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_RESOURCE = 4

log = logging.getLogger("meanfield")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI experiment config (defaults apply to missing keys)")
    common.add_argument("--out", type=Path, help="output directory (overrides [output] output_dir)")
    common.add_argument("--workers", type=int, default=1, help="parallel sweep cells")
    common.add_argument("--seed", type=int, help="seed for randomized initial profiles")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="meanfield", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[common], help=f"run the {name} experiment")
    return parser


def _load(args) -> ExperimentConfig:
    text = ""
    if args.config is not None:
        try:
            text = args.config.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError([f"--config: cannot read {args.config}: {exc.strerror}"]) from exc
    cfg = parse_config(text, args.experiment)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"experiment": cfg.experiment.model_copy(update={"seed": args.seed})})
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.workers < 1:
        print("config error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = _load(args)
        record = run_experiment(cfg, args.out, args.workers)
    except ConfigError as exc:
        for msg in exc.errors:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, BootstrapFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ResourceRejection as exc:
        print(f"resource rejection: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    print(json.dumps({"output_dir": record.output_dir, "config_hash": record.config_hash, "files": record.files}, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
