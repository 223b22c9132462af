"""Command-line entry point: ``kinetic1d <experiment> --config <path>``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

from .errors import ConfigError
from .harness import EXPERIMENTS, parse_config, run_experiment


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kinetic1d", description="Monte Carlo experiments for the driven tracer model.")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", type=Path, help="JSON experiment config (defaults apply when omitted)")
    ap.add_argument("--seed", type=int, help="master seed, overrides the config")
    ap.add_argument("--workers", type=int, help="worker processes, overrides the config and KINETIC1D_WORKERS")
    ap.add_argument("--out", help="output directory, overrides the config")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        text = args.config.read_text(encoding="utf-8") if args.config else "{}"
        config = parse_config(text, experiment=args.experiment, master_seed=args.seed)
    except (OSError, ConfigError) as exc:
        print(f"kinetic1d: config error: {exc}", file=sys.stderr)
        return 2
    return run_experiment(config, workers=args.workers, out_dir=args.out)


if __name__ == "__main__":
    sys.exit(main())
