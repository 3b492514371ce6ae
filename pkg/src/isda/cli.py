"""Command-line entry point: ``isda --config paper_table1 --mode compare``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .config import MODES, ConfigError, bundled_configs, load_config
from .harness import run_experiment


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isda", description=__doc__.splitlines()[0])
    p.add_argument("--config", required=True,
                   help=f"config file path or bundled name ({', '.join(bundled_configs())})")
    p.add_argument("--mode", choices=MODES, help="override the config's mode")
    p.add_argument("--seed", type=int, action="append",
                   help="run this seed instead of the config's seeds (repeatable)")
    p.add_argument("--out", help="output directory (default: the config's output_dir)")
    p.add_argument("--workers", type=int, help="episode-level worker threads")
    p.add_argument("--quiet", action="store_true", help="suppress progress and summary output")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        changes = {}
        if args.mode:
            changes["mode"] = args.mode
        if args.seed:
            if any(s < 0 for s in args.seed):
                raise ConfigError("--seed: seeds must be nonnegative")
            changes["seeds"] = tuple(args.seed)
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("--workers: must be >= 1")
            changes["workers"] = args.workers
        cfg = dataclasses.replace(cfg, **changes)
        return run_experiment(cfg, out_dir=args.out, quiet=args.quiet)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
