"""``nmqubit`` command: one subcommand per task plus ``sweep``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, parse_config
from .tasks import EXIT_CONFIG, EXIT_IO, run_task

SUBCOMMANDS = {
    "volume": "volume",
    "nm-measure": "nm_measure",
    "threshold": "threshold",
    "fit-powerlaw": "fit_powerlaw",
    "work": "work",
    "rate-error": "rate_error",
    "compare-me": "compare_me",
    "sweep": None,  # task taken from the config, which must define a sweep
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nmqubit", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON experiment config")
        sp.add_argument("--out", dest="output_path", help="output directory")
        sp.add_argument("--workers", type=int, help="worker processes for sweeps")
        sp.add_argument("--rel-tol", dest="rel_tol", type=float, help="integrator relative tolerance")
        sp.add_argument("--sample-dt", dest="sample_dt", type=float, help="sampling interval")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {
        "task": SUBCOMMANDS[args.command],
        "output_path": args.output_path,
        "workers": args.workers,
        "rel_tol": args.rel_tol,
        "sample_dt": args.sample_dt,
    }
    try:
        cfg = parse_config(args.config, overrides=overrides)
    except ConfigError as exc:
        print(f"nmqubit: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"nmqubit: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.command == "sweep" and cfg.sweep is None:
        print("nmqubit: configuration error: sweep: the config defines no sweep", file=sys.stderr)
        return EXIT_CONFIG
    return run_task(cfg)


if __name__ == "__main__":
    sys.exit(main())
