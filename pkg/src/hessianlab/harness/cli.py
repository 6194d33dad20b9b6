"""Command-line entry point.

Exit codes: 0 all hard assertions passed, 1 assertion failure, 2 config
error, 3 numerical failure (a solve stopped short or raised).
"""

from __future__ import annotations

import argparse
import logging
import sys

from ..errors import ConfigError, HessianLabError
from .config import load_config
from .runner import EXIT_CONFIG, EXIT_NUMERICAL, run_audit, run_config


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help="output directory (default: config 'out' or ./hessianlab_out)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for suite rows")
    p.add_argument("--timing", action="store_true",
                   help="fill the wall_time_s column (makes CSVs run-dependent)")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hessianlab",
                                     description="k-Hessian finite-difference experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("run", "run every block of a config"),
                       ("probe", "run only the probe blocks"),
                       ("sharpness", "run only the sharpness blocks")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config")
        _common(p)
    p = sub.add_parser("audit", help="audit a saved solution dump against a config")
    p.add_argument("dump")
    p.add_argument("config")
    p.add_argument("--block", help="solve block to match (default: any)")
    p.add_argument("--barrier-t", type=float, help="barrier scale t (default: block setting)")
    _common(p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.command == "audit":
            code, rows, failures = run_audit(args.dump, cfg, args.out, args.block, args.barrier_t)
            for r in rows:
                print(",".join(r[2:5]))
            for f in failures:
                print(f"FAIL {f}")
            return code
        suite = None if args.command == "run" else args.command
        outcome = run_config(cfg, suite, args.out, args.jobs, args.timing or None,
                             figures=not args.no_figures)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HessianLabError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for r in outcome.results:
        print(f"{r.block},{r.suite},{'pass' if r.passed else 'fail'},{len(r.rows)}")
        for msg in r.failures:
            print(f"  FAIL {msg}")
        for msg in r.numerical:
            print(f"  NUMERICAL {msg}")
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
