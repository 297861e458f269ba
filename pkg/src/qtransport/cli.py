"""
Command-line entry point.

``qtransport run --config exp.json --out results/`` executes one
configured task; ``qtransport reproduce fig2 --out fig2/`` runs a canned
recipe. Exit status is 0 on success, 2 for invalid input, 3 for a
numerical failure and 4 for an I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, load
from .dynamics import IntegrationError
from .observables import DivergenceError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

log = logging.getLogger("qtransport")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qtransport", description=__doc__.strip().splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker processes (default 1)")
        p.add_argument("--seed", type=int, default=None, help="override run.seed")
        p.add_argument("--tol", type=float, default=None, help="override run.tol (p_opt tolerance)")
        p.add_argument("-v", "--verbose", action="store_true")

    run = sub.add_parser("run", help="run a configured experiment")
    run.add_argument("--config", required=True, help="JSON experiment configuration")
    common(run)

    rep = sub.add_parser("reproduce", help="run the canned recipe for one figure or table")
    from .recipes import RECIPES

    rep.add_argument("figure", choices=sorted(RECIPES))
    rep.add_argument("--config", default=None, help="ignored; accepted for symmetry with run")
    common(rep)
    return ap


def main(argv=None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        if args.command == "run":
            cfg = load(args.config, seed=args.seed, tol=args.tol)
            from .runner import execute

            manifest = execute(cfg, args.out, threads=args.threads)
            print(json.dumps(manifest["summary"], default=float))
        else:
            if args.tol is not None and args.tol <= 0:
                raise ConfigError("--tol must be positive")
            from .recipes import reproduce

            summary = reproduce(args.figure, args.out, threads=args.threads, seed=args.seed, tol=args.tol)
            for c in summary["checks"]:
                verdict = {True: "PASS", False: "FAIL", None: "INFO"}[c["pass"]]
                print(f"{verdict}  {c['name']}: {c['value']}")
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (DivergenceError, IntegrationError, ArithmeticError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
