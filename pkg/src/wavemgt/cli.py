"""Command line entry point: ``wavemgt <command> --config FILE --out DIR``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
4 a report-producing run whose checks failed.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from .errors import IntegrationBlowup, ValidationError
from .experiments.runners import EXIT_NUMERICAL, EXIT_VALIDATION

COMMANDS = {
    "simulate": "simulate",
    "spectrum": "spectrum",
    "well-depth": "well-depth",
    "energy-audit": "energy-audit",
    "decay": "decay-study",
    "dependence": "continuous-dependence",
    "cross-validate": "cross-validate",
}

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging():
    name = os.environ.get("WAVEMGT_LOG", "error").strip().lower()
    level = LOG_LEVELS.get(name)
    logging.basicConfig(level=level or logging.ERROR, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if level is None:
        logging.getLogger("wavemgt").error(
            "WAVEMGT_LOG=%r not one of %s; using error", name, sorted(LOG_LEVELS))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wavemgt", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        p = sub.add_parser(cmd)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", required=True, help="output directory for this run")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for independent runs")
        p.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    return ap


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    from .experiments.config import load_config
    from .experiments.runners import run

    try:
        if args.jobs < 1:
            raise ValidationError(f"--jobs >= 1 required, got {args.jobs}")
        cfg = load_config(args.config, kind=COMMANDS[args.command], seed=args.seed)
        result = run(cfg, args.out, jobs=args.jobs)
    except ValidationError as exc:
        print(f"wavemgt: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except IntegrationBlowup as exc:
        print(f"wavemgt: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    failed = [k for k, ok in result.checks.items() if not ok]
    status = "passed" if result.passed else f"failed (exit {result.exit_code})"
    print(f"{cfg.kind}: {status}" + (f"; failing checks: {', '.join(failed)}" if failed else ""))
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
