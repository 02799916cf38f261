"""Command-line entry point: ``bpre <kind> --config cfg.json``."""

import argparse
import json
import sys
import warnings

from .cramer import ConvergenceError, RegimeError
from .harness import KINDS, ConfigError, emit_csv, parse_config, run_experiment
from .environment import validate_assumptions

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def build_parser():
    ap = argparse.ArgumentParser(prog="bpre", description="Monte Carlo laboratory for supercritical BPREs")
    sub = ap.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind)
        sp.add_argument("--config", required=True, help="path to the JSON experiment config")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--workers", type=int, help="worker processes (default: BPRE_WORKERS or CPU count)")
        sp.add_argument("--out", help="CSV destination (default: stdout)")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except OSError as exc:
        print(f"bpre: cannot read config {args.config}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError as exc:
        print(f"bpre: config is not valid JSON: {exc.msg} at line {exc.lineno}, column {exc.colno}",
              file=sys.stderr)
        return EXIT_CONFIG
    if isinstance(raw, dict):
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.workers is not None:
            raw["workers"] = args.workers
    try:
        cfg = parse_config(json.dumps(raw), kind=args.kind, require_admissible=args.kind != "validate")
    except ConfigError as exc:
        print(f"bpre: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            table = run_experiment(cfg)
        emit_csv(table, args.out if args.out else sys.stdout)
    except (ConvergenceError, RegimeError, RuntimeError, ValueError, OSError) as exc:
        print(f"bpre: {cfg.kind} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if cfg.kind == "validate":
        report = validate_assumptions(cfg.model, cfg.p, cfg.epsilon)
        if not report.admissible:
            print("bpre: " + "; ".join(report.failures()), file=sys.stderr)
            return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
