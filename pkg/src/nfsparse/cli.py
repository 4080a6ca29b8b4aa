"""``nfsparse`` command-line entry point."""

from __future__ import annotations

import argparse
import logging
import sys
import warnings

from . import experiments


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nfsparse", description="Near-field sparse-array experiments")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment config")
    run.add_argument("config")
    run.add_argument("--seed", type=int)
    run.add_argument("--trials", type=int)
    run.add_argument("--out", default=None, help="output directory (default: config 'output' or ./out)")
    val = sub.add_parser("validate", help="check a config and print derived quantities")
    val.add_argument("config")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            cfg = experiments.load_config(
                args.config,
                seed=getattr(args, "seed", None),
                trials=getattr(args, "trials", None),
            )
        except experiments.ConfigError as exc:
            print(str(exc), file=sys.stderr)
            return 2
        except OSError as exc:
            print(f"cannot read config: {exc}", file=sys.stderr)
            return 2
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)

    if args.command == "validate":
        for key, val in experiments.describe(cfg).items():
            print(f"{key}: {val}")
        return 0

    out = args.out or cfg.raw.get("output", "out")
    try:
        manifest = experiments.run_experiment(cfg, out)
    except (ValueError, FloatingPointError) as exc:
        print(f"experiment failed: {exc}", file=sys.stderr)
        return 1
    print(manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
