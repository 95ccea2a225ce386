"""Command line: ``heralded-ecs run|validate|defaults``.

Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import SCENARIOS, ConfigError, default_config_text, load_config
from .scenarios import NumericalFailure, run_scenario

log = logging.getLogger("heralded_ecs")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heralded-ecs", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True)
    run = sub.add_parser("run", help="run a scenario and export its series")
    run.add_argument("config", type=Path)
    run.add_argument("--scenario", choices=SCENARIOS)
    run.add_argument("--out", type=Path, help="output directory (default: output.dir from the config)")
    run.add_argument("--seed", type=int)
    val = sub.add_parser("validate", help="check a config and print the resolved parameters")
    val.add_argument("config", type=Path)
    sub.add_parser("defaults", help="print the bundled reference config")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.verb == "defaults":
        sys.stdout.write(default_config_text())
        return EXIT_OK
    try:
        cfg = load_config(args.config)
        if getattr(args, "scenario", None):
            cfg = cfg.with_scenario(args.scenario)
        if getattr(args, "seed", None) is not None:
            cfg = replace(cfg, run=replace(cfg.run, seed=args.seed))
    except (ConfigError, OSError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.verb == "validate":
        print(json.dumps(cfg.resolved(), indent=2, sort_keys=True, default=str))
        return EXIT_OK
    out = args.out or Path(cfg.output.dir)
    try:
        report = run_scenario(cfg, out)
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, ConfigError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    log.info("wrote %s", ", ".join(str(out / f) for f in report.series.values()))
    print(json.dumps(report.headline, indent=2, sort_keys=True, default=str))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
