"""Command-line entry point: ``scenesmith --config FILE --stage STAGE``.

Exit codes: 0 success, 2 bad configuration or arguments, 3 a prerequisite
stage has not been run, 4 an input or intermediate file is unusable.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, load_config
from .envi import EnviError
from .geo import DomainError
from .pipeline import STAGES, DataError, PrerequisiteError, run
from .scene import ManifestError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PREREQ = 3
EXIT_DATA = 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scenesmith", description="Build a synthetic 3D scene from DSM and VNIR rasters.")
    p.add_argument("--config", required=True, help="pipeline TOML file")
    p.add_argument("--stage", required=True, choices=[*STAGES, "all"])
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--out", help="override the output directory")
    p.add_argument("--workers", type=int, help="processes for per-building modeling")
    p.add_argument("--no-cache", action="store_true", help="rerun stages even if their inputs are unchanged")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, {"seed": args.seed, "out_dir": args.out, "workers": args.workers})
        report = run(cfg, args.stage, use_cache=not args.no_cache)
    except ConfigError as exc:
        print(f"scenesmith: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PrerequisiteError as exc:
        print(f"scenesmith: {exc}", file=sys.stderr)
        return EXIT_PREREQ
    except (DataError, EnviError, ManifestError, DomainError, OSError, ValueError) as exc:
        print(f"scenesmith: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA
    for e in report["stages"]:
        print(f"{e['stage']:<10} {e['status']:<7} {json.dumps(e['counts'], sort_keys=True)}")
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
