"""Command line entry point: ``riccilab run | report | list-fixtures``."""
from __future__ import annotations

import argparse
import logging
import sys
from importlib import resources
from pathlib import Path

from .errors import ConfigError, RiccilabError
from .fixtures import list_fixtures
from .scenario import EXIT_CONFIG, EXIT_RUNTIME, emit_report, load_scenario, run_scenario


def _config_path(name):
    p = Path(name)
    if p.exists():
        return p
    # bundled scenarios may be named without path or suffix
    bundled = resources.files("riccilab") / "scenarios" / f"{p.stem}.yaml"
    if bundled.is_file():
        return Path(str(bundled))
    return p


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--verbose", "-v", action="count", default=argparse.SUPPRESS, help="more logging (repeatable)")
    ap = argparse.ArgumentParser(prog="riccilab", description="Type III Ricci flow laboratory", parents=[common])
    sub = ap.add_subparsers(dest="verb", required=True)

    run = sub.add_parser("run", help="execute a scenario", parents=[common])
    run.add_argument("--config", "-c", required=True, help="scenario YAML, or the name of a bundled scenario")
    run.add_argument("--out", "-o", help="run directory (default $RICCILAB_OUT/<name>)")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--threads", type=int, default=1, help="concurrent jobs")

    rep = sub.add_parser("report", help="summarise a run directory", parents=[common])
    rep.add_argument("--out", "-o", required=True, help="run directory")

    sub.add_parser("list-fixtures", help="list named initial data", parents=[common])
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(getattr(args, "verbose", 0), 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

    if args.verb == "list-fixtures":
        print("\n".join(list_fixtures()))
        return 0
    if args.verb == "report":
        try:
            sys.stdout.write(emit_report(args.out))
        except ConfigError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return 0
    try:
        sc = load_scenario(_config_path(args.config), seed=args.seed, out=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code = run_scenario(sc, threads=args.threads)
    except RiccilabError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{sc.name}: exit {code}, results in {sc.out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
