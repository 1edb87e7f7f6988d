"""Command-line experiment runner.

Usage: ``pssso <command> [--config PATH] [--seed N] [--out DIR] [--emit-svg]``

Exit codes: 0 on success, 2 when a result assertion fails, 3 on a config
error.  Configs are JSON validated against the published schema; run
``pssso schema`` to print it.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import CONFIG_SCHEMA, EXPERIMENTS, load_config, merge_config
from .errors import ConfigError, PsssoError

EXIT_OK = 0
EXIT_ASSERTION = 2
EXIT_CONFIG = 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pssso",
        description="identification experiments for partly smooth operators")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None,
                       help="override the base seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--emit-svg", action="store_true", default=None,
                       help="also write minimal SVG charts")
    sub.add_parser("schema", help="print the config JSON schema")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        json.dump(CONFIG_SCHEMA, sys.stdout, indent=1)
        print()
        return EXIT_OK
    try:
        file_config = load_config(args.config)
        config = merge_config(args.command, file_config, seed=args.seed,
                              output_dir=args.out, emit_svg=args.emit_svg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    from .experiments import COMMANDS

    try:
        result = COMMANDS[args.command](config,
                                        emit_svg=bool(config.get("emit_svg")))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PsssoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ASSERTION

    status = "ok" if result.ok else "FAILED"
    print(f"[{status}] {result.name}")
    for line in result.failures:
        print(f"  assertion failed: {line}")
    for path in result.files:
        print(f"  wrote {path}")
    return EXIT_OK if result.ok else EXIT_ASSERTION


if __name__ == "__main__":
    sys.exit(main())
