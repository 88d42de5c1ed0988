"""Command-line entry point: ``topocurrent <subcommand> --config <path> [--set k=v ...]``.

Exit codes: 0 success, 1 computation failure or unconverged trace,
2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, load_config
from .parallel import thread_count
from .report import dumps_json
from .runner import COMMANDS, execute
from .selftest import format_line, run_selftest

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="topocurrent",
                description="Transport invariants of gapped lattice fermions.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "hall": "Hall marker and Kubo Hall response at a junction",
        "pump": "charge pumped by a Rice-Mele loop",
        "flux": "charge moved through annuli by flux insertion",
        "braid": "vortex braiding phase and the commutator residual",
        "heatmap": "Hall marker on a grid of junctions (CSV + SVG)",
        "verify-filter": "properties of the configured filter",
    }
    for name in COMMANDS:
        sp_ = sub.add_parser(name, help=helps[name])
        sp_.add_argument("--config", required=True, help="run configuration (JSON)")
        sp_.add_argument("--set", dest="overrides", action="append", default=[],
                         metavar="KEY=VALUE", help="override a config field (dotted key)")
    st = sub.add_parser("selftest", help="cross-backend oracle suite")
    st.add_argument("--config", help="optional config; only 'seed' is used")
    st.add_argument("--set", dest="overrides", action="append", default=[],
                    metavar="KEY=VALUE")
    st.add_argument("--json", help="write the check results to this file")
    return p


def _selftest(args) -> int:
    seed = 0
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        seed = data.get("seed", 0)
    for item in args.overrides:
        key, _, raw = item.partition("=")
        if key.strip() != "seed":
            raise ConfigError("selftest only accepts --set seed=<int>")
        seed = raw
    try:
        seed = int(seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"seed must be an integer, got {seed!r}") from exc
    checks = run_selftest(seed)
    for c in checks:
        print(format_line(c))
    ok = all(c.passed for c in checks)
    total = sum(c.seconds for c in checks)
    print(f"{'ALL PASS' if ok else 'FAILURES'}  {sum(c.passed for c in checks)}/{len(checks)} "
          f"checks in {total:.1f}s")
    if args.json:
        Path(args.json).write_text(dumps_json({"seed": seed,
                                               "checks": [c.as_dict() for c in checks]}))
    return EXIT_OK if ok else EXIT_FAIL


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        try:
            thread_count()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if args.command == "selftest":
            return _selftest(args)
        cfg = load_config(args.config, args.overrides)
        code = execute(cfg, args.command)
    except ConfigError as exc:
        print(f"topocurrent: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    o = cfg.output
    print(f"report: {o.json_path}, {o.csv_path}  exit {code}")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
