"""Command line: ``sublin run <config.json> [--set k=v]...``, ``sublin fixtures``, ``sublin version``.

Exit codes: 0 when every verdict passes, 1 on invalid input, 2 when a
verification threshold fails.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from pathlib import Path

from . import __version__
from .errors import InputError, ResourceError
from .experiments import ConfigError, list_fixtures, run

EXIT_OK, EXIT_INPUT, EXIT_FAIL = 0, 1, 2


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(config: dict, assignment: str) -> None:
    """Apply ``a.b.c=value``; bare keys other than top-level ones go to parameters."""
    key, sep, raw = assignment.partition("=")
    if not sep or not key:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    parts = key.split(".")
    if len(parts) == 1 and parts[0] not in ("experiment", "model", "output", "parameters"):
        parts = ["parameters", parts[0]]
    node = config
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {key}: {p!r} is not an object", tuple(parts))
    node[parts[-1]] = _parse_value(raw)


def locate(text: str, path: tuple) -> int | None:
    """Line (1-based) where the last key of ``path`` appears in the config text."""
    if not path:
        return None
    pat = re.compile(r'"' + re.escape(str(path[-1])) + r'"\s*:')
    for lineno, line in enumerate(text.splitlines(), 1):
        if pat.search(line):
            return lineno
    return None


def _input_error(source: str, line: int | None, msg: str) -> int:
    where = f"{source}:{line}" if line else source
    print(f"{where}: error: {msg}", file=sys.stderr)
    return EXIT_INPUT


def cmd_run(args) -> int:
    path = Path(args.config)
    try:
        text = path.read_text()
    except OSError as exc:
        return _input_error(str(path), None, f"cannot read config: {exc.strerror}")
    try:
        config = json.loads(text)
    except json.JSONDecodeError as exc:
        return _input_error(str(path), exc.lineno, f"invalid JSON: {exc.msg} (column {exc.colno})")
    try:
        for assignment in args.set or []:
            apply_override(config, assignment)
        report = run(config)
    except ConfigError as exc:
        overridden = any(a.split("=")[0].split(".")[-1] == (exc.path[-1] if exc.path else None)
                         for a in args.set or [])
        source = "--set" if overridden else str(path)
        return _input_error(source, None if overridden else locate(text, exc.path), str(exc))
    except (InputError, ResourceError) as exc:
        return _input_error(str(path), None, str(exc))
    for name, ok in report.verdicts.items():
        print(f"{'PASS' if ok else 'FAIL'} {report.experiment}.{name}")
    print(f"report: {Path(config['output']) / 'report.json'}")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_fixtures(args) -> int:
    for name, desc in list_fixtures():
        print(f"{name}\t{desc}")
    return EXIT_OK


def cmd_version(args) -> int:
    print(__version__)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sublin", description="Sublinear expectation LLN experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one experiment from a JSON config")
    p_run.add_argument("config")
    p_run.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field; dotted keys address nested fields")
    p_run.set_defaults(func=cmd_run)
    sub.add_parser("fixtures", help="list bundled fixtures").set_defaults(func=cmd_fixtures)
    sub.add_parser("version", help="print the version").set_defaults(func=cmd_version)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
