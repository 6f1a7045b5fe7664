"""Command-line front end: ``moonsim {simulate,protocol,scan,verify}``.

Exit codes: 0 success, 1 verification or physics failure, 2 usage or config
error.  Time series are CSV with 17 significant digits; reports are JSON with
sorted keys, so outputs are byte-for-byte deterministic for a fixed config.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import config as cfgmod
from . import runners
from .errors import ConfigError, MoonsimError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _finite_or_none(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _finite_or_none(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite_or_none(v) for v in obj]
    return obj


def dumps_report(report: dict) -> str:
    return json.dumps(_finite_or_none(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def dumps_csv(header: Sequence[str], rows) -> str:
    lines = [",".join(header)]
    lines += [",".join(f"{v:.17g}" for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _write(text: str, path: Optional[str]):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _out_path(args, cfg) -> Optional[str]:
    return args.out if args.out is not None else cfg.output.path


def cmd_simulate(args, cfg) -> int:
    header, rows = runners.simulate(cfg)
    _write(dumps_csv(header, rows), _out_path(args, cfg))
    return EXIT_OK


def cmd_protocol(args, cfg) -> int:
    report, trajectory = runners.protocol_report(cfg)
    _write(dumps_report(report), _out_path(args, cfg))
    traj = args.trajectory if args.trajectory is not None else cfg.output.trajectory
    if traj is not None:
        _write(dumps_report(trajectory), traj)
    print(f"fidelity={report['fidelity']:.17g} mode={report['mode']}", file=sys.stderr)
    return EXIT_OK


def cmd_scan(args, cfg) -> int:
    _write(dumps_report(runners.scan_report(cfg)), _out_path(args, cfg))
    return EXIT_OK


def cmd_verify(args, cfg) -> int:
    report = runners.verify_report(cfg, echo=lambda line: print(line, file=sys.stderr))
    _write(dumps_report(report), args.out if args.out is not None else cfg.output.path)
    if not report["passed"]:
        print("verification failed: " + ", ".join(report["failed"]), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "protocol": cmd_protocol, "scan": cmd_scan, "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moonsim", description="Trapped-ion sideband dynamics and M00N-state protocols.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        nargs = "?" if name == "verify" else None
        p.add_argument("config", nargs=nargs, help="YAML config path or bundled config name")
        p.add_argument("--out", help="output path ('-' for stdout); defaults to output.path, else stdout")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field by dotted path, e.g. protocol.mode=shared_clock")
        if name == "protocol":
            p.add_argument("--trajectory", help="write per-step states as JSON")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_USAGE
    try:
        if args.config is None:
            cfg = cfgmod.parse("{}", tuple(args.overrides))
        else:
            cfg = cfgmod.load(args.config, tuple(args.overrides))
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error:\n{exc}", file=sys.stderr)
        return EXIT_USAGE
    except MoonsimError as exc:
        print(f"{args.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
