"""Command line entry point.

Exit status: 0 when every check passes (or has no samples), 1 on a
property violation, 2 on a configuration or input error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

from ..bumps import ConfigurationError
from ..geometry import GeometryError
from .config import ConfigError, default_config, parse_config
from .reports import write_report
from . import suites

log = logging.getLogger("tentfield")

COMMANDS = {
    "verify-geometry": suites.run_verify_geometry,
    "hormander-norm": suites.run_hormander,
    "form-compare": suites.run_form_compare,
    "selection-suite": suites.run_selection_suite,
    "bessel": suites.run_bessel,
    "weak-type-scan": suites.run_weak_type_scan,
}

DEFAULT_OUT = "tentfield-out"


def _common(suppress: bool) -> argparse.ArgumentParser:
    # flags are accepted before or after the subcommand; the subcommand copy
    # leaves unset flags out of the namespace so it cannot clobber the first
    kw = {"argument_default": argparse.SUPPRESS} if suppress else {}
    c = argparse.ArgumentParser(add_help=False, **kw)
    c.add_argument("--config", metavar="PATH", help="TOML or JSON experiment configuration")
    c.add_argument("--seed", type=int, help="override the configured seed")
    c.add_argument("--out", metavar="DIR",
                   help=f"report directory (default {DEFAULT_OUT}; TENTFIELD_OUT takes precedence)")
    c.add_argument("--threads", type=int, help="worker threads for independent tasks (default 1)")
    c.add_argument("--no-plots", action="store_true", help="skip the PNG figures")
    c.add_argument("-v", "--verbose", action="store_true")
    return c


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tentfield", parents=[_common(False)],
                                description="Numerical checks for trilinear forms with curved singularities.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[_common(True)])
    return p


def out_dir(args) -> str:
    return os.environ.get("TENTFIELD_OUT") or args.out or DEFAULT_OUT


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = parse_config(args.config) if args.config else default_config()
        if args.seed is not None:
            cfg = cfg.with_overrides(seed=args.seed)
        threads = 1 if args.threads is None else args.threads
        if threads < 1:
            raise ConfigError("E_POSITIVE", "--threads", "must be >= 1")
        report = COMMANDS[args.command](cfg, threads=threads)
    except (ConfigError, GeometryError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    target = out_dir(args)
    paths = write_report(report, target)
    if not args.no_plots:
        from .plotting import render_figures
        paths += render_figures(report, target)
    print(report.summary())
    for p in paths:
        log.info("wrote %s", p)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
