"""Command-line entry point.

Exit codes: 0 on full success, 2 when some runs or fits failed, 1 on
configuration errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings

from .config import ConfigError, RunConfig

COMMANDS = ("collection-sweep", "fig4", "fig5", "fig6", "scan", "synth-spectrum", "fit-spectrum",
            "fit-lifetime")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pillarsim", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="INI configuration file")
        p.add_argument("--seed", type=int, help="override [run] seed")
        p.add_argument("--out", help="override [run] out (relative to the working directory)")
        p.add_argument("--threads", type=int, help="worker threads")
        p.add_argument("--resume", action="store_true", help="reuse cached solver runs")
        p.add_argument("-v", "--verbose", action="store_true")
        if name.startswith("fit-"):
            p.add_argument("--input", help="file to fit")
    return ap


def _load(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig.defaults()
    if args.seed is not None:
        cfg["run"]["seed"] = args.seed
    if args.out is not None:
        from pathlib import Path

        cfg["run"]["out"] = Path(args.out).resolve()
    if args.threads is not None:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg["run"]["threads"] = args.threads
    return cfg


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    warnings.filterwarnings("ignore", message=".*TBB.*")
    try:
        cfg = _load(args)
        threads = cfg["run"]["threads"]
        from . import workflows as wf

        if args.command == "collection-sweep":
            import numba

            numba.set_num_threads(min(threads, numba.config.NUMBA_NUM_THREADS))
            outcome = wf.collection_sweep(cfg, resume=args.resume)
        elif args.command == "fig4":
            outcome = wf.fig4(cfg)
        elif args.command == "fig5":
            outcome = wf.fig5(cfg)
        elif args.command == "fig6":
            outcome = wf.fig6(cfg, threads)
        elif args.command == "scan":
            outcome = wf.scan(cfg)
        elif args.command == "synth-spectrum":
            outcome = wf.synth_spectrum_cmd(cfg)
        elif args.command == "fit-spectrum":
            outcome = wf.fit_spectrum_cmd(cfg, args.input)
        else:
            outcome = wf.fit_lifetime_cmd(cfg, args.input)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    for f in outcome.files:
        print(f"wrote {f}")
    if outcome.failures:
        print("failures:", file=sys.stderr)
        for line in outcome.failures:
            print(f"  {line}", file=sys.stderr)
    return outcome.exit_code


def main() -> None:
    sys.exit(run())
