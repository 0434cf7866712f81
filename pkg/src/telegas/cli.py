"""Command-line entry point: ``telegas <experiment> [flags]``.

Exit codes: 0 when every check passes, 2 when any check fails, 1 on error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

from .experiments import EXPERIMENTS, ExperimentConfig, run

log = logging.getLogger("telegas")


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="telegas", description="Telegraph-particle collision experiments.")
    p.add_argument("experiment", choices=sorted(EXPERIMENTS))
    p.add_argument("--config", help="JSON file with config fields; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--replicas", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", dest="out_dir")
    p.add_argument("--paper-literal", dest="paper_literal", action="store_true", default=None,
                   help="use the uncorrected constants (audit mode)")
    p.add_argument("--z", type=float)
    p.add_argument("--pattern", choices=["00", "01", "10", "11"])
    p.add_argument("--v", type=float)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--eps", type=_floats, help="comma-separated list")
    p.add_argument("--c", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--b", type=float)
    p.add_argument("--T", type=float)
    p.add_argument("--alpha", type=_floats, help="comma-separated list")
    p.add_argument("--grid", type=_floats, help="comma-separated list")
    p.add_argument("--positions", type=_floats, help="comma-separated list")
    p.add_argument("--ks-samples", dest="ks_samples", type=int)
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    data: dict = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            data = json.load(fh)
    data["experiment"] = args.experiment
    for key in ("seed", "replicas", "workers", "out_dir", "paper_literal", "z", "pattern", "v", "lam", "eps",
                "c", "n", "b", "T", "alpha", "grid", "positions", "ks_samples"):
        val = getattr(args, key)
        if val is not None:
            data[key] = val
    if data.get("seed") is None:
        raise ValueError("--seed is required (no clock-based default)")
    return ExperimentConfig.from_dict(data)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    try:
        cfg = resolve_config(args)
        report = run(cfg)
    except Exception as exc:  # report and map to exit code 1
        log.error("error: %s", exc)
        return 1
    for c in report.checks:
        log.info("%s %s value=%s reference=%s", "PASS" if c.passed else "FAIL", c.name, c.value, c.reference)
    log.info("%s: %s (%.1fs) -> %s", report.experiment, "PASS" if report.passed else "FAIL",
             report.wall_time, cfg.resolved().out_dir)
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
