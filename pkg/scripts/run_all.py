"""Run every experiment at its default scale and write results under one directory.

    python3 scripts/run_all.py --seed 20240607 --out results --workers 1
"""

import argparse
import logging
import os
import sys

from telegas.experiments import EXPERIMENTS, ExperimentConfig, run

log = logging.getLogger("run_all")


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default="results")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--only", nargs="*", choices=sorted(EXPERIMENTS), help="subset of experiments")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    worst = 0
    for name in args.only or list(EXPERIMENTS):
        rep = run(ExperimentConfig(name, args.seed, workers=args.workers, out_dir=os.path.join(args.out, name)))
        failed = [c.name for c in rep.checks if not c.passed]
        log.info("%-16s %s %6.1fs %s", name, "PASS" if rep.passed else "FAIL", rep.wall_time,
                 ", ".join(failed))
        worst = max(worst, rep.exit_code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
