"""Tabulate the expected collision count of a pair, analytic against Monte Carlo.

    python3 scripts/renewal_table.py --seed 1 --replicas 5000 --pattern 01 --z 1
"""

import argparse
from functools import partial

import numpy as np

from telegas import analytic as an
from telegas import sim
from telegas.core import Params, parse_pattern


def count(rng, pattern, z, params, T):
    return sim.simulate_two_particle_collisions(pattern, z, params, T, rng)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--replicas", type=int, default=5000)
    p.add_argument("--pattern", default="01")
    p.add_argument("--z", type=float, default=1.0)
    p.add_argument("--v", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--times", type=float, nargs="+", default=[0.5, 1.0, 2.0, 5.0, 10.0])
    args = p.parse_args(argv)
    P = Params(args.v, args.lam)
    pat = parse_pattern(args.pattern)
    print(f"{'t':>6} {'H(t)':>10} {'MC mean':>10} {'SE':>8}")
    for k, T in enumerate(args.times):
        c = np.array(sim.replicate(partial(count, pattern=pat, z=args.z, params=P, T=T),
                                   args.replicas, args.seed, prefix=(k,)), dtype=float)
        H = float(an.renewal_H(T, args.z, P, pattern=pat))
        print(f"{T:6g} {H:10.5f} {c.mean():10.5f} {c.std(ddof=1) / np.sqrt(c.size):8.5f}")


if __name__ == "__main__":
    main()
