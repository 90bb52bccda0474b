"""Sensitivity of group selection to the SIR dimension K and the bandwidth constant."""

import argparse
import itertools

from npgroup.anovatest import TestConfig
from npgroup.selection import SelectConfig
from npgroup.simharness import SELECTION_DESIGNS, SimConfig, run_study


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--design", choices=sorted(SELECTION_DESIGNS), default="table4-model1")
    ap.add_argument("--k", type=int, nargs="+", default=[1, 2])
    ap.add_argument("--c", type=float, nargs="+", default=[1.0, 1.5, 2.0, 2.5])
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--seed", type=int, default=11)
    args = ap.parse_args()

    print(f"{'K':>2} {'c':>5} {'correct':>8} {'incorrect':>10} {'secs':>6}")
    for k, c in itertools.product(args.k, args.c):
        sel = SelectConfig(test=TestConfig(bandwidth_c=c), k=k)
        rep = run_study(SimConfig(args.design, replications=args.reps, seed=args.seed, select=sel))
        row = rep.rows[0]
        print(f"{k:>2} {c:>5.2f} {row['correct']:>8.3f} {row['incorrect']:>10.3f} {rep.wall_clock:>6.1f}")


if __name__ == "__main__":
    main()
