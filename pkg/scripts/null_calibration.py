"""Monte Carlo check of the null distribution of z for a range of window sizes.

Prints the mean, standard deviation, KS distance and 5% rejection rate of z
when Y is independent of the covariates.
"""

import argparse

import numpy as np
from scipy.stats import kstest

from npgroup.anovatest import TestConfig, group_test


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=300)
    ap.add_argument("--reps", type=int, default=500)
    ap.add_argument("--windows", type=int, nargs="+", default=[5, 7, 11, 15])
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    print(f"{'p':>3} {'mean':>7} {'sd':>6} {'KS':>6} {'rate':>6}")
    for p in args.windows:
        z = np.empty(args.reps)
        for rep in range(args.reps):
            rng = np.random.default_rng([args.seed, rep])
            X = rng.standard_normal((args.n, 1))
            Z = rng.standard_normal((args.n, 3))
            z[rep] = group_test(rng.standard_normal(args.n), X, Z, TestConfig(p=p)).z
        ks = kstest(z, "norm").statistic
        print(f"{p:>3} {z.mean():>7.3f} {z.std(ddof=1):>6.3f} {ks:>6.3f} {np.mean(z > 1.645):>6.3f}")


if __name__ == "__main__":
    main()
