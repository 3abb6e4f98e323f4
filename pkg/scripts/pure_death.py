"""Pure-death comparison process: exact moments, Monte Carlo check, log-ratio trend.

    python scripts/pure_death.py --reps 10000
"""

import argparse
import math

from scipy.special import digamma

from lobflow.harness import (
    PureDeathSpec, pure_death_cumulant4, pure_death_expectation, pure_death_simulate,
)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kappa", type=float, default=0.5)
    ap.add_argument("--theta-bar", type=float, default=1.0)
    ap.add_argument("--upsilon", type=float, default=1.0)
    ap.add_argument("--reps", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    small = PureDeathSpec(100, args.kappa, args.theta_bar, args.upsilon, 2_500)
    mean, var = pure_death_expectation(small)
    sample = pure_death_simulate(small, args.reps, args.seed)
    se_var = math.sqrt((pure_death_cumulant4(small) + 2 * var**2) / args.reps)
    print(f"n=100 z0=2500: exact mean {mean:.6f} var {var:.3e}")
    print(f"  sample mean {sample.mean():.6f} (z {(sample.mean() - mean) / math.sqrt(var / args.reps):+.2f})"
          f", sample var {sample.var(ddof=1):.3e} (z {(sample.var(ddof=1) - var) / se_var:+.2f})")

    limit = (1 - args.kappa) / args.theta_bar
    print(f"E[sigma] / ln n against the limit {limit:g}:")
    for n in (1e2, 1e3, 1e4):
        spec = PureDeathSpec(int(n), args.kappa, args.theta_bar, args.upsilon, int(0.25 * n * n))
        print(f"  n={n:.0e} exact sum   {pure_death_expectation(spec)[0] / math.log(n):.4f}")
    for n in (1e8, 1e16, 1e32):
        c = n ** (1 + args.kappa) * args.upsilon / args.theta_bar
        m = (digamma(0.25 * n * n + 1 + c) - digamma(1 + c)) / args.theta_bar
        print(f"  n={n:.0e} digamma form {m / math.log(n):.4f}")


if __name__ == "__main__":
    main()
