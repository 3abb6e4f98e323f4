"""Convergence ladder: median quote deviation and shape distance per scale.

    python scripts/run_convergence.py --reps 20 --ns 50 100 200 400 --out results/ladder
"""

import argparse
from pathlib import Path

import numpy as np

from lobflow.config import ExperimentConfig
from lobflow.harness import run_ladder, write_rows
from lobflow.measures import TestBasis


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path)
    ap.add_argument("--ns", type=int, nargs="+")
    ap.add_argument("--reps", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--out", type=Path, default=Path("results/ladder"))
    args = ap.parse_args()

    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    ns = args.ns or cfg.n_ladder
    reps = args.reps or cfg.reps
    seed = cfg.seed if args.seed is None else args.seed
    times = sorted(t for t in set(cfg.snap_times) if t > 0)
    report = run_ladder(ns, reps, cfg.fluid_params(), cfg.model_params(), cfg.T, times, seed,
                        basis=TestBasis(K=cfg.basis_K), threads=args.threads)

    args.out.mkdir(parents=True, exist_ok=True)
    write_rows(report.price_rows(), args.out / "price.csv")
    write_rows(report.shape_rows(), args.out / "shape.csv")

    print(f"{'n':>6} {'ask':>8} {'bid':>8}  " + "  ".join(f"d(t={t:g})" for t in times))
    for j, n in enumerate(ns):
        shape = "  ".join(f"{report.median_shape(t)[j]:8.4f}" for t in times)
        print(f"{n:>6} {report.median_price('ask')[j]:8.4f} {report.median_price('bid')[j]:8.4f}  {shape}")
    for t in times:
        errs = [np.median(report.shape[(n, t)]["mass_err_plus"]) for n in ns]
        print(f"t={t:g} sell-side mass error medians: " + ", ".join(f"{e:.4f}" for e in errs))
    for w in report.warnings:
        print("warning:", w)


if __name__ == "__main__":
    main()
