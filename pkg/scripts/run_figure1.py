"""Synthetic bin comparison: simulated sell-side bins against the fluid prediction.

    python scripts/run_figure1.py --seeds 0 1 2 --out results/figure1
"""

import argparse
from pathlib import Path

from lobflow.config import ExperimentConfig
from lobflow.harness import figure1_experiment


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--out", type=Path, default=Path("results/figure1"))
    args = ap.parse_args()

    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    f = cfg.figure1
    args.out.mkdir(parents=True, exist_ok=True)
    for seed in args.seeds:
        report = figure1_experiment(
            cfg.model_params(), cfg.initial_book(), f.snap_offsets_ms, seed,
            ms_per_unit=f.ms_per_unit, t0_ms=f.t0_ms, bin_ticks=f.bin_ticks,
            bin_count=f.bin_count, bin_offset=f.bin_offset, side=f.side,
            size_normalizer=f.size_normalizer, tick_size=f.tick_size, price_origin=f.price_origin,
        )
        report.write_csv(args.out / f"figure1_seed{seed}.csv")
        errs = ", ".join(f"{o // 60000} min {report.mean_relative_error(o):.3f}" for o in report.offsets)
        print(f"seed {seed}: mean relative bin error {errs}")


if __name__ == "__main__":
    main()
