"""Command-line front end: ``lobflow {simulate,fluid,estimate,converge,figure1}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig
from .estimation import (
    InsufficientData, ParseError, ReplayError, estimate_rates, parse_messages,
)
from .fluid import bin_volume, evaluate_field, solve_ode, write_field_csv
from .harness import (
    PureDeathSpec, figure1_experiment, pure_death_cumulant4, pure_death_expectation,
    pure_death_simulate, run_ladder, write_rows,
)
from .measures import TestBasis
from .sim import DeadState, manifest_dict, simulate, write_event_log_csv, write_trajectory_csv

log = logging.getLogger("lobflow")


class RuntimeFailure(RuntimeError):
    pass


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _manifest(args, cfg: ExperimentConfig, out: Path, outputs: list[Path], started: float,
              extra: dict | None = None) -> None:
    manifest = {
        "tool": "lobflow",
        "version": __version__,
        "subcommand": args.command,
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "inputs": {k: str(v) for k, v in (("config", args.config), ("messages", getattr(args, "messages", None)))
                   if v is not None},
        "out_dir": str(out),
        "outputs": {p.name: _digest(p) for p in outputs},
        "wall_clock_seconds": round(time.perf_counter() - started, 3),
    }
    if extra:
        manifest.update(extra)
    _write_json(manifest, out / "manifest.json")


# --- subcommands ------------------------------------------------------------


def cmd_simulate(args, cfg: ExperimentConfig, out: Path, started: float) -> None:
    params = cfg.model_params()
    traj = simulate(cfg.initial_book(), params, cfg.T, cfg.snap_times, cfg.seed, record_log=True)
    paths = [out / "trajectory.csv", out / "events.csv"]
    write_trajectory_csv(traj, paths[0])
    write_event_log_csv(traj, paths[1], cfg.ms_per_unit)
    log.info("simulated %d events to physical time %.3f", traj.n_events, cfg.n * cfg.T)
    _manifest(args, cfg, out, paths, started, {"run": manifest_dict(traj)})


def cmd_fluid(args, cfg: ExperimentConfig, out: Path, started: float) -> None:
    fp = cfg.fluid_params()
    n = cfg.n
    grid = np.union1d(np.arange(1, n + 1) / n, [cfg.p])
    times = sorted(cfg.snap_times)
    field = evaluate_field(fp, grid, times)
    ode = solve_ode(fp, grid, times, cfg.dt_max)
    paths = [out / "field.csv", out / "bins.csv"]
    write_field_csv(field, paths[0])
    rows = []
    for t in times:
        for lo, hi in cfg.fluid_bins():
            for side in ("sell", "buy"):
                rows.append({"bin_lo": lo, "bin_hi": hi, "t": float(t), "side": side,
                             "predicted_count": bin_volume(fp, n, (lo, hi), t, side)})
    write_rows(rows, paths[1])
    dev = float(np.max(np.abs(ode.values - field.values))) if field.values.size else 0.0
    _manifest(args, cfg, out, paths, started, {"ode_max_abs_deviation": dev})


def cmd_estimate(args, cfg: ExperimentConfig, out: Path, started: float) -> None:
    path = Path(args.messages)
    if not path.exists():
        raise RuntimeFailure(f"messages file not found: {path}")
    if path.stat().st_size == 0:
        raise InsufficientData(f"{path} is empty")
    records = parse_messages(path, n=cfg.n)
    if not records:
        raise InsufficientData(f"{path} holds no messages")
    est_cfg = cfg.estimate
    horizon = est_cfg.horizon_ms
    if horizon is None:
        horizon = records[-1].t_ms - est_cfg.start_ms
    if horizon <= 0:
        raise InsufficientData("estimation window has zero length")
    est = estimate_rates(records, cfg.n, cfg.initial_book(), horizon, start_ms=est_cfg.start_ms,
                         time_unit_ms=cfg.ms_per_unit, pooling=est_cfg.pooling)
    if est.n_records == 0:
        raise InsufficientData("no messages inside the estimation window")
    paths = [out / "rates.csv", out / "summary.json"]
    est.write_csv(paths[0])
    est.write_summary(paths[1])
    _manifest(args, cfg, out, paths, started)


def cmd_converge(args, cfg: ExperimentConfig, out: Path, started: float) -> None:
    basis = TestBasis(K=cfg.basis_K)
    snaps = sorted(set(cfg.snap_times))
    report = run_ladder(cfg.n_ladder, cfg.reps, cfg.fluid_params(), cfg.model_params(),
                        cfg.T, snaps, cfg.seed, basis=basis, threads=args.threads)
    paths = [out / "price.csv", out / "shape.csv", out / "pure_death.json", out / "trends.json"]
    write_rows(report.price_rows(), paths[0])
    write_rows(report.shape_rows(), paths[1])

    pd = cfg.pure_death
    big = PureDeathSpec(pd.n, pd.kappa, pd.theta_bar, pd.upsilon, int(pd.z0_fraction * pd.n**2))
    mean, var = pure_death_expectation(big)
    small = PureDeathSpec(pd.mc_n, pd.kappa, pd.theta_bar, pd.upsilon, pd.mc_z0)
    m_exact, v_exact = pure_death_expectation(small)
    sample = pure_death_simulate(small, pd.mc_reps, cfg.seed)
    k4 = pure_death_cumulant4(small)
    _write_json({
        "exact": {"spec": vars(big), "mean": mean, "variance": var,
                  "mean_over_log_n": mean / np.log(pd.n),
                  "limit": (1 - pd.kappa) / pd.theta_bar},
        "monte_carlo": {"spec": vars(small), "reps": pd.mc_reps,
                        "exact_mean": m_exact, "exact_variance": v_exact,
                        "sample_mean": float(sample.mean()),
                        "sample_variance": float(sample.var(ddof=1)),
                        "mean_se": float(np.sqrt(v_exact / pd.mc_reps)),
                        "variance_se": float(np.sqrt((k4 + 2 * v_exact**2) / pd.mc_reps))},
    }, paths[2])

    trends = {"warnings": report.warnings}
    if len(cfg.n_ladder) >= 2:
        trends["price_ask_decreasing"] = report.strictly_decreasing(report.median_price("ask"))
        trends["price_bid_decreasing"] = report.strictly_decreasing(report.median_price("bid"))
        trends["metric_d_decreasing"] = {
            repr(t): report.strictly_decreasing(report.median_shape(t)) for t in snaps
        }
    for w in report.warnings:
        log.warning(w)
    _write_json(trends, paths[3])
    _manifest(args, cfg, out, paths, started)


def cmd_figure1(args, cfg: ExperimentConfig, out: Path, started: float) -> None:
    f = cfg.figure1
    report = figure1_experiment(
        cfg.model_params(), cfg.initial_book(), f.snap_offsets_ms, cfg.seed,
        ms_per_unit=f.ms_per_unit, t0_ms=f.t0_ms, bin_ticks=f.bin_ticks,
        bin_count=f.bin_count, bin_offset=f.bin_offset, side=f.side,
        size_normalizer=f.size_normalizer, tick_size=f.tick_size, price_origin=f.price_origin,
    )
    paths = [out / "figure1.csv"]
    report.write_csv(paths[0])
    summary = {repr(o): report.mean_relative_error(o) for o in report.offsets}
    _manifest(args, cfg, out, paths, started,
              {"mean_relative_error": summary, "notes": report.notes,
               "p_bid_tick": report.p_bid_tick, "p_ask_tick": report.p_ask_tick})


COMMANDS = {
    "simulate": cmd_simulate,
    "fluid": cmd_fluid,
    "estimate": cmd_estimate,
    "converge": cmd_converge,
    "figure1": cmd_figure1,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lobflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"lobflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None, help="JSON config (defaults if omitted)")
        p.add_argument("--out", type=Path, required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=None, help="cap replication parallelism")
        if name == "estimate":
            p.add_argument("--messages", type=Path, required=True, help="message CSV to estimate from")
    return parser


def _setup_logging() -> None:
    level = os.environ.get("LOBFLOW_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    started = time.perf_counter()
    try:
        cfg = ExperimentConfig.load(args.config) if args.config is not None else ExperimentConfig()
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be nonnegative")
            cfg.seed = args.seed
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
    except ConfigError as exc:
        print(f"lobflow: config error: {exc}", file=sys.stderr)
        return 2
    out = args.out
    try:
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, cfg, out, started)
    except ConfigError as exc:
        print(f"lobflow: config error: {exc}", file=sys.stderr)
        return 2
    except InsufficientData as exc:
        print(f"lobflow: InsufficientData: {exc}", file=sys.stderr)
        return 1
    except (ParseError, ReplayError, DeadState, RuntimeFailure, OverflowError, OSError, ValueError) as exc:
        print(f"lobflow: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
