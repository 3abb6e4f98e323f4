"""Multi-scale convergence experiments and the pure-death comparison oracle."""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from .book import BookState, EventKind, initial_book
from .estimation import MessageRecord, WorkflowReport, four_step_workflow
from .fluid import FluidParams, atoms_on_grid, phi
from .measures import TestBasis, _dplus_from_moments, mollifier
from .sim import EventLog, ModelParams, simulate

QUANTILES = (0.1, 0.5, 0.9)


# --- multi-scale experiments -------------------------------------------------


@dataclass
class ConvergenceReport:
    """Per-scale distributions over independent replications.

    ``price[n]`` holds the sup deviations of the scaled ask and bid from
    ``p``; ``shape[(n, t)]`` the product-metric distance to the fluid pair and
    the total-mass errors of each side against the fluid integrals.
    """

    ns: list[int]
    reps: int
    p: float
    snap_times: list[float]
    basis: dict
    price: dict[int, dict[str, np.ndarray]] = field(default_factory=dict)
    shape: dict[tuple[int, float], dict[str, np.ndarray]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def price_quantiles(self, n: int, side: str = "ask") -> dict[float, float]:
        vals = self.price[n][side]
        return {q: float(np.quantile(vals, q)) for q in QUANTILES}

    def median_price(self, side: str = "ask") -> list[float]:
        return [float(np.median(self.price[n][side])) for n in self.ns]

    def median_shape(self, t: float, key: str = "metric_d") -> list[float]:
        return [float(np.median(self.shape[(n, t)][key])) for n in self.ns]

    def price_rows(self) -> list[dict]:
        rows = []
        for n in self.ns:
            for side in ("ask", "bid"):
                q = self.price_quantiles(n, side)
                rows.append({"n": n, "side": side, "reps": len(self.price[n][side]),
                             "q10": q[0.1], "median": q[0.5], "q90": q[0.9]})
        return rows

    def shape_rows(self) -> list[dict]:
        rows = []
        for n in self.ns:
            for t in self.snap_times:
                s = self.shape[(n, t)]
                row = {"n": n, "t": t}
                for key in ("metric_d", "mass_err_plus", "mass_err_minus"):
                    vals = s[key]
                    row[f"{key}_q10"] = float(np.quantile(vals, 0.1))
                    row[f"{key}_median"] = float(np.median(vals))
                    row[f"{key}_q90"] = float(np.quantile(vals, 0.9))
                rows.append(row)
        return rows

    def strictly_decreasing(self, values: Sequence[float]) -> bool:
        return all(a > b for a, b in zip(values, values[1:]))


def fluid_mass(fp: FluidParams, t: float) -> tuple[float, float]:
    """``int phi^+ dx`` and ``int phi^- dx`` at scaled time ``t`` by quadrature."""
    plus, _ = integrate.quad(lambda x: float(phi(x, t, fp)[0]), fp.p, 1.0, limit=400)
    minus, _ = integrate.quad(lambda x: -float(phi(x, t, fp)[0]), 0.0, fp.p, limit=400)
    return plus, minus


class _ScaleContext:
    """Quantities shared by all replications at one scale ``n``."""

    def __init__(self, n, fp, basis, snap_times, masses):
        grid = np.arange(1, n + 1) / n
        self.n = n
        self.phi_mat = np.array([f(grid) for f in basis.functions])
        self.fluid_moments = {}
        for t in snap_times:
            plus, minus = atoms_on_grid(fp, n, t)
            self.fluid_moments[t] = (self.phi_mat @ plus, self.phi_mat @ minus)
        self.masses = masses


def _replicate(task):
    n, rep, params, initial, fp, cfg, ctx = task
    traj = simulate(initial, params, cfg["T"], cfg["snap_times"], cfg["seed"], rep=rep)
    ask, bid = traj.sup_quote_deviation(fp.p)
    shape = {}
    scale = float(n) ** 2
    for j, t in enumerate(traj.snap_times):
        x = traj.snapshots[j]
        plus = np.maximum(x, 0) / scale
        minus = np.maximum(-x, 0) / scale
        mp, mm = ctx.fluid_moments[float(t)]
        dp = _dplus_from_moments(ctx.phi_mat @ plus - mp)
        dm = _dplus_from_moments(ctx.phi_mat @ minus - mm)
        fluid_plus, fluid_minus = ctx.masses[float(t)]
        shape[float(t)] = {
            "metric_d": math.hypot(dp, dm),
            "mass_err_plus": abs(plus.sum() - fluid_plus),
            "mass_err_minus": abs(minus.sum() - fluid_minus),
        }
    return n, rep, ask, bid, shape


def _threads(threads: int | None) -> int:
    return max(1, threads if threads else (os.cpu_count() or 1))


def run_ladder(
    ns: Sequence[int],
    reps: int,
    fp: FluidParams,
    mp_template: ModelParams,
    T: float,
    snap_times: Sequence[float],
    seed: int,
    basis: TestBasis | None = None,
    threads: int | None = None,
) -> ConvergenceReport:
    """Simulate ``reps`` replications at every ``n`` and compare with the fluid limit.

    Replication ``r`` at scale ``n`` uses stream ``(seed, n * 100003 + r)``;
    aggregation sorts by ``(n, r)``, so the report is independent of ``threads``.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    basis = basis or TestBasis(K=20)
    snap_times = sorted(float(t) for t in snap_times)
    masses = {t: fluid_mass(fp, t) for t in snap_times}
    cfg = {"T": float(T), "snap_times": snap_times, "seed": seed}
    tasks = []
    for n in ns:
        params = mp_template.with_n(n)
        init = initial_book(fp.rho, n)
        ctx = _ScaleContext(n, fp, basis, snap_times, masses)
        for r in range(reps):
            tasks.append((n, n * 100003 + r, params, init, fp, cfg, ctx))
    # largest scales first keeps the pool busy
    order = sorted(range(len(tasks)), key=lambda i: -tasks[i][0])
    with ThreadPoolExecutor(max_workers=_threads(threads)) as pool:
        results = list(pool.map(_replicate, [tasks[i] for i in order]))
    results.sort(key=lambda r: (r[0], r[1]))

    report = ConvergenceReport(list(ns), reps, fp.p, snap_times, basis.describe())
    if len(ns) < 2:
        report.warnings.append("single scale in ladder: trend checks skipped")
    for n in ns:
        rows = [r for r in results if r[0] == n]
        report.price[n] = {
            "ask": np.array([r[2] for r in rows]),
            "bid": np.array([r[3] for r in rows]),
        }
        for t in snap_times:
            report.shape[(n, t)] = {
                key: np.array([r[4][t][key] for r in rows])
                for key in ("metric_d", "mass_err_plus", "mass_err_minus")
            }
    return report


def price_convergence(ns, reps, fp, mp_template, T, seed, threads=None) -> ConvergenceReport:
    return run_ladder(ns, reps, fp, mp_template, T, [T], seed, threads=threads)


def shape_convergence(ns, reps, fp, mp_template, snap_times, basis, seed, threads=None) -> ConvergenceReport:
    T = max(snap_times) if len(snap_times) else 0.0
    return run_ladder(ns, reps, fp, mp_template, T, snap_times, seed, basis=basis, threads=threads)


def mollifier_gap(snapshots: np.ndarray, n: int, p: float, gammas: Sequence[float]) -> dict[float, float]:
    """``max_t |<sell shape, 1> - <signed shape, f_gamma>|`` over the given snapshots
    for ``f = 1``."""
    grid = np.arange(1, n + 1) / n
    one = lambda x: np.ones_like(np.asarray(x, dtype=float))  # noqa: E731
    signed = snapshots / float(n) ** 2
    plus_mass = np.maximum(signed, 0).sum(axis=1)
    out = {}
    for g in gammas:
        fg = mollifier(one, p, g)(grid)
        out[g] = float(np.max(np.abs(plus_mass - signed @ fg)))
    return out


def write_rows(rows: list[dict], path) -> None:
    if not rows:
        open(path, "w").close()
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


# --- pure-death comparison process ------------------------------------------


@dataclass(frozen=True)
class PureDeathSpec:
    """Death rate ``k * theta_bar + n**(1 + kappa) * upsilon`` from state ``k``
    on the scaled clock (``n * (k theta_bar / n + n**kappa upsilon)`` physically)."""

    n: int
    kappa: float
    theta_bar: float
    upsilon: float
    z0: int

    def __post_init__(self):
        if self.theta_bar <= 0:
            raise ValueError("theta_bar must be positive")
        if self.upsilon < 0:
            raise ValueError("upsilon must be nonnegative")
        if self.z0 < 1:
            raise ValueError("z0 must be >= 1")

    @property
    def floor_rate(self) -> float:
        return self.n ** (1.0 + self.kappa) * self.upsilon

    def rates(self, lo: int = 1, hi: int | None = None) -> np.ndarray:
        hi = self.z0 if hi is None else hi
        return np.arange(lo, hi + 1, dtype=float) * self.theta_bar + self.floor_rate


def pure_death_expectation(spec: PureDeathSpec, chunk: int = 1 << 22) -> tuple[float, float]:
    """Exact mean and variance of the absorption time (sums over all states)."""
    mean = 0.0
    var = 0.0
    # smallest terms first limits rounding
    hi = spec.z0
    while hi >= 1:
        lo = max(1, hi - chunk + 1)
        inv = 1.0 / spec.rates(lo, hi)[::-1]
        mean += math.fsum(inv)
        var += math.fsum(inv * inv)
        hi = lo - 1
    return mean, var


def pure_death_cumulant4(spec: PureDeathSpec) -> float:
    """Fourth cumulant of the absorption time, ``sum 6 / rate**4``."""
    return 6.0 * math.fsum(1.0 / spec.rates() ** 4)


def pure_death_simulate(spec: PureDeathSpec, reps: int, seed: int, chunk_elems: int = 1 << 22) -> np.ndarray:
    """``reps`` independent absorption times, each a sum of exponential stage times."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), 0])))
    inv = 1.0 / spec.rates()
    out = np.empty(reps)
    per = max(1, chunk_elems // spec.z0)
    done = 0
    while done < reps:
        m = min(per, reps - done)
        out[done:done + m] = rng.standard_exponential((m, spec.z0)) @ inv
        done += m
    return out


# --- synthetic sell-side bin comparison ------------------------------------


def log_to_records(log: EventLog, ms_per_unit: float) -> list[MessageRecord]:
    t_ms = np.rint(log.times * ms_per_unit).astype(np.int64).tolist()
    kinds = [EventKind(int(k)) for k in range(6)]
    return [MessageRecord(t, kinds[k], tick, 1)
            for t, k, tick in zip(t_ms, log.kinds.tolist(), log.ticks.tolist())]


def figure1_experiment(
    params: ModelParams,
    initial: BookState,
    snap_offsets_ms: Sequence[int],
    seed: int,
    *,
    ms_per_unit: float = 12_000.0,
    t0_ms: int = 0,
    bin_ticks: int = 3,
    bin_count: int = 7,
    bin_offset: int = 10,
    side: str = "sell",
    size_normalizer: float = 363.0,
    tick_size: float | None = None,
    price_origin: float = 0.0,
) -> WorkflowReport:
    """Simulate a feed with known parameters, then run the in-sample workflow on it."""
    n = params.n
    horizon_units = (t0_ms + max(snap_offsets_ms, default=0)) / ms_per_unit
    traj = simulate(initial, params, horizon_units / n, [], seed, record_log=True)
    records = log_to_records(traj.log, ms_per_unit)
    return four_step_workflow(
        records, n, t0_ms, snap_offsets_ms, bin_ticks,
        initial=initial, bin_count=bin_count, bin_offset=bin_offset, side=side,
        size_normalizer=size_normalizer, time_unit_ms=ms_per_unit,
        tick_size=tick_size, price_origin=price_origin,
    )
