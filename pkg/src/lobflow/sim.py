"""Exact event-driven simulation of the order-book Markov chain.

Limit arrivals at distance ``i`` from the opposite quote occur at
``lambda(i/n)`` and each resting order is cancelled at ``theta(i/n)/n``.
Market orders arrive at ``n**kappa * upsilon``.
Shape observations are taken on the scaled clock, so scaled time ``t``
corresponds to physical time ``n * t``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import _engine
from .book import BookEvent, BookState, EventKind, apply_event, market_event
from .functions import tabulate, to_dict

REBUILD_EVERY = 2**20


class DeadState(RuntimeError):
    """Total event rate vanished."""


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    n: int
    lambda_A: Callable
    lambda_B: Callable
    theta_A: Callable
    theta_B: Callable
    upsilon_A: float = 0.0
    upsilon_B: float = 0.0
    kappa: float = 0.5

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError("n must be a positive integer")
        if not self.kappa < 1:
            raise ParameterError(
                f"rate scaling assumption violated: kappa must be < 1 (got {self.kappa})"
            )
        if self.upsilon_A < 0 or self.upsilon_B < 0:
            raise ParameterError("market order constants must be nonnegative")
        for name in ("lambda_A", "lambda_B"):
            vals = tabulate(getattr(self, name), self.n)
            if not np.all(vals > 0) or not np.all(np.isfinite(vals)):
                raise ParameterError(f"{name} must be positive on the price grid")
        for name in ("theta_A", "theta_B"):
            vals = tabulate(getattr(self, name), self.n)
            if not np.all(vals >= 0) or not np.all(np.isfinite(vals)):
                raise ParameterError(f"{name} must be nonnegative on the price grid")

    def with_n(self, n: int) -> "ModelParams":
        return ModelParams(
            n, self.lambda_A, self.lambda_B, self.theta_A, self.theta_B,
            self.upsilon_A, self.upsilon_B, self.kappa,
        )

    # arrays indexed by distance d = 1..n (slot 0 unused)
    @cached_property
    def lam_a(self) -> np.ndarray:
        return np.concatenate([[0.0], tabulate(self.lambda_A, self.n)])

    @cached_property
    def lam_b(self) -> np.ndarray:
        return np.concatenate([[0.0], tabulate(self.lambda_B, self.n)])

    @cached_property
    def th_a(self) -> np.ndarray:
        return np.concatenate([[0.0], tabulate(self.theta_A, self.n) / self.n])

    @cached_property
    def th_b(self) -> np.ndarray:
        return np.concatenate([[0.0], tabulate(self.theta_B, self.n) / self.n])

    @property
    def market_buy_rate(self) -> float:
        return self.n**self.kappa * self.upsilon_B

    @property
    def market_sell_rate(self) -> float:
        return self.n**self.kappa * self.upsilon_A

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "lambda_A": _describe(self.lambda_A),
            "lambda_B": _describe(self.lambda_B),
            "theta_A": _describe(self.theta_A),
            "theta_B": _describe(self.theta_B),
            "upsilon_A": self.upsilon_A,
            "upsilon_B": self.upsilon_B,
            "kappa": self.kappa,
        }


def _describe(f):
    try:
        return to_dict(f)
    except TypeError:
        return repr(f)


@dataclass
class RateTable:
    """Per-channel rates for one book state.

    ``limit_buy[d - 1]`` is the rate of a buy arriving ``d`` ticks below the
    best ask (tick ``best_ask - d``); ``limit_sell[d - 1]`` likewise above the
    best bid.  Cancel arrays are indexed by tick minus one.
    """

    limit_buy: np.ndarray
    limit_sell: np.ndarray
    cancel_buy: np.ndarray
    cancel_sell: np.ndarray
    market_buy: float
    market_sell: float
    best_ask: int
    best_bid: int

    @property
    def total(self) -> float:
        return float(
            self.limit_buy.sum() + self.limit_sell.sum() + self.cancel_buy.sum()
            + self.cancel_sell.sum() + self.market_buy + self.market_sell
        )

    def channels(self) -> list[tuple[BookEvent, float]]:
        """Every channel as ``(event, rate)`` in sampling order."""
        out = []
        for d, r in enumerate(self.limit_buy, start=1):
            out.append((BookEvent(EventKind.LIMIT_BUY, self.best_ask - d), float(r)))
        for d, r in enumerate(self.limit_sell, start=1):
            out.append((BookEvent(EventKind.LIMIT_SELL, self.best_bid + d), float(r)))
        for k, r in enumerate(self.cancel_buy, start=1):
            out.append((BookEvent(EventKind.CANCEL_BUY, k), float(r)))
        for k, r in enumerate(self.cancel_sell, start=1):
            out.append((BookEvent(EventKind.CANCEL_SELL, k), float(r)))
        out.append((BookEvent(EventKind.MARKET_BUY, self.best_ask), self.market_buy))
        out.append((BookEvent(EventKind.MARKET_SELL, self.best_bid), self.market_sell))
        return out


def build_rate_table(state: BookState, params: ModelParams) -> RateTable:
    n, ba, bb = state.n, state.best_ask, state.best_bid
    if params.n != n:
        raise ParameterError(f"params built for n={params.n}, state has n={n}")
    x = state.x
    ticks = np.arange(1, n + 1)
    cancel_sell = np.zeros(n)
    sells = x > 0
    cancel_sell[sells] = params.th_a[ticks[sells] - bb] * x[sells]
    cancel_buy = np.zeros(n)
    buys = x < 0
    cancel_buy[buys] = params.th_b[ba - ticks[buys]] * (-x[buys])
    return RateTable(
        limit_buy=params.lam_b[1:ba].copy(),
        limit_sell=params.lam_a[1 : n - bb + 1].copy(),
        cancel_buy=cancel_buy,
        cancel_sell=cancel_sell,
        market_buy=params.market_buy_rate,
        market_sell=params.market_sell_rate,
        best_ask=ba,
        best_bid=bb,
    )


def draw_event(table: RateTable, u: float) -> BookEvent:
    """Pick the channel hit by ``u`` in ``[0, total)`` (channel order fixed)."""
    blocks = (
        (table.limit_buy, EventKind.LIMIT_BUY),
        (table.limit_sell, EventKind.LIMIT_SELL),
        (table.cancel_buy, EventKind.CANCEL_BUY),
        (table.cancel_sell, EventKind.CANCEL_SELL),
    )
    r = u
    for rates, kind in blocks:
        block_total = rates.sum()
        if r < block_total:
            idx = int(np.searchsorted(np.cumsum(rates), r, side="right"))
            idx = min(idx, rates.size - 1)
            while rates[idx] <= 0:  # rounding landed on an empty slot
                idx -= 1
            if kind is EventKind.LIMIT_BUY:
                return BookEvent(kind, table.best_ask - (idx + 1))
            if kind is EventKind.LIMIT_SELL:
                return BookEvent(kind, table.best_bid + (idx + 1))
            return BookEvent(kind, idx + 1)
        r -= block_total
    if r < table.market_buy or table.market_sell <= 0:
        return BookEvent(EventKind.MARKET_BUY, table.best_ask)
    return BookEvent(EventKind.MARKET_SELL, table.best_bid)


def step(state: BookState, params: ModelParams, rng: np.random.Generator):
    """One exact transition: ``(dt, event, new_state)``.

    Draws two uniforms from ``rng`` in the same order as the compiled engine.
    """
    table = build_rate_table(state, params)
    total = table.total
    if total <= 0:
        raise DeadState("total event rate is zero")
    dt = -math.log(1.0 - rng.random()) / total
    event = draw_event(table, rng.random() * total)
    return dt, event, apply_event(state, event)


def replication_rng(seed: int, rep: int = 0) -> np.random.Generator:
    """PCG64 stream for replication ``rep`` of experiment ``seed``.

    Seeds go through :class:`numpy.random.SeedSequence` with entropy
    ``[seed, rep]``, so a replication's stream does not depend on scheduling.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(rep)])))


_KIND_ORDER = [
    EventKind.LIMIT_BUY, EventKind.LIMIT_SELL, EventKind.CANCEL_BUY,
    EventKind.CANCEL_SELL, EventKind.MARKET_BUY, EventKind.MARKET_SELL,
]


@dataclass
class EventLog:
    """Physical event times with kinds (``EventKind`` values) and ticks."""

    times: np.ndarray
    kinds: np.ndarray
    ticks: np.ndarray

    def __len__(self) -> int:
        return int(self.times.size)

    def events(self):
        for t, k, tick in zip(self.times, self.kinds, self.ticks):
            yield float(t), BookEvent(EventKind(int(k)), int(tick))


@dataclass
class Trajectory:
    seed: int
    params: ModelParams
    horizon: float
    snap_times: np.ndarray
    snapshots: np.ndarray
    event_counts: dict[str, int]
    initial: BookState
    final: BookState
    quote_range: dict[str, int]
    n_events: int
    log: EventLog | None = None
    aggregate_drift: float = 0.0
    rep: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.params.n

    def state_at(self, j: int) -> BookState:
        return BookState(self.snapshots[j])

    def states(self):
        for j, t in enumerate(self.snap_times):
            yield float(t), self.state_at(j)

    def sup_quote_deviation(self, p: float) -> tuple[float, float]:
        """Exact ``sup_t |ask/n - p|`` and ``sup_t |bid/n - p|`` over the path."""
        n = self.n
        qr = self.quote_range
        ask = max(abs(qr["min_ask"] / n - p), abs(qr["max_ask"] / n - p))
        bid = max(abs(qr["min_bid"] / n - p), abs(qr["max_bid"] / n - p))
        return ask, bid


def simulate(
    initial: BookState,
    params: ModelParams,
    T: float,
    snap_times: Sequence[float],
    seed: int,
    *,
    rep: int = 0,
    record_log: bool = False,
    check_every: int = 0,
) -> Trajectory:
    """Run the chain to physical time ``n*T`` recording scaled snapshots.

    A snapshot at scaled time ``t`` holds the state after the last event at or
    before physical time ``n*t``.  The result is a pure function of the inputs
    and ``(seed, rep)``.
    """
    n = params.n
    if initial.n != n:
        raise ParameterError(f"initial book has n={initial.n}, params n={n}")
    snaps = np.asarray(sorted(float(s) for s in snap_times), dtype=float)
    if T < 0 or (snaps.size and (snaps[0] < 0 or snaps[-1] > T)):
        raise ParameterError("snapshot times must lie in [0, T]")
    rng = replication_rng(seed, rep)
    x = np.zeros(n + 1, dtype=np.int64)
    x[1:] = initial.x
    out = _engine.run(
        x,
        initial.best_ask,
        initial.best_bid,
        np.cumsum(params.lam_a),
        np.cumsum(params.lam_b),
        params.th_a,
        params.th_b,
        float(params.market_buy_rate),
        float(params.market_sell_rate),
        float(n * T),
        n * snaps,
        rng,
        record_log,
        REBUILD_EVERY,
        int(check_every),
    )
    (status, _t, ba, bb, snapshots, counts, noops, n_events,
     log_t, log_k, log_tick, extremes, drift) = out
    if status == _engine.DEAD:
        raise DeadState("total event rate is zero")
    if status == _engine.OVERFLOW:
        raise OverflowError("queue size exceeded 2**62")
    final = BookState(x[1:])
    assert final.best_ask == ba and final.best_bid == bb
    event_counts = {k.code: int(counts[int(k)]) for k in _KIND_ORDER}
    event_counts["noop_market"] = int(noops)
    return Trajectory(
        seed=seed,
        params=params,
        horizon=float(T),
        snap_times=snaps,
        snapshots=snapshots,
        event_counts=event_counts,
        initial=initial.copy(),
        final=final,
        quote_range={
            "min_ask": int(extremes[0]), "max_ask": int(extremes[1]),
            "min_bid": int(extremes[2]), "max_bid": int(extremes[3]),
        },
        n_events=int(n_events),
        log=EventLog(log_t.copy(), log_k.copy(), log_tick.copy()) if record_log else None,
        aggregate_drift=float(drift),
        rep=rep,
    )


def simulate_reference(initial, params, T, snap_times, seed, rep=0):
    """Slow pure-Python twin of :func:`simulate` built on :func:`step`.

    Returns ``(snapshots, events)`` with events as ``(time, BookEvent)``.
    """
    n = params.n
    rng = replication_rng(seed, rep)
    snaps = sorted(n * float(s) for s in snap_times)
    state = initial.copy()
    out, events = [], []
    t, j = 0.0, 0
    while True:
        table = build_rate_table(state, params)
        total = table.total
        if total <= 0:
            raise DeadState("total event rate is zero")
        t_new = t - math.log(1.0 - rng.random()) / total
        while j < len(snaps) and snaps[j] < t_new:
            out.append(state.copy())
            j += 1
        if t_new > n * T:
            break
        event = draw_event(table, rng.random() * total)
        state.apply(event)
        events.append((t_new, event))
        t = t_new
    while j < len(snaps):
        out.append(state.copy())
        j += 1
    return out, events


# --- export -----------------------------------------------------------------


def write_trajectory_csv(traj: Trajectory, path: Path) -> None:
    """Sparse snapshot table ``t,i,x_i`` (nonzero levels only)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "i", "x_i"])
        for t, row in zip(traj.snap_times, traj.snapshots):
            for i in np.flatnonzero(row):
                w.writerow([repr(float(t)), int(i) + 1, int(row[i])])


def write_event_log_csv(traj: Trajectory, path: Path, ms_per_unit: float = 1000.0) -> None:
    """Event log in the message-feed schema (``t_ms,kind,tick,size``).

    Physical times are converted with ``ms_per_unit`` and rounded to whole
    milliseconds; unit size throughout.
    """
    if traj.log is None:
        raise ValueError("trajectory was simulated without an event log")
    t_ms = np.rint(traj.log.times * ms_per_unit).astype(np.int64)
    codes = [k.code for k in _KIND_ORDER]
    with open(path, "w", newline="") as fh:
        fh.write("t_ms,kind,tick,size\n")
        for t, k, tick in zip(t_ms.tolist(), traj.log.kinds.tolist(), traj.log.ticks.tolist()):
            fh.write(f"{t},{codes[k]},{tick},1\n")


def manifest_dict(traj: Trajectory) -> dict:
    return {
        "params": traj.params.to_dict(),
        "seed": traj.seed,
        "replication": traj.rep,
        "horizon": traj.horizon,
        "snap_times": [float(t) for t in traj.snap_times],
        "event_counts": traj.event_counts,
        "n_events": traj.n_events,
        "quote_range": traj.quote_range,
    }


def write_manifest_json(traj: Trajectory, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(manifest_dict(traj), fh, indent=2, sort_keys=True)
        fh.write("\n")


__all__ = [
    "DeadState", "EventLog", "ModelParams", "ParameterError", "RateTable",
    "Trajectory", "build_rate_table", "draw_event", "market_event",
    "replication_rng", "simulate", "simulate_reference", "step",
]
