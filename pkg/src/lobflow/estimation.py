"""Message replay and order-flow intensity estimation.

Input is a CSV feed ``t_ms,kind,tick,size`` with kinds LB, LS, CB, CS, MB, MS.
Market orders carry the tick they execute at.  A market order that arrives
against an empty side carries the boundary tick (``n + 1`` for MB, ``0`` for
MS) and leaves the book unchanged.

Rates are the exponential-clock maximum-likelihood estimates: arrivals per
unit time for limit and market orders, and cancellations per unit of
queue exposure (time-integral of resting orders) for cancels.  Every event is
assigned the distance from the opposite best quote before it is applied.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

from .book import BookEvent, BookState, EventKind, IllegalEvent
from .fluid import FluidParams, bin_volume

HEADER = ["t_ms", "kind", "tick", "size"]
_SELL_SIDE = (EventKind.LIMIT_SELL, EventKind.CANCEL_SELL, EventKind.MARKET_BUY)


class ParseError(ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class OrderingError(ParseError):
    pass


class InsufficientData(RuntimeError):
    pass


class ReplayError(IllegalEvent):
    def __init__(self, index: int, line: int | None, reason: str):
        where = f"record {index}" + (f" (line {line})" if line is not None else "")
        super().__init__(f"{where}: {reason}")
        self.index = index
        self.line = line


@dataclass(frozen=True)
class MessageRecord:
    t_ms: int
    kind: EventKind
    tick: int
    size: int = 1
    line: int | None = None


def parse_messages(source, n: int | None = None) -> list[MessageRecord]:
    """Read and validate a message CSV.

    ``source`` may be bytes, text, a path or an open file.  When ``n`` is
    given ticks are range-checked against it.
    """
    text = _read_text(source)
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError(1, "missing header")
    header = [h.strip() for h in lines[0].rstrip("\r").split(",")]
    if header != HEADER:
        raise ParseError(1, f"expected header {','.join(HEADER)}, got {lines[0]!r}")
    out: list[MessageRecord] = []
    last = None
    for lineno, raw in enumerate(lines[1:], start=2):
        row = raw.rstrip("\r")
        if not row.strip():
            continue
        rec = _parse_row(row, lineno, n)
        if last is not None and rec.t_ms < last:
            raise OrderingError(lineno, f"timestamp {rec.t_ms} precedes {last}")
        last = rec.t_ms
        out.append(rec)
    return out


def _read_text(source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, (str, os.PathLike)) and not (isinstance(source, str) and "\n" in source):
        path = Path(source)
        if isinstance(source, os.PathLike) or path.exists():
            return path.read_bytes().decode("utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def _parse_row(row: str, lineno: int, n: int | None) -> MessageRecord:
    parts = row.split(",")
    if len(parts) != 4:
        raise ParseError(lineno, f"expected 4 fields, got {len(parts)}")
    t_s, kind_s, tick_s, size_s = (p.strip() for p in parts)
    try:
        t_ms = int(t_s)
        tick = int(tick_s)
        size = int(size_s)
    except ValueError:
        raise ParseError(lineno, f"non-integer field in {row!r}") from None
    try:
        kind = EventKind.from_code(kind_s)
    except KeyError:
        raise ParseError(lineno, f"unknown kind {kind_s!r}") from None
    if t_ms < 0:
        raise ParseError(lineno, "negative timestamp")
    if size < 1:
        raise ParseError(lineno, "size must be positive")
    upper = n if n is not None else None
    boundary_ok = (kind is EventKind.MARKET_SELL and tick == 0) or (
        kind is EventKind.MARKET_BUY and n is not None and tick == n + 1
    )
    if not boundary_ok and (tick < 1 or (upper is not None and tick > upper)):
        raise ParseError(lineno, f"tick {tick} out of range")
    return MessageRecord(t_ms, kind, tick, size, lineno)


def write_messages(records: Iterable[MessageRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(HEADER) + "\n")
        for r in records:
            fh.write(f"{r.t_ms},{r.kind.code},{r.tick},{r.size}\n")


def _apply_record(state: BookState, rec: MessageRecord, index: int) -> bool:
    """Apply a record unit by unit; returns True when it was a boundary no-op."""
    noop = False
    for unit in range(rec.size):
        if rec.kind is EventKind.MARKET_BUY:
            tick = rec.tick if unit == 0 else state.best_ask
        elif rec.kind is EventKind.MARKET_SELL:
            tick = rec.tick if unit == 0 else state.best_bid
        else:
            tick = rec.tick
        event = BookEvent(rec.kind, tick)
        try:
            state.apply(event)
        except IllegalEvent as exc:
            raise ReplayError(index, rec.line, str(exc)) from None
        noop = noop or event.is_noop(state.n)
    return noop


def replay(records: Sequence[MessageRecord], initial: BookState) -> Iterator[tuple[int, BookState, bool]]:
    """Yield ``(t_ms, state, noop)`` after each record; ``state`` is reused."""
    state = initial.copy()
    for idx, rec in enumerate(records):
        noop = _apply_record(state, rec, idx)
        yield rec.t_ms, state, noop


def reconstruct_book(records: Sequence[MessageRecord], n: int, initial: BookState | None = None):
    """Book after every record, preceded by ``(0, initial)``."""
    initial = BookState.empty(n) if initial is None else initial
    if initial.n != n:
        raise ValueError(f"initial book has n={initial.n}, expected {n}")
    out = [(0, initial.copy())]
    for t_ms, state, _ in replay(records, initial):
        out.append((t_ms, state.copy()))
    return out


def book_at(records: Sequence[MessageRecord], initial: BookState, t_ms: int) -> BookState:
    """State after every record stamped at or before ``t_ms``."""
    state = initial.copy()
    for idx, rec in enumerate(records):
        if rec.t_ms > t_ms:
            break
        _apply_record(state, rec, idx)
    return state


@dataclass
class RateEstimates:
    """Per-distance estimates; arrays are indexed by distance (slot 0 unused).

    ``theta_hat_*`` is only meaningful where ``theta_defined_*`` is True;
    absent distances hold 0.0 instead of NaN.
    """

    n: int
    elapsed: float
    lambda_hat_A: np.ndarray
    lambda_hat_B: np.ndarray
    theta_hat_A: np.ndarray
    theta_hat_B: np.ndarray
    theta_defined_A: np.ndarray
    theta_defined_B: np.ndarray
    upsilon_hat_A: float
    upsilon_hat_B: float
    arrivals_A: np.ndarray
    arrivals_B: np.ndarray
    cancels_A: np.ndarray
    cancels_B: np.ndarray
    exposure_A: np.ndarray
    exposure_B: np.ndarray
    market_counts: dict[str, int] = field(default_factory=dict)
    noops: int = 0
    n_records: int = 0

    @property
    def exposure(self) -> np.ndarray:
        """``exposure[d, 0]`` sell side, ``exposure[d, 1]`` buy side."""
        return np.stack([self.exposure_A, self.exposure_B], axis=1)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["side", "distance", "lambda_hat", "theta_hat", "exposure"])
            for side, lam, th, ok, ex in (
                ("sell", self.lambda_hat_A, self.theta_hat_A, self.theta_defined_A, self.exposure_A),
                ("buy", self.lambda_hat_B, self.theta_hat_B, self.theta_defined_B, self.exposure_B),
            ):
                for d in range(1, self.n + 1):
                    w.writerow([side, d, repr(float(lam[d])),
                                repr(float(th[d])) if ok[d] else "", repr(float(ex[d]))])

    def summary(self) -> dict:
        return {
            "n": self.n,
            "elapsed": self.elapsed,
            "upsilon_hat_A": self.upsilon_hat_A,
            "upsilon_hat_B": self.upsilon_hat_B,
            "records": self.n_records,
            "noop_market_orders": self.noops,
            "totals": {
                "LS": int(self.arrivals_A.sum()),
                "LB": int(self.arrivals_B.sum()),
                "CS": int(self.cancels_A.sum()),
                "CB": int(self.cancels_B.sum()),
                **self.market_counts,
            },
        }

    def write_summary(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


class _ExposureMeter:
    """Time-integral of queue size keyed by distance from the opposite quote."""

    def __init__(self, state: BookState, t0: float):
        n = state.n
        self.ticks = np.arange(1, n + 1)
        self.last = np.full(n, t0)
        self.sell = np.zeros(n + 2)
        self.buy = np.zeros(n + 2)

    def flush_tick(self, state: BookState, k: int, t: float) -> None:
        i = k - 1
        q = state.x[i]
        dt = t - self.last[i]
        if q > 0:
            self.sell[k - state.best_bid] += q * dt
        elif q < 0:
            self.buy[state.best_ask - k] += -q * dt
        self.last[i] = t

    def flush_all(self, x: np.ndarray, ba: int, bb: int, t: float) -> None:
        dt = t - self.last
        s = x > 0
        self.sell[self.ticks[s] - bb] += x[s] * dt[s]
        b = x < 0
        self.buy[ba - self.ticks[b]] += -x[b] * dt[b]
        self.last[:] = t


def estimate_rates(
    records: Sequence[MessageRecord],
    n: int,
    initial: BookState | None,
    horizon_ms: int,
    *,
    start_ms: int = 0,
    time_unit_ms: float = 1000.0,
    pooling: int = 1,
) -> RateEstimates:
    """Occurrence/exposure estimates over the window ``(start_ms, start_ms + horizon_ms]``.

    Records at or before ``start_ms`` only build the starting book.  Rates are
    per ``time_unit_ms`` (seconds by default).
    """
    if horizon_ms <= 0:
        raise ValueError("horizon_ms must be positive")
    initial = BookState.empty(n) if initial is None else initial
    end_ms = start_ms + horizon_ms
    state = initial.copy()
    pos = 0
    while pos < len(records) and records[pos].t_ms <= start_ms:
        _apply_record(state, records[pos], pos)
        pos += 1

    unit = float(time_unit_ms)
    t0 = start_ms / unit
    meter = _ExposureMeter(state, t0)
    arr_a = np.zeros(n + 2, dtype=np.int64)
    arr_b = np.zeros(n + 2, dtype=np.int64)
    can_a = np.zeros(n + 2, dtype=np.int64)
    can_b = np.zeros(n + 2, dtype=np.int64)
    market = {"MB": 0, "MS": 0}
    noops = 0
    used = 0
    for idx in range(pos, len(records)):
        rec = records[idx]
        if rec.t_ms > end_ms:
            break
        used += 1
        t = rec.t_ms / unit
        for u in range(rec.size):
            kind, k = rec.kind, rec.tick
            if kind is EventKind.MARKET_BUY:
                k = k if u == 0 else state.best_ask
                market["MB"] += 1
            elif kind is EventKind.MARKET_SELL:
                k = k if u == 0 else state.best_bid
                market["MS"] += 1
            elif kind is EventKind.LIMIT_BUY:
                arr_b[_dist(state.best_ask - k, n)] += 1
            elif kind is EventKind.LIMIT_SELL:
                arr_a[_dist(k - state.best_bid, n)] += 1
            elif kind is EventKind.CANCEL_BUY:
                can_b[_dist(state.best_ask - k, n)] += 1
            else:
                can_a[_dist(k - state.best_bid, n)] += 1
            event = BookEvent(kind, k)
            if event.is_noop(n):
                noops += 1
                try:
                    state.check_legal(event)
                except IllegalEvent as exc:
                    raise ReplayError(idx, rec.line, str(exc)) from None
                continue
            meter.flush_tick(state, k, t)
            ba, bb = state.best_ask, state.best_bid
            try:
                state.apply(event)
            except IllegalEvent as exc:
                raise ReplayError(idx, rec.line, str(exc)) from None
            if state.best_ask != ba or state.best_bid != bb:
                meter.flush_all(state.x, ba, bb, t)
    meter.flush_all(state.x, state.best_ask, state.best_bid, end_ms / unit)

    elapsed = horizon_ms / unit
    th_a, ok_a = _pooled_ratio(can_a, meter.sell, pooling, n)
    th_b, ok_b = _pooled_ratio(can_b, meter.buy, pooling, n)
    return RateEstimates(
        n=n,
        elapsed=elapsed,
        lambda_hat_A=arr_a[: n + 1] / elapsed,
        lambda_hat_B=arr_b[: n + 1] / elapsed,
        theta_hat_A=th_a,
        theta_hat_B=th_b,
        theta_defined_A=ok_a,
        theta_defined_B=ok_b,
        upsilon_hat_A=market["MS"] / elapsed,
        upsilon_hat_B=market["MB"] / elapsed,
        arrivals_A=arr_a[: n + 1],
        arrivals_B=arr_b[: n + 1],
        cancels_A=can_a[: n + 1],
        cancels_B=can_b[: n + 1],
        exposure_A=meter.sell[: n + 1],
        exposure_B=meter.buy[: n + 1],
        market_counts=market,
        noops=noops,
        n_records=used,
    )


def _dist(d: int, n: int) -> int:
    if not 1 <= d <= n:
        raise IllegalEvent(f"distance {d} from opposite quote outside 1..{n}")
    return d


def _pooled_ratio(counts, exposure, width: int, n: int):
    if width < 1:
        raise ValueError("pooling width must be >= 1")
    rate = np.zeros(n + 1)
    ok = np.zeros(n + 1, dtype=bool)
    for lo in range(1, n + 1, width):
        hi = min(n, lo + width - 1)
        ex = exposure[lo : hi + 1].sum()
        if ex > 0:
            rate[lo : hi + 1] = counts[lo : hi + 1].sum() / ex
            ok[lo : hi + 1] = True
    return rate, ok


# --- four-step in-sample comparison -----------------------------------------


class _GridLookup:
    """Piecewise-constant function on ``[0, 1]`` from values at ``d/n``."""

    def __init__(self, values: np.ndarray, n: int, scale: float = 1.0):
        self.values = np.asarray(values, dtype=float) * scale
        self.n = n

    def __call__(self, u):
        idx = np.clip(np.rint(np.asarray(u, dtype=float) * self.n).astype(np.int64), 0, self.n)
        return self.values[idx]


@dataclass
class WorkflowReport:
    n: int
    t0_ms: int
    p_bid_tick: int
    p_ask_tick: int
    side: str
    size_normalizer: float
    rows: list[dict]
    notes: list[str]
    price_bid: float | None = None
    price_ask: float | None = None

    def mean_relative_error(self, offset_ms: int) -> float:
        errs = [r["relative_error"] for r in self.rows if r["offset_ms"] == offset_ms]
        return float(np.mean(errs)) if errs else float("nan")

    @property
    def offsets(self) -> list[int]:
        return sorted({r["offset_ms"] for r in self.rows})

    def write_csv(self, path) -> None:
        cols = ["offset_ms", "snapshot_ms", "bin", "tick_lo", "tick_hi", "empirical",
                "predicted", "relative_error", "empirical_scaled", "predicted_scaled"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.rows:
                w.writerow([_fmt(r[c]) for c in cols])


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def _bins(side: str, ba0: int, bb0: int, n: int, width: int, count: int, offset: int):
    out = []
    for j in range(count):
        if side == "sell":
            lo = ba0 + offset + j * width
            hi = lo + width - 1
        else:
            hi = bb0 - offset - j * width
            lo = hi - width + 1
        if lo < 1 or hi > n:
            raise InsufficientData(f"bin {j} ({lo}..{hi}) falls outside the price grid 1..{n}")
        out.append((lo, hi))
    return out


def four_step_workflow(
    records: Sequence[MessageRecord],
    n: int,
    t0_ms: int,
    snap_offsets_ms: Sequence[int],
    bin_ticks: int = 3,
    *,
    initial: BookState | None = None,
    bin_count: int = 7,
    bin_offset: int = 10,
    side: str = "sell",
    size_normalizer: float = 1.0,
    time_unit_ms: float = 1000.0,
    pooling: int = 1,
    tick_size: float | None = None,
    price_origin: float = 0.0,
) -> WorkflowReport:
    """In-sample comparison of observed bin volumes with the fluid prediction.

    1. the book after the last record at or before ``t0_ms`` is the initial
       profile;
    2. the sell-side limit price is the initial best bid, the buy-side one the
       initial best ask;
    3. snapshots are taken at ``t0_ms + offset``;
    4. intensities for each snapshot are estimated on ``(t0_ms, t0_ms + offset]``.
    """
    if side not in ("sell", "buy"):
        raise ValueError("side must be 'sell' or 'buy'")
    offsets = [int(o) for o in snap_offsets_ms]
    if offsets != sorted(offsets) or (offsets and offsets[0] < 0):
        raise ValueError("snapshot offsets must be sorted and nonnegative")
    initial = BookState.empty(n) if initial is None else initial
    start = book_at(records, initial, t0_ms)
    ba0, bb0 = start.best_ask, start.best_bid
    bins = _bins(side, ba0, bb0, n, bin_ticks, bin_count, bin_offset)
    x0 = start.x.astype(float)
    rho = _GridLookup(np.concatenate([[0.0], x0 / n]), n)
    notes = [
        "sell-side prediction uses p = initial best bid, buy-side uses p = initial best ask",
    ]

    rows = []
    for off in offsets:
        snap = book_at(records, initial, t0_ms + off)
        tau = off / float(time_unit_ms)
        if off == 0:
            zero = np.zeros(n + 1)
            lam_a = lam_b = th_a = th_b = zero
        else:
            est = estimate_rates(records, n, initial, off, start_ms=t0_ms,
                                 time_unit_ms=time_unit_ms, pooling=pooling)
            if est.n_records == 0:
                raise InsufficientData(f"no events in window ({t0_ms}, {t0_ms + off}]")
            lam_a, lam_b = est.lambda_hat_A, est.lambda_hat_B
            th_a = np.where(est.theta_defined_A, est.theta_hat_A, 0.0)
            th_b = np.where(est.theta_defined_B, est.theta_hat_B, 0.0)
            absent = [d for d in range(1, n + 1)
                      if not (est.theta_defined_A if side == "sell" else est.theta_defined_B)[d]]
            if absent:
                notes.append(f"offset {off}: no exposure at {len(absent)} distances, "
                             "cancellation treated as zero there")
        # per-order physical cancel rate theta_hat equals Theta(d/n)/n
        p = (bb0 if side == "sell" else ba0) / n
        fp = FluidParams(
            rho=rho,
            p=p,
            lambda_A=_GridLookup(lam_a, n),
            lambda_B=_GridLookup(lam_b, n),
            theta_A=_GridLookup(th_a, n, scale=n),
            theta_B=_GridLookup(th_b, n, scale=n),
        )
        t_scaled = tau / n
        for j, (lo, hi) in enumerate(bins):
            if side == "sell":
                emp = float(np.maximum(snap.x[lo - 1 : hi], 0).sum())
            else:
                emp = float(np.maximum(-snap.x[lo - 1 : hi], 0).sum())
            pred = bin_volume(fp, n, (lo / n, hi / n), t_scaled, side)
            if pred > 0:
                rel = abs(emp - pred) / pred
            else:
                rel = 0.0 if emp == 0 else math.inf
            rows.append({
                "offset_ms": off,
                "snapshot_ms": t0_ms + off,
                "bin": j,
                "tick_lo": lo,
                "tick_hi": hi,
                "empirical": emp,
                "predicted": pred,
                "relative_error": rel,
                "empirical_scaled": emp / size_normalizer,
                "predicted_scaled": pred / size_normalizer,
            })
    report = WorkflowReport(n, t0_ms, bb0, ba0, side, size_normalizer, rows, notes)
    if tick_size is not None:
        report.price_bid = round(price_origin + bb0 * tick_size, 10)
        report.price_ask = round(price_origin + ba0 * tick_size, 10)
    return report
