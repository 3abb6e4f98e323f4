"""Aggregate-depth order book state and single-order transitions.

Ticks are 1-based: tick ``i`` corresponds to price ``i/n``.  A positive entry
``x[i]`` holds that many unit sell orders, a negative entry holds ``-x[i]``
unit buy orders.  An empty sell side has best ask ``n + 1``; an empty buy side
has best bid ``0``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

MAX_QUEUE = 2**62


class IllegalEvent(ValueError):
    """Event is not admissible for the current book."""


class BookOverflow(OverflowError):
    pass


class EventKind(enum.IntEnum):
    LIMIT_BUY = 0
    LIMIT_SELL = 1
    CANCEL_BUY = 2
    CANCEL_SELL = 3
    MARKET_BUY = 4
    MARKET_SELL = 5

    @property
    def code(self) -> str:
        return _CODES[self]

    @classmethod
    def from_code(cls, code: str) -> "EventKind":
        return _FROM_CODE[code]


_CODES = {
    EventKind.LIMIT_BUY: "LB",
    EventKind.LIMIT_SELL: "LS",
    EventKind.CANCEL_BUY: "CB",
    EventKind.CANCEL_SELL: "CS",
    EventKind.MARKET_BUY: "MB",
    EventKind.MARKET_SELL: "MS",
}
_FROM_CODE = {v: k for k, v in _CODES.items()}

# +1 adds a sell / removes a buy; -1 adds a buy / removes a sell
_DELTA = {
    EventKind.LIMIT_SELL: 1,
    EventKind.MARKET_SELL: 1,
    EventKind.CANCEL_BUY: 1,
    EventKind.LIMIT_BUY: -1,
    EventKind.MARKET_BUY: -1,
    EventKind.CANCEL_SELL: -1,
}


@dataclass(frozen=True)
class BookEvent:
    kind: EventKind
    tick: int

    def is_noop(self, n: int) -> bool:
        return self.tick == 0 or self.tick == n + 1


def best_ask_of(x: np.ndarray) -> int:
    """Lowest tick holding sell orders, ``n + 1`` if there is none."""
    idx = np.flatnonzero(x > 0)
    return int(idx[0]) + 1 if idx.size else len(x) + 1


def best_bid_of(x: np.ndarray) -> int:
    """Highest tick holding buy orders, ``0`` if there is none."""
    idx = np.flatnonzero(x < 0)
    return int(idx[-1]) + 1 if idx.size else 0


class BookState:
    """Signed depth vector with cached best quotes.

    ``x`` is stored 0-based (``x[i - 1]`` is tick ``i``).  ``apply`` mutates
    in place; use :func:`apply_event` for a functional update.
    """

    __slots__ = ("n", "x", "best_ask", "best_bid")

    def __init__(self, x: Sequence[int] | np.ndarray):
        self.x = np.array(x, dtype=np.int64)
        if self.x.ndim != 1 or self.x.size == 0:
            raise ValueError("depth vector must be one-dimensional and non-empty")
        self.n = int(self.x.size)
        self.best_ask = best_ask_of(self.x)
        self.best_bid = best_bid_of(self.x)
        if self.best_bid >= self.best_ask:
            raise ValueError(
                f"crossed book: best bid {self.best_bid} >= best ask {self.best_ask}"
            )

    @classmethod
    def empty(cls, n: int) -> "BookState":
        return cls(np.zeros(n, dtype=np.int64))

    def copy(self) -> "BookState":
        new = object.__new__(BookState)
        new.n = self.n
        new.x = self.x.copy()
        new.best_ask = self.best_ask
        new.best_bid = self.best_bid
        return new

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BookState):
            return NotImplemented
        return self.n == other.n and bool(np.array_equal(self.x, other.x))

    def __repr__(self) -> str:
        return f"BookState(n={self.n}, best_bid={self.best_bid}, best_ask={self.best_ask})"

    def __getitem__(self, tick: int) -> int:
        return int(self.x[tick - 1])

    def check_legal(self, event: BookEvent) -> None:
        kind, k, n = event.kind, event.tick, self.n
        if kind is EventKind.MARKET_BUY:
            if k != self.best_ask:
                raise IllegalEvent(f"market buy must hit best ask {self.best_ask}, got {k}")
            return
        if kind is EventKind.MARKET_SELL:
            if k != self.best_bid:
                raise IllegalEvent(f"market sell must hit best bid {self.best_bid}, got {k}")
            return
        if not 1 <= k <= n:
            raise IllegalEvent(f"tick {k} outside 1..{n} for {kind.name}")
        if kind is EventKind.LIMIT_BUY and k >= self.best_ask:
            raise IllegalEvent(f"limit buy at {k} not below best ask {self.best_ask}")
        if kind is EventKind.LIMIT_SELL and k <= self.best_bid:
            raise IllegalEvent(f"limit sell at {k} not above best bid {self.best_bid}")
        if kind is EventKind.CANCEL_BUY and self.x[k - 1] >= 0:
            raise IllegalEvent(f"cancel buy at {k}: no buy orders there")
        if kind is EventKind.CANCEL_SELL and self.x[k - 1] <= 0:
            raise IllegalEvent(f"cancel sell at {k}: no sell orders there")

    def apply(self, event: BookEvent) -> None:
        """Apply one unit event in place, keeping the quote cache coherent."""
        self.check_legal(event)
        k = event.tick
        if event.is_noop(self.n):
            return
        delta = _DELTA[event.kind]
        i = k - 1
        new = int(self.x[i]) + delta
        if abs(new) > MAX_QUEUE:
            raise BookOverflow(f"queue at tick {k} exceeds 2**62")
        self.x[i] = new
        n = self.n
        if delta > 0:
            if new == 1 and k < self.best_ask:
                # new sell level inside the spread
                self.best_ask = k
            elif new == 0 and k == self.best_bid:
                self.best_bid = _scan_down(self.x, k - 1)
        else:
            if new == -1 and k > self.best_bid:
                self.best_bid = k
            elif new == 0 and k == self.best_ask:
                self.best_ask = _scan_up(self.x, k + 1, n)


def _scan_up(x: np.ndarray, start: int, n: int) -> int:
    for k in range(start, n + 1):
        if x[k - 1] > 0:
            return k
    return n + 1


def _scan_down(x: np.ndarray, start: int) -> int:
    for k in range(start, 0, -1):
        if x[k - 1] < 0:
            return k
    return 0


def best_ask(state: BookState) -> int:
    return state.best_ask


def best_bid(state: BookState) -> int:
    return state.best_bid


def apply_event(state: BookState, event: BookEvent) -> BookState:
    """Return the state after ``event``; ``state`` is left untouched."""
    new = state.copy()
    new.apply(event)
    return new


def market_event(state: BookState, kind: EventKind) -> BookEvent:
    """Market order against the current opposite quote (boundary tick if empty)."""
    if kind is EventKind.MARKET_BUY:
        return BookEvent(kind, state.best_ask)
    if kind is EventKind.MARKET_SELL:
        return BookEvent(kind, state.best_bid)
    raise ValueError(f"{kind.name} is not a market order")


def initial_book(rho, n: int) -> BookState:
    """Book with ``round(n * rho(i/n))`` orders at each tick ``i``."""
    grid = np.arange(1, n + 1) / n
    vals = np.asarray(rho(grid), dtype=float)
    return BookState(np.rint(n * vals).astype(np.int64))
