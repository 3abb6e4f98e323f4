"""Scaled shape measures of the book, test-function pairings and metrics."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import chebyshev

from .book import BookState


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class ShapeMeasure:
    """Finite atomic measure on [0, 1] with positive masses at ``i/n``."""

    locations: np.ndarray
    masses: np.ndarray
    n: int

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=float)
        mass = np.asarray(self.masses, dtype=float)
        keep = mass != 0
        if np.any(mass < 0):
            raise ValueError("masses must be nonnegative")
        object.__setattr__(self, "locations", loc[keep])
        object.__setattr__(self, "masses", mass[keep])

    @classmethod
    def empty(cls, n: int) -> "ShapeMeasure":
        return cls(np.empty(0), np.empty(0), n)

    @classmethod
    def from_grid(cls, values, n: int) -> "ShapeMeasure":
        """Atoms ``values[i-1]`` at ``i/n``."""
        values = np.asarray(values, dtype=float)
        return cls(np.arange(1, values.size + 1) / n, values, n)

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def atoms(self) -> list[tuple[float, float]]:
        return list(zip(self.locations.tolist(), self.masses.tolist()))

    def __len__(self) -> int:
        return int(self.masses.size)


def shape_measures(state: BookState) -> tuple[ShapeMeasure, ShapeMeasure]:
    """Sell-side and buy-side shapes: mass ``x_i^{+/-} / n**2`` at ``i/n``."""
    n = state.n
    x = state.x
    return shape_pair_from_depth(x, n)


def shape_pair_from_depth(x, n: int) -> tuple[ShapeMeasure, ShapeMeasure]:
    x = np.asarray(x)
    scale = float(n) ** 2
    plus = ShapeMeasure.from_grid(np.maximum(x, 0) / scale, n)
    minus = ShapeMeasure.from_grid(np.maximum(-x, 0) / scale, n)
    return plus, minus


def pair(measure: ShapeMeasure, f: Callable) -> float:
    """``sum(mass * f(location))``; ``f`` must accept arrays."""
    if len(measure) == 0:
        return 0.0
    vals = np.broadcast_to(np.asarray(f(measure.locations), dtype=float), measure.masses.shape)
    return float(np.dot(measure.masses, vals))


def signed_pair(plus: ShapeMeasure, minus: ShapeMeasure, f: Callable) -> float:
    """Pairing with the signed shape ``plus - minus``."""
    return pair(plus, f) - pair(minus, f)


class TestBasis:
    """Ordered test functions for the truncated weak metric.

    Default: shifted Chebyshev polynomials ``T_{k-1}(2x - 1)``, so the first
    function is the constant 1.  Truncating at ``K`` terms changes the metric
    by at most ``2**-K``.
    """

    __test__ = False  # keep pytest from collecting this class

    def __init__(self, functions: Sequence[Callable] | None = None, K: int = 20):
        if functions is None:
            if K < 1:
                raise ValueError("K must be >= 1")
            functions = [_shifted_chebyshev(k) for k in range(K)]
        self.functions = list(functions)
        if not self.functions:
            raise ValueError("basis needs at least one function")
        self.K = len(self.functions)

    @property
    def tail_bound(self) -> float:
        return 2.0 ** -self.K

    def describe(self) -> dict:
        return {"kind": "shifted_chebyshev", "K": self.K}

    def moments(self, measure: ShapeMeasure) -> np.ndarray:
        return np.array([pair(measure, f) for f in self.functions])


def _shifted_chebyshev(degree: int) -> Callable:
    coef = np.zeros(degree + 1)
    coef[-1] = 1.0

    def phi(x):
        return chebyshev.chebval(2.0 * np.asarray(x, dtype=float) - 1.0, coef)

    phi.__name__ = f"T{degree}"
    return phi


def _dplus_from_moments(diff: np.ndarray) -> float:
    a = np.abs(diff)
    weights = 0.5 ** np.arange(1, a.size + 1)
    return float(np.sum(weights * a / (1.0 + a)))


def metric_dplus(a: ShapeMeasure, b: ShapeMeasure, basis: TestBasis) -> float:
    """Truncated weak metric; lies in [0, 1) and is within ``basis.tail_bound``
    of the untruncated series."""
    return _dplus_from_moments(basis.moments(a) - basis.moments(b))


def metric_d(
    pair_a: tuple[ShapeMeasure, ShapeMeasure],
    pair_b: tuple[ShapeMeasure, ShapeMeasure],
    basis: TestBasis,
) -> float:
    """Product metric ``sqrt(d+(sell)^2 + d+(buy)^2)``."""
    return float(np.hypot(metric_dplus(pair_a[0], pair_b[0], basis),
                          metric_dplus(pair_a[1], pair_b[1], basis)))


def mollifier(f: Callable, p: float, gamma: float) -> Callable:
    """``f`` on ``[p, 1]``, zero on ``[0, p - gamma]``, smoothstep bridge between.

    The bridge is the cubic Hermite interpolant with zero slope at both ends,
    ``f(p) * s**2 * (3 - 2 s)``, which stays between 0 and ``f(p)``.
    """
    if not 0 < p < 1:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    if not 0 < gamma < p:
        raise DomainError(f"gamma must lie in (0, p={p}), got {gamma}")
    fp = float(np.asarray(f(np.array([p]))).reshape(-1)[0])
    lo = p - gamma

    def f_gamma(x):
        x = np.asarray(x, dtype=float)
        s = np.clip((x - lo) / gamma, 0.0, 1.0)
        bridge = np.clip(fp * s * s * (3.0 - 2.0 * s), min(0.0, fp), max(0.0, fp))
        upper = np.broadcast_to(np.asarray(f(x), dtype=float), x.shape)
        return np.where(x >= p, upper, np.where(x <= lo, 0.0, bridge))

    return f_gamma


def write_measure_csv(measure: ShapeMeasure, path, t: float) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# n={measure.n} t={t!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["location", "mass"])
        for loc, m in measure.atoms():
            w.writerow([repr(loc), repr(m)])
