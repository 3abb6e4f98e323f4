"""Deterministic shape limit: closed-form density, RK4 cross-check, bin volumes.

Above the limit price ``p`` the density obeys ``d/dt phi = Lambda_A(x-p) -
Theta_A(x-p) phi``; below it ``d/dt phi = -Lambda_B(p-x) - Theta_B(p-x) phi``;
``phi(p, t) = 0`` and ``phi(., 0) = rho``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .measures import DomainError

THETA_EPS = 1e-12


@dataclass(frozen=True)
class FluidParams:
    rho: Callable
    p: float
    lambda_A: Callable
    lambda_B: Callable
    theta_A: Callable
    theta_B: Callable

    def validate(self, delta: float | None = None, grid_size: int = 2001) -> None:
        """Check the sign pattern of ``rho`` around ``p`` on a sampling grid."""
        if not 0 < self.p < 1:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        x = np.linspace(0.0, 1.0, grid_size)
        r = np.asarray(self.rho(x), dtype=float)
        if abs(float(np.asarray(self.rho(np.array([self.p])))[0])) > 1e-12:
            raise ValueError("initial density must vanish at p")
        if np.any(r[x < self.p] > 0) or np.any(r[x > self.p] < 0):
            raise ValueError("initial density must be <= 0 below p and >= 0 above p")
        if delta is not None:
            near_lo = (x > self.p - delta) & (x < self.p)
            near_hi = (x > self.p) & (x < self.p + delta)
            if np.any(r[near_lo] == 0) or np.any(r[near_hi] == 0):
                raise ValueError(f"initial density must be nonzero within {delta} of p")


def _relax(r0, lam, th, t):
    """``exp(-th t) r0 + (lam/th)(1 - exp(-th t))`` with the ``th -> 0`` limit."""
    r0, lam, th = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (r0, lam, th)))
    t = np.asarray(t, dtype=float)
    small = th < THETA_EPS
    safe = np.where(small, 1.0, th)
    decay = np.exp(-safe * t)
    relaxed = decay * r0 + (lam / safe) * (-np.expm1(-safe * t))
    return np.where(small, r0 + lam * t, relaxed)


def phi_plus(x, t, fp: FluidParams):
    """Sell-side density at ``x > p``."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= fp.p):
        raise DomainError("phi_plus is defined for x > p")
    u = x - fp.p
    r0 = np.maximum(np.asarray(fp.rho(x), dtype=float), 0.0)
    out = _relax(r0, fp.lambda_A(u), fp.theta_A(u), t)
    return float(out) if out.ndim == 0 else out


def phi_minus(x, t, fp: FluidParams):
    """Buy-side density (as a positive number) at ``x < p``."""
    x = np.asarray(x, dtype=float)
    if np.any(x >= fp.p):
        raise DomainError("phi_minus is defined for x < p")
    u = fp.p - x
    r0 = np.maximum(-np.asarray(fp.rho(x), dtype=float), 0.0)
    out = _relax(r0, fp.lambda_B(u), fp.theta_B(u), t)
    return float(out) if out.ndim == 0 else out


def phi(x, t, fp: FluidParams) -> np.ndarray:
    """Signed density on arbitrary points; zero exactly at ``p``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.zeros_like(x)
    hi = x > fp.p
    lo = x < fp.p
    if hi.any():
        out[hi] = phi_plus(x[hi], t, fp)
    if lo.any():
        out[lo] = -np.asarray(phi_minus(x[lo], t, fp))
    return out


@dataclass
class FluidField:
    grid: np.ndarray
    times: np.ndarray
    values: np.ndarray  # shape (len(times), len(grid))

    @property
    def plus(self) -> np.ndarray:
        return np.maximum(self.values, 0.0)

    @property
    def minus(self) -> np.ndarray:
        return np.maximum(-self.values, 0.0)


def evaluate_field(fp: FluidParams, grid: Sequence[float], times: Sequence[float]) -> FluidField:
    grid = np.asarray(grid, dtype=float)
    times = np.asarray(times, dtype=float)
    values = np.array([phi(grid, t, fp) for t in times]).reshape(times.size, grid.size)
    return FluidField(grid, times, values)


def solve_ode(fp: FluidParams, grid: Sequence[float], times: Sequence[float], dt_max: float) -> FluidField:
    """Classic fourth-order Runge-Kutta, all grid points integrated together.

    Each interval between requested times is split into equal steps no longer
    than ``dt_max``.  The row at ``x = p`` is pinned to zero.
    """
    if dt_max <= 0:
        raise ValueError("dt_max must be positive")
    grid = np.asarray(grid, dtype=float)
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or (times.size and times[0] < 0):
        raise ValueError("times must be sorted and nonnegative")

    hi = grid > fp.p
    lo = grid < fp.p
    src = np.zeros_like(grid)
    rate = np.zeros_like(grid)
    src[hi] = fp.lambda_A(grid[hi] - fp.p)
    rate[hi] = fp.theta_A(grid[hi] - fp.p)
    src[lo] = -np.asarray(fp.lambda_B(fp.p - grid[lo]))
    rate[lo] = fp.theta_B(fp.p - grid[lo])
    pinned = ~(hi | lo)

    def rhs(y):
        return src - rate * y

    y = np.asarray(fp.rho(grid), dtype=float).copy()
    y[pinned] = 0.0
    out = np.empty((times.size, grid.size))
    t = 0.0
    for j, target in enumerate(times):
        span = target - t
        steps = math.ceil(span / dt_max - 1e-12) if span > 0 else 0
        if steps:
            h = span / steps
            for _ in range(steps):
                k1 = rhs(y)
                k2 = rhs(y + 0.5 * h * k1)
                k3 = rhs(y + 0.5 * h * k2)
                k4 = rhs(y + h * k3)
                y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
                y[pinned] = 0.0
        out[j] = y
        t = target
    return FluidField(grid, times, out)


def ticks_in(interval: tuple[float, float], n: int) -> np.ndarray:
    """Ticks ``i`` in 1..n with ``i/n`` inside the closed interval."""
    lo, hi = interval
    if lo > hi:
        return np.empty(0, dtype=np.int64)
    first = max(1, math.ceil(lo * n - 1e-9))
    last = min(n, math.floor(hi * n + 1e-9))
    return np.arange(first, last + 1, dtype=np.int64)


def bin_volume(fp: FluidParams, n: int, interval: tuple[float, float], t: float, side: str) -> float:
    """Predicted order count ``n * sum phi^{+/-}(i/n, t)`` over ticks in ``interval``."""
    lo, hi = interval
    if not (0.0 <= lo <= 1.0 and 0.0 <= hi <= 1.0):
        raise ValueError(f"bin {interval} not inside [0, 1]")
    ticks = ticks_in(interval, n)
    if ticks.size == 0:
        return 0.0
    vals = phi(ticks / n, t, fp)
    if side == "sell":
        dens = np.maximum(vals, 0.0)
    elif side == "buy":
        dens = np.maximum(-vals, 0.0)
    else:
        raise ValueError("side must be 'sell' or 'buy'")
    return float(n * dens.sum())


def atoms_on_grid(fp: FluidParams, n: int, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Fluid pair discretized to atoms ``phi^{+/-}(i/n, t) / n`` at ``i/n``."""
    vals = phi(np.arange(1, n + 1) / n, t, fp)
    return np.maximum(vals, 0.0) / n, np.maximum(-vals, 0.0) / n


def write_field_csv(field: FluidField, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "t", "phi", "phi_plus", "phi_minus"])
        for j, t in enumerate(field.times):
            for x, v in zip(field.grid, field.values[j]):
                w.writerow([repr(float(x)), repr(float(t)), repr(float(v)),
                            repr(max(float(v), 0.0)), repr(max(-float(v), 0.0))])
