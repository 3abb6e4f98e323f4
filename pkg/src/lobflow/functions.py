"""Named scalar profiles on [0, 1]: intensity shapes and initial densities.

Every profile is a small frozen dataclass so it can be written to a run
manifest and rebuilt from JSON with :func:`from_dict`.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np


@dataclass(frozen=True)
class Constant:
    value: float
    name: str = field(default="constant", init=False)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return np.full(u.shape, float(self.value))


@dataclass(frozen=True)
class Linear:
    """``a + b * u``."""

    a: float
    b: float
    name: str = field(default="linear", init=False)

    def __call__(self, u):
        return self.a + self.b * np.asarray(u, dtype=float)


@dataclass(frozen=True)
class ExpDecay:
    """``scale * exp(-rate * u)``."""

    scale: float
    rate: float
    name: str = field(default="exp_decay", init=False)

    def __call__(self, u):
        return self.scale * np.exp(-self.rate * np.asarray(u, dtype=float))


@dataclass(frozen=True)
class Tabulated:
    """Values at ``u = i/n`` for ``i = 1..n``; linear interpolation in between.

    The simulator only ever evaluates on that grid, so the interpolation is
    used solely by the fluid solver.  Below ``1/n`` the first value is held.
    """

    values: tuple[float, ...]
    name: str = field(default="tabulated", init=False)

    def __call__(self, u):
        vals = np.asarray(self.values, dtype=float)
        grid = np.arange(1, vals.size + 1) / vals.size
        return np.interp(np.asarray(u, dtype=float), grid, vals)


@dataclass(frozen=True)
class ClippedLinear:
    """Initial density ``slope * (x - p)`` clipped to ``[-cap, cap]``."""

    p: float = 0.5
    slope: float = 4.0
    cap: float = 1.0
    name: str = field(default="clipped_linear", init=False)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.clip(self.slope * (x - self.p), -self.cap, self.cap)


_KINDS = {
    "constant": Constant,
    "linear": Linear,
    "exp_decay": ExpDecay,
    "tabulated": Tabulated,
    "clipped_linear": ClippedLinear,
}


def from_dict(spec: dict[str, Any]):
    spec = dict(spec)
    try:
        cls = _KINDS[spec.pop("name")]
    except KeyError as exc:
        raise ValueError(f"unknown profile {exc.args[0]!r}; expected one of {sorted(_KINDS)}")
    if cls is Tabulated:
        spec["values"] = tuple(float(v) for v in spec["values"])
    return cls(**spec)


def to_dict(profile) -> dict[str, Any]:
    d = asdict(profile)
    if "values" in d:
        d["values"] = list(d["values"])
    return d


def tabulate(f, n: int) -> np.ndarray:
    """``f(i/n)`` for ``i = 1..n`` as a float array."""
    return np.asarray(f(np.arange(1, n + 1) / n), dtype=float).reshape(n)
