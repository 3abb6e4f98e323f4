"""Experiment configuration shared by every subcommand.

A config is a JSON object; keys not listed here are rejected so that typos
in sweep files fail loudly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from . import functions
from .book import BookState, initial_book
from .fluid import FluidParams
from .sim import ModelParams, ParameterError


class ConfigError(ValueError):
    pass


@dataclass
class Figure1Config:
    t0_ms: int = 0
    snap_offsets_ms: list[int] = field(default_factory=lambda: [300_000, 600_000, 900_000, 1_200_000])
    # 20 minutes = 100 model units = scaled time 1 at n=100
    ms_per_unit: float = 12_000.0
    bin_ticks: int = 3
    bin_count: int = 7
    bin_offset: int = 10
    side: str = "sell"
    size_normalizer: float = 363.0
    tick_size: float | None = None
    price_origin: float = 0.0


@dataclass
class PureDeathConfig:
    # exact-sum check
    n: int = 10_000
    kappa: float = 0.5
    theta_bar: float = 1.0
    upsilon: float = 1.0
    z0_fraction: float = 0.25
    # Monte Carlo check
    mc_n: int = 100
    mc_z0: int = 2_500
    mc_reps: int = 10_000


@dataclass
class EstimateConfig:
    start_ms: int = 0
    horizon_ms: int | None = None
    pooling: int = 1


@dataclass
class ExperimentConfig:
    n: int = 100
    p: float = 0.5
    delta: float = 0.25
    rho: dict = field(default_factory=lambda: {"name": "clipped_linear", "p": 0.5, "slope": 4.0, "cap": 1.0})
    lambda_A: dict = field(default_factory=lambda: {"name": "constant", "value": 2.0})
    lambda_B: dict = field(default_factory=lambda: {"name": "constant", "value": 2.0})
    theta_A: dict = field(default_factory=lambda: {"name": "constant", "value": 1.0})
    theta_B: dict = field(default_factory=lambda: {"name": "constant", "value": 1.0})
    upsilon_A: float = 1.0
    upsilon_B: float = 1.0
    kappa: float = 0.5
    T: float = 1.0
    snap_times: list[float] = field(default_factory=lambda: [0.0, 0.25, 0.5, 1.0])
    n_ladder: list[int] = field(default_factory=lambda: [50, 100, 200, 400])
    reps: int = 20
    basis_K: int = 20
    seed: int = 0
    dt_max: float = 1e-3
    ms_per_unit: float = 1000.0
    bins: list[list[float]] | None = None
    bin_ticks: int = 3
    bin_count: int = 7
    figure1: Figure1Config = field(default_factory=Figure1Config)
    pure_death: PureDeathConfig = field(default_factory=PureDeathConfig)
    estimate: EstimateConfig = field(default_factory=EstimateConfig)

    # -- construction -----------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        kwargs = {}
        nested = {"figure1": Figure1Config, "pure_death": PureDeathConfig, "estimate": EstimateConfig}
        known = {f.name for f in fields(cls)}
        for key, value in data.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            if key in nested:
                sub = nested[key]
                sub_known = {f.name for f in fields(sub)}
                if not isinstance(value, dict):
                    raise ConfigError(f"{key} must be an object")
                bad = set(value) - sub_known
                if bad:
                    raise ConfigError(f"unknown config key {key}.{sorted(bad)[0]!r}")
                value = sub(**value)
            kwargs[key] = value
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return asdict(self)

    # -- validation -------------------------------------------------------

    def validate(self) -> None:
        if not (isinstance(self.n, int) and self.n >= 1):
            raise ConfigError("n must be a positive integer")
        if not self.kappa < 1:
            raise ConfigError(
                f"rate scaling assumption violated: kappa must be < 1 (got {self.kappa})"
            )
        if self.upsilon_A < 0 or self.upsilon_B < 0:
            raise ConfigError("rate scaling assumption violated: upsilon must be >= 0")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if not self.n_ladder or any((not isinstance(m, int)) or m < 1 for m in self.n_ladder):
            raise ConfigError("n_ladder must be a non-empty list of positive integers")
        if self.T < 0:
            raise ConfigError("T must be >= 0")
        if any(t < 0 or t > self.T for t in self.snap_times):
            raise ConfigError("snap_times must lie in [0, T]")
        if self.basis_K < 1:
            raise ConfigError("basis_K must be >= 1")
        if self.dt_max <= 0:
            raise ConfigError("dt_max must be > 0")
        if self.ms_per_unit <= 0 or self.figure1.ms_per_unit <= 0:
            raise ConfigError("ms_per_unit must be > 0")
        if self.bins is not None:
            for b in self.bins:
                if len(b) != 2 or not (0.0 <= b[0] <= b[1] <= 1.0):
                    raise ConfigError(f"bin {b} must be [lo, hi] inside [0, 1]")
        try:
            profiles = {k: functions.from_dict(getattr(self, k))
                        for k in ("rho", "lambda_A", "lambda_B", "theta_A", "theta_B")}
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"bad profile: {exc}") from None
        grid = np.linspace(0.0, 1.0, 2001)
        for k in ("lambda_A", "lambda_B"):
            if not np.all(np.asarray(profiles[k](grid)) > 0):
                raise ConfigError(f"rate scaling assumption violated: {k} must be positive on [0, 1]")
        for k in ("theta_A", "theta_B"):
            if not np.all(np.asarray(profiles[k](grid)) >= 0):
                raise ConfigError(f"rate scaling assumption violated: {k} must be nonnegative on [0, 1]")
        try:
            self.fluid_params().validate(self.delta)
        except ValueError as exc:
            raise ConfigError(f"initial profile assumption violated: {exc}") from None
        for m in sorted(set(self.n_ladder) | {self.n}):
            x = initial_book(profiles["rho"], m).x
            ticks = np.arange(1, m + 1) / m
            if np.any(x[ticks < self.p] > 0) or np.any(x[ticks > self.p] < 0):
                raise ConfigError(f"initial profile assumption violated on the n={m} grid")
        if self.figure1.side not in ("sell", "buy"):
            raise ConfigError("figure1.side must be 'sell' or 'buy'")
        pd = self.pure_death
        if pd.kappa >= 1 or pd.theta_bar <= 0 or pd.upsilon < 0 or pd.mc_reps < 1 or pd.mc_z0 < 1:
            raise ConfigError("pure_death parameters out of range")

    # -- builders ---------------------------------------------------------

    def profile(self, key: str):
        return functions.from_dict(getattr(self, key))

    def model_params(self, n: int | None = None) -> ModelParams:
        n = self.n if n is None else n
        try:
            return ModelParams(
                n,
                self.profile("lambda_A"),
                self.profile("lambda_B"),
                self.profile("theta_A"),
                self.profile("theta_B"),
                float(self.upsilon_A),
                float(self.upsilon_B),
                float(self.kappa),
            )
        except ParameterError as exc:
            raise ConfigError(str(exc)) from None

    def fluid_params(self) -> FluidParams:
        return FluidParams(
            rho=self.profile("rho"),
            p=float(self.p),
            lambda_A=self.profile("lambda_A"),
            lambda_B=self.profile("lambda_B"),
            theta_A=self.profile("theta_A"),
            theta_B=self.profile("theta_B"),
        )

    def initial_book(self, n: int | None = None) -> BookState:
        return initial_book(self.profile("rho"), self.n if n is None else n)

    def fluid_bins(self) -> list[tuple[float, float]]:
        """Explicit bins, or ``bin_count`` bins of ``bin_ticks`` ticks on each
        side of ``p`` on the ``n`` grid."""
        if self.bins is not None:
            return [(float(lo), float(hi)) for lo, hi in self.bins]
        n = self.n
        k = int(round(self.p * n))
        out = []
        for j in range(self.bin_count):
            lo, hi = k + 1 + j * self.bin_ticks, k + (j + 1) * self.bin_ticks
            if hi <= n:
                out.append((lo / n, hi / n))
            lo, hi = k - (j + 1) * self.bin_ticks, k - 1 - j * self.bin_ticks
            if lo >= 1:
                out.append((lo / n, hi / n))
        return sorted(out)
