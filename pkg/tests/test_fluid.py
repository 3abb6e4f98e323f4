import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lobflow.fluid import (
    FluidParams, atoms_on_grid, bin_volume, evaluate_field, phi, phi_minus, phi_plus,
    solve_ode, ticks_in,
)
from lobflow.functions import ClippedLinear, Constant, Linear
from lobflow.measures import DomainError


def params(rho=None, lam=2.0, th=1.0, lam_b=None, th_b=None, p=0.5):
    return FluidParams(
        rho=rho or ClippedLinear(),
        p=p,
        lambda_A=Constant(lam),
        lambda_B=Constant(lam if lam_b is None else lam_b),
        theta_A=Constant(th),
        theta_B=Constant(th if th_b is None else th_b),
    )


def zero_rho(x):
    return np.zeros_like(np.asarray(x, dtype=float))


def test_phi_plus_half_life():
    assert phi_plus(0.8, math.log(2), params(rho=zero_rho)) == pytest.approx(1.0, abs=1e-15)


def test_phi_plus_initial_condition():
    fp = params(lam=7.0, th=0.3)
    x = np.linspace(0.51, 1.0, 50)
    assert np.array_equal(phi_plus(x, 0.0, fp), ClippedLinear()(x))


def test_phi_plus_stationary_limit():
    assert abs(phi_plus(0.9, 50.0, params()) - 2.0) <= 1e-9


def test_phi_plus_zero_cancellation_limit():
    fp = FluidParams(lambda x: np.ones_like(np.asarray(x, dtype=float)) * (np.asarray(x) > 0.5),
                     0.5, Constant(2.0), Constant(2.0), Constant(0.0), Constant(0.0))
    assert phi_plus(0.7, 3.0, fp) == 7.0
    ode = solve_ode(fp, [0.7], [3.0], 1e-3)
    assert ode.values[0, 0] == pytest.approx(7.0, abs=1e-12)


def test_phi_minus_initial_condition():
    x = np.linspace(0.0, 0.49, 50)
    assert np.array_equal(phi_minus(x, 0.0, params()), -ClippedLinear()(x))


def test_phi_minus_pure_decay():
    fp = FluidParams(lambda x: -4.0 * np.ones_like(np.asarray(x, dtype=float)), 0.5,
                     Constant(1.0), Constant(0.0), Constant(1.0), Constant(1.0))
    assert phi_minus(0.2, math.log(4), fp) == pytest.approx(1.0, abs=1e-14)


@given(st.floats(0.001, 0.5), st.floats(0.0, 10.0))
def test_mirror_symmetry(u, t):
    fp = params(lam=1.3, th=0.7)
    assert phi_minus(0.5 - u, t, fp) == pytest.approx(phi_plus(0.5 + u, t, fp), rel=1e-14)


@pytest.mark.parametrize("fn, x", [(phi_plus, 0.5), (phi_plus, 0.2), (phi_minus, 0.5), (phi_minus, 0.9)])
def test_domain_errors(fn, x):
    with pytest.raises(DomainError):
        fn(x, 1.0, params())


def test_ode_matches_closed_form():
    grid = np.linspace(0.0, 1.0, 400)
    times = np.linspace(0.0, 5.0, 11)
    fp = params()
    err = np.max(np.abs(solve_ode(fp, grid, times, 1e-3).values - evaluate_field(fp, grid, times).values))
    assert err <= 1e-8


def test_ode_matches_closed_form_nonconstant_rates():
    fp = FluidParams(ClippedLinear(slope=3.0), 0.5, Linear(1.0, 2.0), Linear(0.5, 1.0),
                     Linear(0.2, 3.0), Linear(1.0, 0.0))
    grid = np.linspace(0.0, 1.0, 400)
    times = [0.5, 2.0, 5.0]
    err = np.max(np.abs(solve_ode(fp, grid, times, 1e-3).values - evaluate_field(fp, grid, times).values))
    assert err <= 1e-8


def test_ode_pure_decay_without_arrivals():
    # arrivals are switched off by hand; the model itself forbids zero intensity
    fp = FluidParams(ClippedLinear(), 0.5, zero_rho, zero_rho, Constant(1.5), Constant(0.5))
    grid = np.linspace(0, 1, 101)
    times = [1.0, 3.0]
    ode = solve_ode(fp, grid, times, 1e-3)
    rho = ClippedLinear()(grid)
    rate = np.where(grid > 0.5, 1.5, 0.5)
    expected = np.array([np.exp(-rate * t) * rho for t in times])
    assert np.max(np.abs(ode.values - expected)) <= 1e-10


def test_row_at_p_is_zero():
    grid = np.array([0.25, 0.5, 0.75])
    fp = params(rho=lambda x: np.where(np.asarray(x) >= 0.5, 1.0, -1.0))
    ode = solve_ode(fp, grid, np.linspace(0, 2, 5), 1e-2)
    closed = evaluate_field(fp, grid, np.linspace(0, 2, 5))
    assert np.all(ode.values[:, 1] == 0.0) and np.all(closed.values[:, 1] == 0.0)


def test_stationary_value_reached_for_default():
    grid = np.linspace(0, 1, 401)
    field = evaluate_field(params(), grid, [50.0])
    away = grid != 0.5
    assert np.max(np.abs(np.abs(field.values[0, away]) - 2.0)) <= 1e-9


def test_field_sign_segregation_and_bound():
    fp = params(lam=3.0, lam_b=1.0, th=0.5, th_b=2.0)
    grid = np.linspace(0, 1, 201)
    T = 4.0
    field = evaluate_field(fp, grid, np.linspace(0, T, 41))
    assert np.all(field.plus * field.minus == 0)
    assert np.all(field.plus[:, grid < 0.5] == 0) and np.all(field.minus[:, grid > 0.5] == 0)
    assert np.max(np.abs(field.values)) <= 1.0 + T * 3.0


@given(st.floats(0.51, 1.0), st.floats(0.0, 4.0), st.floats(0.1, 3.0))
def test_monotone_approach(x, lam, th):
    fp = params(lam=max(lam, 1e-3), th=th)
    ts = np.linspace(0, 10, 60)
    vals = np.array([phi_plus(x, t, fp) for t in ts])
    steps = np.diff(vals)
    target = max(lam, 1e-3) / th
    if ClippedLinear()(x) < target:
        assert np.all(steps >= -1e-12)
    else:
        assert np.all(steps <= 1e-12)


# --- bins ---------------------------------------------------------------------


def test_bin_without_grid_points_is_zero():
    assert bin_volume(params(), 10, (0.71, 0.79), 1.0, "sell") == 0.0
    assert ticks_in((0.71, 0.79), 10).size == 0


def test_bin_with_constant_density():
    fp = params(rho=lambda x: np.where(np.asarray(x) > 0.5, 0.6, -0.6), th=1e-300, lam=1e-300)
    assert bin_volume(fp, 20, (0.7, 0.8), 0.0, "sell") == pytest.approx(20 * 3 * 0.6)


def test_bin_just_above_p_from_empty_start():
    a, th, n, t = 2.0, 1.0, 100, 0.7
    got = bin_volume(params(rho=zero_rho, lam=a, th=th), n, (0.51, 0.53), t, "sell")
    assert got == pytest.approx(n * 3 * (a / th) * (1 - math.exp(-th * t)), rel=1e-13)


def test_buy_side_bin_and_bad_bins():
    fp = params()
    assert bin_volume(fp, 100, (0.40, 0.42), 0.0, "buy") == pytest.approx(100 * (0.40 + 0.36 + 0.32))
    assert bin_volume(fp, 100, (0.40, 0.42), 0.0, "sell") == 0.0
    with pytest.raises(ValueError):
        bin_volume(fp, 100, (0.9, 1.2), 0.0, "sell")
    with pytest.raises(ValueError):
        bin_volume(fp, 100, (0.4, 0.5), 0.0, "up")


def test_atoms_on_grid_integrate_field():
    plus, minus = atoms_on_grid(params(), 50, 0.0)
    assert plus.sum() == pytest.approx(np.sum(np.clip(4 * (np.arange(26, 51) / 50 - 0.5), 0, 1)) / 50)
    assert np.all(plus[:25] == 0) and np.all(minus[25:] == 0)


def test_phi_signed_values():
    vals = phi(np.array([0.25, 0.5, 0.75]), 0.0, params())
    assert list(vals) == [-1.0, 0.0, 1.0]
