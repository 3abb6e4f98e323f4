import numpy as np
import pytest
from hypothesis import given, strategies as st

from lobflow.book import BookState
from lobflow.harness import mollifier_gap
from lobflow.measures import (
    DomainError, ShapeMeasure, TestBasis, metric_d, metric_dplus, mollifier, pair,
    shape_measures, signed_pair, write_measure_csv,
)
from lobflow.sim import simulate

from conftest import random_segregated

one = lambda x: np.ones_like(np.asarray(x, dtype=float))  # noqa: E731


def test_shape_measures_example():
    plus, minus = shape_measures(BookState((0, -2, 0, 3)))
    assert plus.atoms() == [(1.0, 3 / 16)]
    assert minus.atoms() == [(0.5, 2 / 16)]


def test_empty_book_has_empty_measures():
    plus, minus = shape_measures(BookState.empty(5))
    assert len(plus) == len(minus) == 0
    assert pair(plus, np.sin) == 0.0


def test_pairing_examples():
    plus, _ = shape_measures(BookState((0, -2, 0, 3)))
    assert pair(plus, lambda x: x) == 3 / 16
    assert pair(plus, lambda x: 2.5 * np.ones_like(x)) == pytest.approx(2.5 * plus.total_mass)


def test_zero_atoms_dropped():
    m = ShapeMeasure.from_grid([0.0, 0.2, 0.0], 3)
    assert m.atoms() == [(2 / 3, 0.2)]


def test_dplus_single_term_example():
    a = ShapeMeasure(np.array([0.5]), np.array([1.0]), 2)
    basis = TestBasis([one])
    assert metric_dplus(a, ShapeMeasure.empty(2), basis) == 0.25
    assert metric_dplus(a, a, basis) == 0.0


def test_metric_d_is_euclidean_combination():
    basis = TestBasis([one])
    # d+ = 0.5 x / (1 + x) solves to 0.3 and 0.4 at these masses
    m3 = ShapeMeasure(np.array([0.5]), np.array([1.5]), 2)
    m4 = ShapeMeasure(np.array([0.5]), np.array([4.0]), 2)
    e = ShapeMeasure.empty(2)
    assert metric_dplus(m3, e, basis) == pytest.approx(0.3)
    assert metric_dplus(m4, e, basis) == pytest.approx(0.4)
    assert metric_d((m3, m4), (e, e), basis) == pytest.approx(0.5)


def test_default_basis_starts_with_constant():
    basis = TestBasis()
    assert basis.K == 20 and basis.tail_bound == 2.0**-20
    assert np.allclose(basis.functions[0](np.linspace(0, 1, 5)), 1.0)
    assert np.all(np.abs(basis.functions[7](np.linspace(0, 1, 101))) <= 1 + 1e-12)


def random_measure(rng, n=12):
    return ShapeMeasure.from_grid(rng.exponential(size=n) * (rng.random(n) < 0.6), n)


def test_metric_axioms_on_random_triples():
    rng = np.random.default_rng(0)
    basis = TestBasis(K=20)
    for _ in range(100):
        a, b, c = (random_measure(rng) for _ in range(3))
        a2, b2, c2 = (random_measure(rng) for _ in range(3))
        ab, bc, ac = metric_dplus(a, b, basis), metric_dplus(b, c, basis), metric_dplus(a, c, basis)
        assert 0 <= ab < 1
        assert ab == metric_dplus(b, a, basis)
        assert ac <= ab + bc + 1e-15
        D = lambda u, v: metric_d(u, v, basis)  # noqa: E731
        assert D((a, a2), (b, b2)) >= max(ab, metric_dplus(a2, b2, basis))
        assert D((a, a2), (b, b2)) == D((b, b2), (a, a2))
        assert D((a, a2), (c, c2)) <= D((a, a2), (b, b2)) + D((b, b2), (c, c2)) + 1e-15
        assert D((a, a2), (a, a2)) == 0.0


@given(st.integers(0, 2**32), st.integers(1, 40))
def test_mass_bookkeeping(seed, n):
    x = random_segregated(np.random.default_rng(seed), n, depth=50)
    plus, minus = shape_measures(BookState(x))
    assert signed_pair(plus, minus, one) == pytest.approx(x.sum() / n**2, abs=1e-12)


# --- mollifier ----------------------------------------------------------------


def test_mollifier_pieces():
    fg = mollifier(one, 0.5, 0.1)
    assert fg(0.7) == 1.0 and fg(0.3) == 0.0
    assert 0.0 < fg(0.45) < 1.0


@given(st.floats(0.001, 0.49))
def test_mollifier_matches_f_at_p(gamma):
    f = lambda x: 2.0 + np.sin(np.asarray(x))  # noqa: E731
    assert mollifier(f, 0.5, gamma)(0.5) == pytest.approx(f(0.5))


def test_mollifier_pointwise_limit_below_p():
    vals = [float(mollifier(one, 0.5, g)(0.49)) for g in (0.1, 0.01, 0.001)]
    assert vals[0] > 0.9 and vals[-1] == 0.0
    assert vals == sorted(vals, reverse=True)


@given(st.floats(0.01, 0.4), st.floats(-3, 3))
def test_mollifier_sup_norm_bounded(gamma, c):
    f = lambda x: c * (1 + np.cos(7 * np.asarray(x))) / 2  # noqa: E731
    x = np.linspace(0, 1, 1001)
    assert np.max(np.abs(mollifier(f, 0.5, gamma)(x))) <= np.max(np.abs(f(x))) + 1e-12


@pytest.mark.parametrize("p, gamma", [(0.5, 0.5), (0.5, 0.7), (0.5, 0.0), (0.3, -0.1)])
def test_mollifier_domain_errors(p, gamma):
    with pytest.raises(DomainError):
        mollifier(one, p, gamma)


def test_mollifier_gap_shrinks_with_gamma(default_cfg):
    gammas = (0.2, 0.1, 0.05)
    for n in (200, 400):
        traj = simulate(default_cfg.initial_book(n), default_cfg.model_params(n), 1.0,
                        np.linspace(0, 1, 11), seed=n)
        gaps = mollifier_gap(traj.snapshots, n, default_cfg.p, gammas)
        assert gaps[0.2] > gaps[0.1] > gaps[0.05]


def test_measure_csv_header(tmp_path):
    plus, _ = shape_measures(BookState((0, -2, 0, 3)))
    path = tmp_path / "m.csv"
    write_measure_csv(plus, path, 0.5)
    assert path.read_text().splitlines() == ["# n=4 t=0.5", "location,mass", "1.0,0.1875"]
