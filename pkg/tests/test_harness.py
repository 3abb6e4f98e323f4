import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from lobflow.fluid import atoms_on_grid
from lobflow.functions import ClippedLinear
from lobflow.harness import (
    PureDeathSpec, figure1_experiment, fluid_mass, price_convergence, pure_death_cumulant4,
    pure_death_expectation, pure_death_simulate, run_ladder, shape_convergence, write_rows,
)
from lobflow.measures import ShapeMeasure, TestBasis, metric_d


# --- pure-death oracle --------------------------------------------------------


def test_harmonic_sum():
    mean, var = pure_death_expectation(PureDeathSpec(100, 0.5, 1.0, 0.0, 10))
    assert mean == pytest.approx(2.9289682539682538, rel=1e-15)
    assert var == pytest.approx(sum(1 / k**2 for k in range(1, 11)), rel=1e-15)


@given(st.integers(1, 10_000), st.floats(0.1, 5), st.floats(0, 3), st.floats(-1, 0.9))
def test_single_stage_mean(n, th, ups, kappa):
    spec = PureDeathSpec(n, kappa, th, ups, 1)
    mean, var = pure_death_expectation(spec)
    assert mean == pytest.approx(1 / (th + n ** (1 + kappa) * ups), rel=1e-12)
    assert var == pytest.approx(mean**2, rel=1e-12)


def test_chunked_sum_matches_direct():
    spec = PureDeathSpec(50, 0.5, 1.0, 1.0, 10_000)
    direct = math.fsum(1 / (k + 50**1.5) for k in range(1, 10_001))
    assert pure_death_expectation(spec, chunk=777)[0] == pytest.approx(direct, rel=1e-14)


def test_monte_carlo_within_clt_bands():
    spec = PureDeathSpec(100, 0.5, 1.0, 1.0, 2_500)
    reps = 10_000
    mean, var = pure_death_expectation(spec)
    sample = pure_death_simulate(spec, reps, seed=0)
    assert abs(sample.mean() - mean) <= 4 * math.sqrt(var / reps)
    k4 = pure_death_cumulant4(spec)
    assert abs(sample.var(ddof=1) - var) <= 4 * math.sqrt((k4 + 2 * var**2) / reps)


def test_single_stage_is_exponential():
    spec = PureDeathSpec(20, 0.5, 2.0, 0.3, 1)
    rate = 2.0 + 20**1.5 * 0.3
    sample = pure_death_simulate(spec, 10_000, seed=4)
    ks = stats.kstest(sample, "expon", args=(0, 1 / rate))
    assert ks.statistic < 1.63 / math.sqrt(10_000)  # 1% critical value


def test_rate_scaling_shrinks_time():
    base = pure_death_simulate(PureDeathSpec(10, 0.5, 1.0, 0.0, 50), 20_000, seed=1)
    fast = pure_death_simulate(PureDeathSpec(10, 0.5, 3.0, 0.0, 50), 20_000, seed=1)
    qs = [0.1, 0.5, 0.9]
    ratio = np.quantile(base, qs) / np.quantile(fast, qs)
    assert np.allclose(ratio, 3.0, rtol=1e-12)


def test_pure_death_spec_validation():
    with pytest.raises(ValueError):
        PureDeathSpec(10, 0.5, 0.0, 1.0, 5)
    with pytest.raises(ValueError):
        PureDeathSpec(10, 0.5, 1.0, 1.0, 0)


def test_digamma_closed_form_agrees():
    from scipy.special import digamma
    spec = PureDeathSpec(1000, 0.5, 1.0, 1.0, 250_000)
    c = spec.floor_rate
    closed = digamma(spec.z0 + 1 + c) - digamma(1 + c)
    assert pure_death_expectation(spec)[0] == pytest.approx(closed, rel=1e-11)


# --- ladder -------------------------------------------------------------------


def test_fluid_pair_against_itself_is_zero(default_cfg):
    fp = default_cfg.fluid_params()
    basis = TestBasis()
    for t in (0.0, 0.5, 1.0):
        plus, minus = atoms_on_grid(fp, 100, t)
        pair = (ShapeMeasure.from_grid(plus, 100), ShapeMeasure.from_grid(minus, 100))
        assert metric_d(pair, pair, basis) == 0.0


def test_atom_discretization_is_first_order(default_cfg):
    fp = default_cfg.fluid_params()
    for t in (0.0, 0.5, 1.0):
        exact = fluid_mass(fp, t)[0]
        errs = [abs(atoms_on_grid(fp, n, t)[0].sum() - exact) for n in (50, 100, 200, 400, 800)]
        assert all(e * n <= 1.0 for e, n in zip(errs, (50, 100, 200, 400, 800)))
        assert all(b <= 0.6 * a + 1e-15 for a, b in zip(errs, errs[1:]))


def test_fluid_mass_at_zero(default_cfg):
    fp = default_cfg.fluid_params()
    plus, minus = fluid_mass(fp, 0.0)
    # clipped ramp: 1/8 over the ramp plus 1/4 at the cap
    assert plus == pytest.approx(0.375, abs=1e-10) and minus == pytest.approx(0.375, abs=1e-10)


def test_zero_horizon_ladder_reports_initial_quotes(default_cfg):
    rep = price_convergence([50, 100], 3, default_cfg.fluid_params(), default_cfg.model_params(),
                            0.0, seed=0, threads=2)
    for n in (50, 100):
        init = default_cfg.initial_book(n)
        ask = abs(init.best_ask / n - 0.5)
        assert np.all(rep.price[n]["ask"] == ask)
        assert ask <= 1 / n + 1e-12


def test_ladder_independent_of_threads(default_cfg):
    args = ([30, 60], 4, default_cfg.fluid_params(), default_cfg.model_params(), 0.5, [0.25, 0.5], 7)
    one = run_ladder(*args, threads=1)
    many = run_ladder(*args, threads=4)
    assert one.price_rows() == many.price_rows()
    assert one.shape_rows() == many.shape_rows()


def test_single_scale_warns(default_cfg):
    rep = shape_convergence([40], 2, default_cfg.fluid_params(), default_cfg.model_params(),
                            [0.5], TestBasis(K=5), seed=0)
    assert rep.warnings and "single scale" in rep.warnings[0]
    assert rep.basis == {"kind": "shifted_chebyshev", "K": 5}


def test_report_quantiles_ordered(default_cfg, tmp_path):
    rep = run_ladder([40, 80], 5, default_cfg.fluid_params(), default_cfg.model_params(),
                     0.5, [0.5], seed=2)
    for row in rep.price_rows():
        assert row["q10"] <= row["median"] <= row["q90"]
    for row in rep.shape_rows():
        assert 0 <= row["metric_d_q10"] <= row["metric_d_median"] <= row["metric_d_q90"]
    write_rows(rep.shape_rows(), tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().startswith("n,t,metric_d_q10")


def test_ladder_rejects_zero_reps(default_cfg):
    with pytest.raises(ValueError):
        run_ladder([40], 0, default_cfg.fluid_params(), default_cfg.model_params(), 0.5, [0.5], 0)


# --- four-step workflow on synthetic data -------------------------------------


def test_figure1_zero_horizon(default_cfg):
    init = default_cfg.initial_book(100)
    rep = figure1_experiment(default_cfg.model_params(100), init, [0], seed=0)
    for row in rep.rows:
        assert row["empirical"] == pytest.approx(row["predicted"], rel=1e-12)
        lo, hi = row["tick_lo"], row["tick_hi"]
        fluid = 100 * np.sum(ClippedLinear()(np.arange(lo, hi + 1) / 100))
        assert row["predicted"] == pytest.approx(fluid, abs=1.5 * (hi - lo + 1))


def test_figure1_bins_start_ten_ticks_above_ask(default_cfg):
    init = default_cfg.initial_book(100)
    rep = figure1_experiment(default_cfg.model_params(100), init, [300_000], seed=1)
    los = sorted({r["tick_lo"] for r in rep.rows})
    assert los[0] == init.best_ask + 10 and np.all(np.diff(los) == 3) and len(los) == 7


def test_pure_death_log_ratio_approaches_limit_slowly():
    # mean = psi(z0 + 1 + c) - psi(1 + c) ~ log(1 + z0 / c) with c = n**1.5, z0 = n**2 / 4
    from scipy.special import digamma
    ratios = []
    for n in (1e4, 1e8, 1e16, 1e32):
        c = n**1.5
        z0 = 0.25 * n * n
        ratios.append(float(digamma(z0 + 1 + c) - digamma(1 + c)) / math.log(n))
    assert ratios == sorted(ratios)
    assert ratios[0] == pytest.approx(math.log1p(0.25 * 1e4**0.5) / math.log(1e4), rel=1e-6)
    assert abs(ratios[-1] - 0.5) <= 0.05
    exact = pure_death_expectation(PureDeathSpec(10_000, 0.5, 1.0, 1.0, 25_000_000))[0]
    assert exact / math.log(1e4) == pytest.approx(ratios[0], rel=1e-9)
