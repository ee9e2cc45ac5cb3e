import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.model.chain import chain_params, propagator
from src.model.coarse import (
    MomentumSource, lag_sum, subsection_energy_stats, subsection_momentum_closed_form, subsection_momentum_stats,
)
from src.model.errors import DomainError, ShapeError, UnsupportedTopologyError
from src.model.gaussian import evolve_trajectory, product_state
from tests.conftest import BOUND_DP2, BOUND_DQ2, BOUND_K, BOUND_OMEGA


def test_lag_sum_weights():
    assert lag_sum(3, np.ones(5)) == pytest.approx(9.0)
    values = np.arange(5, dtype=float)[:, None] * np.ones((5, 2))
    assert_allclose(lag_sum(3, values), [0 * 1 + 1 * 2 + 2 * 3 + 3 * 2 + 4 * 1] * 2)
    with pytest.raises(ShapeError):
        lag_sum(3, np.ones(4))


def test_closed_form_initial_value():
    params = chain_params(None, nu2=1.0, K=0.0)
    report = subsection_momentum_closed_form(params, 0.5, 0.5, 1.0, 5, [0.0])
    assert report.lag_sum_a[0] == pytest.approx(5.0)
    assert report.fluctuating[0] == pytest.approx(2.5)
    assert report.variance[0] == pytest.approx(5 * 0.5)
    assert report.squared_mean[0] == pytest.approx(25.0)


def test_fluctuating_part_decays_on_simple_chain():
    params = chain_params(None, nu2=1.0, K=0.0)
    times = np.linspace(20.0, 100.0, 801)
    report = subsection_momentum_closed_form(params, 0.5, 0.5, 1.0, 5, times)
    assert abs(report.fluctuating.mean()) <= 0.05
    assert np.abs(report.fluctuating).max() <= 0.1
    table = report.to_table()
    assert table.columns == ("t", "variance", "squared_mean", "ratio", "A_M", "A_M_fluct")
    assert table.data.shape == (801, 6)


def test_settling_summary_of_the_fluctuating_part():
    params = chain_params(None, nu2=1.0, K=0.0)
    report = subsection_momentum_closed_form(params, 0.5, 0.5, 1.0, 5, np.linspace(0.0, 100.0, 1001))
    table = report.settling(20.0)
    assert table.label == "settling"
    assert table.columns == ("t_from", "mean", "rms", "max_abs")
    t_from, mean, rms, max_abs = table.data[0]
    assert t_from == 20.0
    assert abs(mean) <= 0.05
    assert 0.0 < rms <= 0.05
    assert rms <= max_abs <= 0.1
    with pytest.raises(ShapeError):
        report.settling(200.0)


def test_settling_needs_the_closed_form(bound_ring):
    state = product_state(bound_ring, bound_ring.sites(16), np.ones(16), 0.5, 0.5)
    prop = propagator(bound_ring, [0.0])
    with pytest.raises(DomainError):
        subsection_momentum_stats(state, 4, [0.0], prop=prop).settling(0.0)


@pytest.mark.parametrize("K,dq2,dp2,times", [
    (0.0, 0.5, 0.8, [0.0, 5.0, 20.0, 60.0]),
    (18.0, 0.2, 1.5, [0.0, 1.0, 3.0]),
])
def test_peaking_ratio_falls_with_block_size(K, dq2, dp2, times):
    params = chain_params(None, nu2=1.0, K=K)
    ratios = np.array([subsection_momentum_closed_form(params, dq2, dp2, 0.4, M, times).ratio
                       for M in (1, 2, 5, 10, 20)])
    assert np.all(np.isfinite(ratios))
    assert np.all(ratios[1:] <= 1.2 * ratios[:-1])
    assert np.all(ratios[-1] < ratios[0])


def test_block_energy_ratio_stays_bounded():
    params = chain_params(40, mass=1.0, nu2=1.0, K=BOUND_K)
    state = product_state(params, params.sites(40), np.zeros(40), BOUND_DQ2, BOUND_DP2)
    times = np.linspace(0.0, 50.0 / BOUND_OMEGA, 101)
    report = subsection_energy_stats(state, 10, times, prop=propagator(params, times), start=15)
    assert np.all(np.isfinite(report.ratio))
    assert report.ratio.max() <= 10.0 * report.ratio[0]


def test_closed_form_needs_infinite_chain(simple_ring):
    with pytest.raises(UnsupportedTopologyError):
        subsection_momentum_closed_form(simple_ring, 0.5, 0.5, 1.0, 3, [0.0])


@pytest.mark.parametrize("K,dq2,dp2", [(0.0, 0.5, 0.8), (18.0, 0.2, 1.5)])
def test_dense_and_closed_form_variances_agree(K, dq2, dp2):
    params = chain_params(None, nu2=1.0, K=K)
    size, M, start = 12, 5, 3
    v0 = 0.4
    state = product_state(params, params.sites(size), np.full(size, params.mass * v0), dq2, dp2)
    times = [0.0, 1.5, 4.0]
    prop = propagator(params, times)
    dense = subsection_momentum_stats(state, M, times, prop=prop, start=start)
    closed = subsection_momentum_stats(MomentumSource(params, dq2, dp2, v0=v0), M, times)
    assert_allclose(dense.variance, closed.variance, rtol=1e-9)
    assert dense.squared_mean[0] == pytest.approx(closed.squared_mean[0])


def test_total_momentum_variance_is_conserved(simple_ring, rng):
    n = simple_ring.n_particles
    state = product_state(simple_ring, simple_ring.sites(n), rng.standard_normal(n), 0.5, 0.7)
    times = np.linspace(0.0, 30.0, 7)
    prop = propagator(simple_ring, times)
    report = subsection_momentum_stats(state, n, times, prop=prop)
    assert_allclose(report.variance, n * 0.7, rtol=1e-10)
    assert_allclose(report.squared_mean, state.p.sum() ** 2, rtol=1e-10)


def test_uniform_drift_oscillates_at_binding_frequency():
    params = chain_params(16, mass=2.0, nu2=1.0, K=0.5)
    v0, M = 0.3, 5
    state = product_state(params, params.sites(16), np.full(16, params.mass * v0), 0.5, 0.5)
    times = np.linspace(0.0, 12.0, 9)
    prop = propagator(params, times)
    report = subsection_momentum_stats(state, M, times, prop=prop, start=4)
    expected = (M * params.mass * v0 * np.cos(np.sqrt(params.K / params.mass) * times)) ** 2
    assert_allclose(report.squared_mean, expected, atol=1e-12)


def test_zero_drift_gives_undefined_ratio():
    params = chain_params(None, nu2=1.0, K=18.0)
    report = subsection_momentum_closed_form(params, 0.2, 1.5, 0.0, 3, [0.0, 1.0])
    assert report.undefined.all()
    assert np.isnan(report.ratio).all()
    assert report.to_table().data.shape == (2, 6)


def test_block_must_fit_the_state(bound_ring):
    state = product_state(bound_ring, bound_ring.sites(16), np.zeros(16), 0.5, 0.5)
    prop = propagator(bound_ring, [0.0])
    with pytest.raises(ShapeError):
        subsection_momentum_stats(state, 10, [0.0], prop=prop, start=8)
    with pytest.raises(DomainError):
        subsection_momentum_stats(state, 0, [0.0], prop=prop)


def test_trajectory_input(bound_ring):
    state = product_state(bound_ring, bound_ring.sites(16), np.ones(16), 0.5, 0.5)
    times = [0.0, 2.0]
    prop = propagator(bound_ring, times)
    trajectory = evolve_trajectory(state, prop, times)
    from_states = subsection_momentum_stats(trajectory, 4, times)
    from_state = subsection_momentum_stats(state, 4, times, prop=prop)
    assert_allclose(from_states.variance, from_state.variance)
    with pytest.raises(ShapeError):
        subsection_momentum_stats(trajectory[:1], 4, times)


def test_energy_needs_binding(simple_ring):
    state = product_state(simple_ring, simple_ring.sites(16), np.zeros(16), 0.5, 0.5)
    prop = propagator(simple_ring, [0.0])
    with pytest.raises(DomainError):
        subsection_energy_stats(state, 3, [0.0], prop=prop)


def test_energy_variance_vanishes_in_ground_state():
    # ν² = 0 时各格点是独立的谐振子，ω = √(K/m) = 1
    params = chain_params(4, mass=1.0, nu2=0.0, K=1.0)
    dq2 = params.hbar / (2.0 * params.mass * 1.0)
    dp2 = params.hbar * params.mass * 1.0 / 2.0
    state = product_state(params, params.sites(4), np.zeros(4), dq2, dp2)
    times = [0.0, 0.7, 3.0]
    prop = propagator(params, times)
    report = subsection_energy_stats(state, 4, times, prop=prop)
    assert_allclose(report.variance, 0.0, atol=1e-12)
    assert_allclose(report.squared_mean, (4 * 0.5) ** 2, rtol=1e-12)


def test_energy_of_displaced_oscillators():
    params = chain_params(3, mass=1.0, nu2=0.0, K=1.0)
    q = params.sites(3) + np.array([1.0, 0.0, -2.0])
    state = product_state(params, q, np.zeros(3), 0.5, 0.5)
    prop = propagator(params, [0.0])
    report = subsection_energy_stats(state, 3, [0.0], prop=prop)
    # 相干态能量方差 ħω⟨E − ħω/2⟩，均值 Σ(½u² + ½)
    mean = 0.5 * (1.0 + 4.0) + 3 * 0.5
    assert report.squared_mean[0] == pytest.approx(mean ** 2)
    assert report.variance[0] == pytest.approx(0.5 * (1.0 + 4.0))
