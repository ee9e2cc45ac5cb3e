import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.model.chain import chain_params, evolve_means, propagator
from src.model.densities import (
    band_pairs, characteristic_phases, correlation_length, current_mean, decoherence_scan, default_k_grid,
    density_observables, energy_density_mean, momentum_density_stats, number_density_stats,
    sample_momentum_density_variance, sample_number_density_variance, stress_mean, stress_offsets,
)
from src.model.errors import DomainError, ShapeError
from src.model.gaussian import evolve_state, evolve_trajectory, normal_mode_coherent_state, product_state
from tests.conftest import BOUND_DP2, BOUND_DQ2, BOUND_K, BOUND_OMEGA


@pytest.fixture
def correlated_state(rng):
    params = chain_params(8, mass=1.0, nu2=1.0, K=1.0)
    q0 = params.sites(8) + 0.2 * rng.standard_normal(8)
    p0 = 0.5 * rng.standard_normal(8)
    state = product_state(params, q0, p0, 0.4, 0.9, sigma_qp=0.1)
    prop = propagator(params, [2.0])
    return evolve_state(state, prop, 2.0)


def test_zero_wavenumber_limits(correlated_state):
    number = number_density_stats(correlated_state, [0.0])
    assert number.mean[0] == pytest.approx(8.0)
    assert number.variance[0] == pytest.approx(0.0, abs=1e-14)

    momentum = momentum_density_stats(correlated_state, [0.0])
    assert momentum.mean[0] == pytest.approx(correlated_state.p.sum())
    assert momentum.variance[0] == pytest.approx(correlated_state.pp.sum(), rel=1e-12)


def test_product_state_number_variance(bound_ring):
    state = product_state(bound_ring, bound_ring.sites(16), np.zeros(16), 0.5, 0.5)
    k = np.array([0.3, 1.0, 2.2])
    stats = number_density_stats(state, k)
    assert_allclose(stats.variance, 16 * (1.0 - np.exp(-k * k * 0.5)), rtol=1e-12)
    assert stats.to_table().columns == ("k", "re_mean", "im_mean", "variance", "ratio")


@pytest.mark.parametrize("stats", [number_density_stats, momentum_density_stats])
def test_opposite_wavenumbers_are_conjugate(correlated_state, stats):
    k = np.array([0.7, 2.3])
    plus = stats(correlated_state, k)
    minus = stats(correlated_state, -k)
    assert_allclose(minus.mean, np.conj(plus.mean), rtol=1e-12)
    assert_allclose(minus.variance, plus.variance, rtol=1e-12)


def test_momentum_ratio_tends_to_total_momentum_ratio(correlated_state):
    # r(k) 是 k 的偶函数，Richardson 外推消去 k² 项
    h = 1.0e-3
    ratio = momentum_density_stats(correlated_state, [h, h / 2.0]).ratio
    extrapolated = (4.0 * ratio[1] - ratio[0]) / 3.0
    expected = correlated_state.pp.sum() / correlated_state.p.sum() ** 2
    assert extrapolated == pytest.approx(expected, rel=1e-6)


def test_banded_sums_match_dense_sums():
    params = chain_params(None, mass=1.0, nu2=1.0, K=BOUND_K)
    state = product_state(params, params.sites(24), np.linspace(-0.5, 0.5, 24), BOUND_DQ2, BOUND_DP2)
    state = evolve_state(state, propagator(params, [0.4]), 0.4)
    rows, cols = band_pairs(state)
    assert rows.size < 24 * 24
    assert len(set(zip(rows.tolist(), cols.tolist()))) == rows.size

    k = np.array([0.5, 2.0, 6.0])
    phases = characteristic_phases(state, k)
    dense = [float(np.real(phases[i] @ np.expm1(kk * kk * state.qq) @ np.conj(phases[i]))) for i, kk in enumerate(k)]
    assert_allclose(number_density_stats(state, k).variance, dense, rtol=1e-10)


def test_product_state_keeps_only_the_diagonal(bound_ring):
    state = product_state(bound_ring, bound_ring.sites(16), np.zeros(16), 0.5, 0.5)
    rows, cols = band_pairs(state)
    assert_allclose(rows, np.arange(16))
    assert_allclose(cols, np.arange(16))


def test_sampled_variances_agree_with_closed_forms(correlated_state):
    rng = np.random.default_rng(11)
    for k in (0.3, 0.8, 1.5, 2.5, 4.0):
        exact_n = number_density_stats(correlated_state, [k]).variance[0]
        sampled_n = sample_number_density_variance(correlated_state, k, 1_000_000, rng)
        assert abs(sampled_n.value - exact_n) <= 3.0 * sampled_n.standard_error

        exact_g = momentum_density_stats(correlated_state, [k]).variance[0]
        sampled_g = sample_momentum_density_variance(correlated_state, k, 1_000_000, rng)
        assert abs(sampled_g.value - exact_g) <= 3.0 * sampled_g.standard_error


def test_sampling_needs_enough_draws(correlated_state, rng):
    with pytest.raises(DomainError):
        sample_number_density_variance(correlated_state, 1.0, 10, rng)


def test_coherent_state_stress_offsets():
    simple = chain_params(8, nu2=1.0, K=0.0)
    assert_allclose(stress_offsets(normal_mode_coherent_state(simple)), 0.0, atol=1e-12)

    bound = chain_params(12, mass=1.0, nu2=1.0, K=0.8)
    state = normal_mode_coherent_state(bound)
    alpha = np.arange(1, 13)
    omega = np.sqrt(0.8 + 4.0 * np.sin(np.pi * alpha / 12) ** 2)
    expected = np.mean(bound.hbar * bound.K / (2.0 * bound.mass * omega))
    assert_allclose(stress_offsets(state), expected, rtol=1e-10)


def test_stress_is_finite_at_zero_wavenumber(correlated_state):
    stats = stress_mean(correlated_state, [0.0, 1.0e-6, 0.5])
    assert np.all(np.isfinite(stats.mean))
    assert abs(stats.mean[0] - stats.mean[1]) < 1e-4
    assert stats.variance is None
    assert stats.to_table().columns == ("k", "re_mean", "im_mean")


def test_energy_continuity_along_classical_trajectory(rng):
    params = chain_params(12, mass=1.3, nu2=1.0, K=0.5)
    q0 = params.sites(12) + 0.3 * rng.standard_normal(12)
    p0 = rng.standard_normal(12)
    t0, h = 1.7, 1.0e-4
    times = [t0 - h, t0, t0 + h]
    prop = propagator(params, times)
    # 环上取 e^{ikNb} = 1 的波数
    k = 2.0 * np.pi * np.array([1, 2, 3]) / (12 * params.spacing)

    def snapshot(t):
        q, p = evolve_means(params, prop, q0, p0, t)
        return product_state(params, q, p, 0.5, 0.5)

    numeric = (energy_density_mean(snapshot(t0 + h), k) - energy_density_mean(snapshot(t0 - h), k)) / (2.0 * h)
    expected = 1j * k * current_mean(snapshot(t0), k)
    assert_allclose(numeric, expected, rtol=1e-6, atol=1e-6)


def test_correlation_length_of_product_state(bound_ring):
    state = product_state(bound_ring, bound_ring.sites(16), np.zeros(16), 0.5, 0.5)
    assert correlation_length(state) == pytest.approx(1.0 - math.exp(-1.0))


def test_correlation_length_grows_with_time(rng):
    params = chain_params(32, nu2=1.0, K=0.2)
    state = product_state(params, params.sites(32), np.zeros(32), 0.5, 0.5)
    times = [0.0, 5.0]
    trajectory = evolve_trajectory(state, propagator(params, times), times)
    assert correlation_length(trajectory[1]) > correlation_length(trajectory[0])


def test_decoherence_scan_brackets(bound_ring):
    n = bound_ring.n_particles
    state = product_state(bound_ring, bound_ring.sites(n), np.zeros(n), 0.5, 0.5)
    times = [0.0, 1.0, 2.0]
    trajectory = evolve_trajectory(state, propagator(bound_ring, times), times)
    k = [3.0, 0.001, 0.03, 0.01, 2.0]
    scan = decoherence_scan(trajectory, k, epsilon=1e-3)
    assert list(scan.k) == sorted(k)
    assert scan.ratio.shape == (3, 5)
    assert scan.k_crit == pytest.approx(0.03)
    assert scan.max_ratio[3] > 0.1
    assert_allclose(scan.times, times)
    assert scan.correlation_lengths[0] == pytest.approx(1.0 - math.exp(-1.0))
    assert scan.to_table().label == "decoherence"


def test_decoherence_bracket_on_bound_chain():
    params = chain_params(None, mass=1.0, nu2=1.0, K=BOUND_K)
    state = product_state(params, params.sites(16), np.zeros(16), BOUND_DQ2, BOUND_DP2)
    times = np.linspace(0.0, 50.0 / BOUND_OMEGA, 26)
    trajectory = evolve_trajectory(state, propagator(params, times), times)
    ell = max(correlation_length(s) for s in trajectory)
    assert 0.0 < ell < math.inf

    # k⁻¹ ≥ 50ℓ 时全程退相干
    small = decoherence_scan(trajectory, np.geomspace(1.0e-3, 1.0 / (50.0 * ell), 6), epsilon=1e-3)
    assert np.all(small.max_ratio < 1e-3)
    assert small.k_crit == pytest.approx(1.0 / (50.0 * ell))

    # kΔq ≥ 1 时比值变大
    dq = math.sqrt(BOUND_DQ2)
    large = decoherence_scan(trajectory, [1.0 / dq, 2.0 * math.pi, 3.0 / dq], epsilon=1e-3)
    assert np.any(large.max_ratio > 0.1)


def test_decoherence_scan_without_passing_wavenumbers(bound_ring):
    state = product_state(bound_ring, bound_ring.sites(16), np.zeros(16), 0.5, 0.5)
    scan = decoherence_scan([state], [2.0, 3.0], epsilon=1e-3)
    assert math.isnan(scan.k_crit)
    with pytest.raises(ShapeError):
        decoherence_scan([], [1.0])


def test_density_observables_selection(correlated_state):
    k = default_k_grid(correlated_state, 6)
    assert k.size == 6
    assert np.all(np.diff(k) > 0.0)
    observed = density_observables(correlated_state, k, observables=("n", "tau"))
    assert observed.momentum is None
    assert [table.label for table in observed.tables()] == ["number_density", "stress"]
    with pytest.raises(DomainError):
        density_observables(correlated_state, k, observables=("rho",))
