import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.model.chain import chain_params, propagator
from src.model.errors import CFLViolationError, DomainError, SolverHaltError
from src.model.gaussian import equilibrium_limits, evolve_trajectory, product_state
from src.model.hydro import (
    CLOSED, PERIODIC, REFLECTING, HydroScenario, centroid_speed, compare_micro_hydro, euler_solve, extract_fields,
    linear_mode_frequencies, local_equilibrium_distribution, local_equilibrium_metric, local_equilibrium_moments,
    oscillation_frequency, smearing_kernel, wave_solve,
)
from tests.conftest import BOUND_DP2, BOUND_DQ2


def _trapped_gas(count=101, half_width=5.0, K=1.0, theta=1.0, mass=1.0):
    x = np.linspace(-half_width, half_width, count)
    f = np.exp(-K * x * x / (2.0 * theta))
    return x, f, np.zeros(count), np.full(count, theta)


def test_smearing_kernel_is_normalised():
    x = np.linspace(-30.0, 30.0, 6001)
    kernel = smearing_kernel(x, np.array([0.0, 3.0]), 2.0)
    assert_allclose(kernel.sum(axis=0) * (x[1] - x[0]), 1.0, rtol=1e-10)
    wrapped = smearing_kernel(np.array([0.5]), np.array([9.5]), 1.0, period=10.0)
    assert wrapped[0, 0] == pytest.approx(1.0 / math.sqrt(2.0 * math.pi) * math.exp(-0.5))
    with pytest.raises(DomainError):
        smearing_kernel(x, np.zeros(1), 0.0)


def test_fields_of_the_undisplaced_lattice():
    params = chain_params(64, mass=2.0, nu2=1.0, K=0.0)
    state = product_state(params, params.sites(64), np.zeros(64), 0.5, 0.8)
    grid = np.arange(0.0, 64.0, 0.5)
    fields = extract_fields(state, grid, 5.0)
    assert_allclose(fields.n, 1.0, rtol=1e-8)
    assert_allclose(fields.n1, 0.0, atol=1e-12)
    assert_allclose(fields.v, 0.0, atol=1e-15)
    assert_allclose(fields.theta, 0.8 / 2.0, rtol=1e-12)
    assert not fields.mask.any()
    assert fields.to_table().columns == ("x", "n", "n1", "v", "theta")


def test_fields_reject_narrow_kernels(bound_ring):
    state = product_state(bound_ring, bound_ring.sites(16), np.zeros(16), 0.5, 0.5)
    with pytest.raises(DomainError):
        extract_fields(state, np.linspace(0.0, 16.0, 33), 2.0)


def test_fields_masked_far_from_particles():
    params = chain_params(None, K=0.0)
    state = product_state(params, params.sites(8), np.ones(8), 0.5, 0.5)
    fields = extract_fields(state, np.array([3.5, 200.0]), 5.0)
    assert list(fields.mask) == [False, True]
    assert np.isnan(fields.v[1]) and np.isnan(fields.theta[1])
    assert fields.v[0] == pytest.approx(1.0)


def test_local_equilibrium_distribution_integrates_to_density():
    p = np.linspace(-40.0, 40.0, 8001)
    w = local_equilibrium_distribution(p, 2.0, 0.5, 1.5, 1.2)
    total = w.sum() * (p[1] - p[0])
    assert total == pytest.approx(2.0 * math.sqrt(2.0 * math.pi * 1.2 * 1.5), rel=1e-10)
    mean_p = (p * w).sum() / w.sum()
    assert mean_p == pytest.approx(1.2 * 0.5, rel=1e-10)


def test_local_equilibrium_moments():
    x = np.array([-1.0, 0.0, 2.0])
    f = np.array([1.0, 2.0, 0.5])
    moments = local_equilibrium_moments(x, f, np.zeros(3), np.full(3, 0.4), mass=1.0, K=2.0, norm=3.0)
    n = 3.0 * f
    assert_allclose(moments["n"], n)
    assert_allclose(moments["g"], 0.0)
    assert_allclose(moments["j"], 0.0)
    assert_allclose(moments["tau"], 0.4 * n)
    assert_allclose(moments["h"], (0.2 + x * x) * n)

    moving = local_equilibrium_moments(x, f, np.full(3, 0.5), np.full(3, 0.4), mass=2.0, K=0.0)
    assert_allclose(moving["g"], 2.0 * 0.5 * f)
    assert_allclose(moving["j"], (1.5 * 0.5 * 0.4 + 0.5 * 2.0 * 0.125) * f)


def test_wave_solver_is_exact_at_unit_courant_number(rng):
    x = np.arange(100, dtype=float)
    u0 = rng.standard_normal(100)
    solution = wave_solve(x, u0, np.zeros(100), 1.0, [0.0, 10.0, 20.0], boundary=PERIODIC, courant=1.0)
    assert solution.courant == pytest.approx(1.0)
    for index, t in ((1, 10), (2, 20)):
        expected = 0.5 * (np.roll(u0, -t) + np.roll(u0, t))
        assert_allclose(solution.n1[index], expected, atol=1e-12)


@pytest.mark.parametrize("boundary", [PERIODIC, REFLECTING])
def test_wave_solver_conserves_energy_and_mass(boundary):
    x = np.linspace(0.0, 40.0, 161) if boundary == REFLECTING else np.arange(160) * 0.25
    u0 = np.exp(-0.5 * ((x - 15.0) / 2.0) ** 2)
    solution = wave_solve(x, u0, np.zeros_like(u0), 1.3, np.linspace(0.0, 60.0, 13), boundary=boundary, courant=0.5)
    assert solution.courant <= 0.5 + 1e-12
    assert_allclose(solution.energy, solution.energy[0], rtol=1e-10)
    assert_allclose(solution.mass, solution.mass[0], rtol=1e-10)


def test_wave_solver_rejects_unstable_steps():
    x = np.arange(10, dtype=float)
    with pytest.raises(CFLViolationError):
        wave_solve(x, np.zeros(10), np.zeros(10), 1.0, [0.0, 1.0], courant=1.5)
    with pytest.raises(DomainError):
        wave_solve(x, np.zeros(10), np.zeros(10), 1.0, [0.0, 1.0, 3.0])
    with pytest.raises(DomainError):
        wave_solve(x, np.zeros(10), np.zeros(10), 1.0, [1.0, 2.0])


def test_pulse_speed():
    x = np.arange(400) * 0.5
    u0 = np.exp(-0.5 * ((x - 100.0) / 5.0) ** 2)
    times = np.linspace(0.0, 60.0, 13)
    solution = wave_solve(x, u0, np.zeros_like(u0), 1.0, times)
    assert centroid_speed(x, solution.n1, times) == pytest.approx(1.0, rel=1e-2)


def test_static_trapped_gas_stays_static():
    x, f, v, theta = _trapped_gas()
    solution = euler_solve(x, f, v, theta, mass=1.0, K=1.0, t_grid=np.linspace(0.0, 10.0, 11))
    assert np.max(np.abs(solution.f - f)) <= 1e-8
    assert np.max(np.abs(solution.v)) <= 1e-8
    assert np.max(np.abs(solution.theta - 1.0)) <= 1e-8
    assert solution.steps > 0


def test_closed_box_conserves_mass():
    x, f, _, theta = _trapped_gas()
    v = 0.1 * x * np.exp(-0.5 * x * x)
    solution = euler_solve(x, f, v, theta, mass=1.0, K=1.0, t_grid=np.linspace(0.0, 2.0, 5), boundary=CLOSED)
    assert_allclose(solution.mass, solution.mass[0], rtol=1e-12)
    snapshot = solution.snapshot(2, mass=1.0, norm=2.0)
    assert_allclose(snapshot.n, 2.0 * solution.f[2])
    assert_allclose(snapshot.g, solution.v[2] * snapshot.n)
    assert snapshot.time == pytest.approx(1.0)


def test_solver_halts_when_density_vanishes():
    x, f, v, theta = _trapped_gas(count=21)
    f = f.copy()
    f[3] = 0.0
    with pytest.raises(SolverHaltError) as caught:
        euler_solve(x, f, v, theta, mass=1.0, K=1.0, t_grid=[0.0, 1.0])
    assert "f" in caught.value.state_dump
    assert caught.value.state_dump["t"] == 0.0


def test_dipole_and_breathing_frequencies():
    x, f, v, theta = _trapped_gas(count=41, half_width=4.0, K=1.0, theta=1.0)
    frequencies = linear_mode_frequencies(x, f, v, theta, mass=1.0, K=1.0)
    assert np.min(np.abs(frequencies - 1.0)) < 0.05
    assert np.min(np.abs(frequencies - 2.0)) < 0.1


def test_oscillation_frequency_of_a_sine():
    times = np.linspace(0.0, 30.0, 3001)
    assert oscillation_frequency(times, np.sin(1.3 * times + 0.2)) == pytest.approx(1.3, rel=1e-3)
    assert math.isnan(oscillation_frequency(times, np.exp(-times)))


@pytest.mark.parametrize("kick, moment, expected", [("uniform", 1, 1.0), ("linear", 2, 2.0)])
def test_euler_small_oscillations_match_linear_modes(kick, moment, expected):
    # 静态解上加 1e-4 的速度扰动：均匀扰动激发偶极模，线性扰动激发呼吸模
    x, f, v, theta = _trapped_gas(count=41, half_width=4.0)
    v = np.full_like(x, 1.0e-4) if kick == "uniform" else 1.0e-4 * x
    times = np.linspace(0.0, 20.0, 401)
    solution = euler_solve(x, f, v, theta, mass=1.0, K=1.0, t_grid=times)
    signal = solution.f @ x ** moment / solution.f.sum(axis=1)
    measured = oscillation_frequency(times, signal - signal[0])
    modes = linear_mode_frequencies(x, f, np.zeros_like(x), theta, mass=1.0, K=1.0)
    nearest = modes[np.argmin(np.abs(modes - measured))]
    assert measured == pytest.approx(nearest, rel=0.05)
    assert measured == pytest.approx(expected, rel=0.1)


def test_equilibrium_metric_on_bound_chain():
    params = chain_params(None, mass=1.0, nu2=1.0, K=18.0)
    state = product_state(params, params.sites(16), np.zeros(16), BOUND_DQ2, BOUND_DP2)
    times = np.linspace(0.0, 150.0, 61)
    trajectory = evolve_trajectory(state, propagator(params, times), times)
    metric = local_equilibrium_metric(trajectory, tolerance=0.01)
    assert metric.distance[0] > 0.01
    assert 0.0 < metric.converged_at <= 150.0
    assert_allclose(metric.flatness, 0.0, atol=1e-12)
    assert np.all(metric.correlation[times >= 89.4] < 0.01)

    limits = equilibrium_limits(params, BOUND_DQ2, BOUND_DP2)
    explicit = local_equilibrium_metric(trajectory, limits=limits, tolerance=0.01)
    assert_allclose(explicit.distance, metric.distance)
    assert explicit.to_table().label == "equilibrium"


def test_equilibrium_metric_without_binding():
    params = chain_params(None, K=0.0)
    state = product_state(params, params.sites(8), np.zeros(8), 0.5, 0.5)
    times = [0.0, 5.0]
    trajectory = evolve_trajectory(state, propagator(params, times), times)
    metric = local_equilibrium_metric(trajectory)
    assert np.all(np.isinf(metric.distance))
    assert math.isnan(metric.converged_at)


def test_micro_and_hydro_agree_for_a_long_wave():
    params = chain_params(400, mass=1.0, nu2=1.0, K=0.0)
    scenario = HydroScenario(params=params, wavelength=50.0, amplitude=0.01, smearing_width=5.0)
    times = np.linspace(0.0, 50.0, 26)
    comparison = compare_micro_hydro(scenario, times)
    assert comparison.warnings == ()
    assert comparison.expected_speed == pytest.approx(1.0)
    assert comparison.speed == pytest.approx(1.0, rel=0.05)
    assert comparison.l2.max() < 0.1
    assert comparison.l2[0] == pytest.approx(0.0, abs=1e-12)
    assert comparison.to_table().columns == ("t", "L2", "Linf")


def test_pulse_tracking_follows_the_sound_speed():
    params = chain_params(400, mass=1.0, nu2=4.0, K=0.0)
    scenario = HydroScenario(params=params, wavelength=50.0, amplitude=0.01, smearing_width=5.0)
    comparison = compare_micro_hydro(scenario, np.linspace(0.0, 50.0, 26))
    assert comparison.expected_speed == pytest.approx(2.0)
    assert comparison.speed == pytest.approx(2.0, rel=0.05)


def test_pulse_speed_is_skipped_once_the_pulse_would_wrap():
    params = chain_params(400, mass=1.0, nu2=1.0, K=0.0)
    scenario = HydroScenario(params=params, wavelength=50.0, amplitude=0.01, smearing_width=5.0)
    comparison = compare_micro_hydro(scenario, np.linspace(0.0, 250.0, 11))
    assert math.isnan(comparison.speed)
    assert any("wrap" in message for message in comparison.warnings)


def test_comparison_needs_a_spaced_ring():
    scenario = HydroScenario(params=chain_params(None, K=0.0), wavelength=50.0, amplitude=0.5, smearing_width=5.0)
    with pytest.raises(DomainError):
        compare_micro_hydro(scenario, [0.0, 1.0])
