# test_path_simulator.py
# ---------------------------------------------------------------
# Testes para o módulo path_simulator.py
# Objetivo: verificar os compensadores, as covariâncias exatas do
# esquema Cholesky, o determinismo por número de threads e as
# propriedades de martingale dos esquemas mSOE e SOE.
# ---------------------------------------------------------------

import math

import numpy as np
import pytest
from scipy import integrate

from src.errors import ConfigError, DomainError, MaturityError, SimulationOverflowError
from src.forward_variance import constant_curve, pwc_curve
from src.path_simulator import (
    GridSchedule,
    ModelParams,
    exact_cross_covariance,
    exact_volterra_covariance,
    resolve_threads,
    second_moment_approx,
    second_moment_soe,
    simulate_paths,
    simulate_terminal_samples,
)
from src.soe_kernel import SoeApprox, generate_soe

XI0 = 0.235 ** 2


def _params(eta=1.9, curve=None, hurst=0.07, rho=-0.9):
    return ModelParams(curve or constant_curve(XI0), hurst, rho, eta, 1.0, 0.0)


@pytest.fixture(scope="module")
def soe_short():
    return generate_soe(0.07, 0.3 / 32, 0.3, 1e-2)


# ---- Test 1: Compensators ----

def test_second_moment_first_step_is_local_variance(soe_short):
    tau = 0.3 / 32
    assert second_moment_approx(soe_short, 0.07, tau, tau) == tau ** 0.14


def test_second_moment_without_nodes():
    empty = SoeApprox([], [], 0.07, 1 / 128, 1.0)
    value = second_moment_approx(empty, 0.07, 1 / 128, 0.5)
    assert value == (1 / 128) ** 0.14
    assert abs(value - 0.5070) < 1e-4


def test_second_moment_is_nondecreasing(soe_short):
    tau = 0.3 / 32
    values = [second_moment_approx(soe_short, 0.07, tau, i * tau) for i in range(1, 33)]
    assert np.all(np.diff(values) >= 0)
    soe_values = [second_moment_soe(soe_short, 0.07, i * tau) for i in range(1, 33)]
    assert np.all(np.diff(soe_values) >= 0)


def test_second_moment_approaches_exact_variance(soe_short):
    t = 0.3
    exact = t ** 0.14
    assert abs(second_moment_approx(soe_short, 0.07, 0.3 / 32, t) - exact) / exact < 0.05


# ---- Test 2: Exact covariances ----

def test_exact_variance_closed_form():
    assert abs(exact_volterra_covariance(0.07, 0.5, 0.5) - 0.9075) < 1e-4
    assert abs(exact_volterra_covariance(0.07, 0.5, 0.5) - 0.5 ** 0.14) < 1e-12


def test_exact_volterra_covariance_against_quadrature():
    H, s, t = 0.07, 0.25, 0.6
    reference, _ = integrate.quad(lambda u: (t - u) ** (H - 0.5), 0.0, s,
                                  weight="alg", wvar=(0.0, H - 0.5), epsabs=1e-14, epsrel=1e-12)
    reference *= 2 * H
    value = exact_volterra_covariance(H, s, t)
    assert abs(value - reference) / reference < 1e-8
    assert value == exact_volterra_covariance(H, t, s)


def test_exact_cross_covariance():
    assert abs(exact_cross_covariance(0.25, 1.0, 1.0) - 0.94281) < 1e-5
    for t_j in (0.5, 0.8, 2.0):
        assert exact_cross_covariance(0.07, 0.5, t_j) == exact_cross_covariance(0.07, 0.5, 0.5)
    with pytest.raises(DomainError):
        exact_cross_covariance(0.07, 0.0, 1.0)


# ---- Test 3: Grid and parameters ----

def test_grid_schedule_constructors():
    uniform = GridSchedule.uniform(1.0, 128)
    assert uniform.n == 128 and uniform.maturities == (1.0,)
    grid = GridSchedule.from_maturities([1.0, 0.3, 0.5], 0.002)
    assert grid.n == 500
    assert grid.maturities == (0.3, 0.5, 1.0)
    assert grid.maturity_steps == (150, 250, 500)


def test_grid_rejects_off_grid_maturity():
    with pytest.raises(MaturityError):
        GridSchedule.uniform(1.0, 10, [0.25, 1.0])


def test_model_params_invariants():
    with pytest.raises(DomainError):
        _params(hurst=0.5)
    with pytest.raises(DomainError):
        _params(rho=-1.0)
    with pytest.raises(DomainError):
        _params(eta=-0.1)


def test_resolve_threads_precedence(monkeypatch):
    monkeypatch.setenv("ROUGHVOL_THREADS", "3")
    assert resolve_threads(None) == 3
    assert resolve_threads(2) == 2
    monkeypatch.delenv("ROUGHVOL_THREADS")
    assert resolve_threads(None) >= 1


# ---- Test 4: Simulation contracts ----

@pytest.mark.parametrize("scheme", ["msoe", "soe", "cholesky"])
def test_zero_vol_of_vol_keeps_forward_variance(soe_short, scheme):
    curve = pwc_curve([0.0, 0.1, 0.3], [0.04, 0.09])
    schedule = GridSchedule.uniform(0.3, 32)
    batch = simulate_paths(_params(eta=0.0, curve=curve), schedule, soe_short, scheme,
                           64, 5, threads=1, block_size=32, store_paths=True)
    expected = curve(schedule.times)
    np.testing.assert_array_equal(batch.variance_paths, np.tile(expected, (64, 1)))


def test_schemes_agree_at_zero_vol_of_vol(soe_short):
    schedule = GridSchedule.uniform(0.3, 32)
    params = _params(eta=0.0)
    a = simulate_paths(params, schedule, soe_short, "msoe", 256, 17, threads=1)
    b = simulate_paths(params, schedule, soe_short, "soe", 256, 17, threads=1)
    np.testing.assert_allclose(a.terminal_prices(0.3), b.terminal_prices(0.3), rtol=0, atol=1e-12)


@pytest.mark.parametrize("scheme", ["msoe", "soe", "cholesky"])
def test_thread_count_does_not_change_results(soe_short, scheme):
    schedule = GridSchedule.uniform(0.3, 32, [0.15, 0.3])
    params = _params()
    one = simulate_paths(params, schedule, soe_short, scheme, 300, 42, threads=1, block_size=64)
    many = simulate_paths(params, schedule, soe_short, scheme, 300, 42, threads=4, block_size=64)
    for T in (0.15, 0.3):
        np.testing.assert_array_equal(one.terminal_prices(T), many.terminal_prices(T))
        for a, b in zip(one.extrema(T), many.extrema(T)):
            np.testing.assert_array_equal(a, b)


def test_noise_streams_are_keyed_by_block(soe_short):
    schedule = GridSchedule.uniform(0.3, 32)
    params = _params(eta=1.0)
    base = simulate_paths(params, schedule, soe_short, "msoe", 4096, 42, threads=1, block_size=256)
    again = simulate_paths(params, schedule, soe_short, "msoe", 4096, 42, threads=2, block_size=256)
    other = simulate_paths(params, schedule, soe_short, "msoe", 4096, 42, threads=1, block_size=512)
    np.testing.assert_array_equal(base.terminal_prices(0.3), again.terminal_prices(0.3))
    # outro block_size troca os fluxos, mas não a lei de S_T
    a, b = base.terminal_prices(0.3), other.terminal_prices(0.3)
    assert not np.array_equal(a, b)
    assert abs(a.mean() - b.mean()) < 4 * math.hypot(a.std(), b.std()) / math.sqrt(4096)


def test_prices_positive_and_inside_extrema(soe_short):
    schedule = GridSchedule.uniform(0.3, 32, [0.15, 0.3])
    batch = simulate_paths(_params(), schedule, soe_short, "msoe", 500, 3, threads=2, block_size=128,
                           store_paths=True)
    assert batch.price_paths.shape == (500, 33)
    assert np.all(batch.price_paths > 0)
    for T in schedule.maturities:
        s_t = batch.terminal_prices(T)
        low, high = batch.extrema(T)
        assert np.all(low <= s_t) and np.all(s_t <= high)
        assert np.all(low <= 1.0) and np.all(high >= 1.0)


def test_unrecorded_maturity_is_rejected(soe_short):
    schedule = GridSchedule.uniform(0.3, 32)
    batch = simulate_paths(_params(), schedule, soe_short, "msoe", 16, 1, threads=1)
    with pytest.raises(MaturityError):
        batch.terminal_prices(0.15)


def test_simulation_argument_errors(soe_short):
    schedule = GridSchedule.uniform(0.3, 32)
    with pytest.raises(DomainError):
        simulate_paths(_params(), schedule, None, "msoe", 16, 1)
    with pytest.raises(DomainError):
        simulate_paths(_params(), schedule, soe_short, "hybrid", 16, 1)
    with pytest.raises(DomainError):
        simulate_paths(_params(), schedule, soe_short, "msoe", 0, 1)
    with pytest.raises(ConfigError):
        simulate_paths(_params(), GridSchedule.uniform(1.0, 64), None, "cholesky", 16, 1, cholesky_cap=32)


def test_variance_overflow_is_reported(soe_short):
    schedule = GridSchedule.uniform(0.3, 32)
    params = _params(eta=0.5, curve=constant_curve(1e305))
    with pytest.raises(SimulationOverflowError) as info:
        simulate_paths(params, schedule, soe_short, "msoe", 8, 1, threads=1, block_size=8)
    assert info.value.step == 1
    assert info.value.block == 0


def test_terminal_samples_by_maturity(soe_short):
    schedule = GridSchedule.uniform(0.3, 32, [0.15, 0.3])
    samples = simulate_terminal_samples(_params(), schedule, soe_short, 128, 9)
    assert sorted(samples) == [0.15, 0.3]
    assert all(v.shape == (128,) for v in samples.values())


# ---- Test 5: Martingale properties ----

@pytest.mark.parametrize("scheme", ["msoe", "soe"])
def test_variance_mean_matches_forward_variance(scheme):
    """Moderate vol-of-vol keeps the lognormal tails tame at this sample size."""
    soe = generate_soe(0.07, 0.3 / 32, 0.3, 1e-3)
    schedule = GridSchedule.uniform(0.3, 32)
    m = 1 << 15
    batch = simulate_paths(_params(eta=1.0), schedule, soe, scheme, m, 2024, store_paths=True)
    for step in (1, 8, 16, 32):
        v = batch.variance_paths[:, step]
        assert abs(v.mean() - XI0) <= 4 * v.std(ddof=1) / math.sqrt(m)


@pytest.mark.slow
def test_martingale_properties_reference_parameters():
    soe = generate_soe(0.07, 0.3 / 128, 0.3, 1e-3)
    schedule = GridSchedule.uniform(0.3, 128)
    m = 1 << 18
    batch = simulate_paths(_params(), schedule, soe, "msoe", m, 7, store_paths=True)
    for step in (1, 32, 64, 96, 128):
        v = batch.variance_paths[:, step]
        assert abs(v.mean() - XI0) <= 4 * v.std(ddof=1) / math.sqrt(m)
    s_t = batch.terminal_prices(0.3)
    assert abs(s_t.mean() - 1.0) <= 4 * s_t.std(ddof=1) / math.sqrt(m)
