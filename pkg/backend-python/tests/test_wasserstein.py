# test_wasserstein.py
# ---------------------------------------------------------------
# Testes para o módulo wasserstein.py
# Objetivo: conferir a W1 empírica contra o acoplamento ótimo por
# força bruta e as perdas de calibração (W1 média e MSE).
# ---------------------------------------------------------------

import itertools

import numpy as np
import pytest

from src.errors import DomainError
from src.wasserstein import SampleSet, empirical_w1, mse_loss, sample_sets, w1_loss


def _set(values, T=1.0):
    return SampleSet(np.asarray(values, dtype=float), T)


# ---- Test 1: Empirical W1 ----

def test_w1_examples():
    assert empirical_w1(_set([1.0, 2.0, 3.0]), _set([1.0, 2.0, 3.0])) == 0.0
    assert empirical_w1(_set([0.0, 1.0]), _set([1.0, 2.0])) == pytest.approx(1.0)
    assert empirical_w1(_set([3.0, 1.0, 2.0]), _set([2.0, 3.0, 1.0])) == 0.0
    assert empirical_w1(_set([0.0, 0.0]), _set([0.0, 4.0])) == pytest.approx(2.0)


def test_w1_matches_brute_force_coupling():
    """Sorted matching equals the cheapest permutation."""
    rng = np.random.default_rng(5)
    for _ in range(1000):
        m = int(rng.integers(1, 7))
        x, y = rng.normal(size=m), rng.normal(size=m)
        best = min(np.mean(np.abs(x - y[list(p)])) for p in itertools.permutations(range(m)))
        assert abs(empirical_w1(_set(x), _set(y)) - best) < 1e-12


def test_w1_metric_properties():
    rng = np.random.default_rng(8)
    for _ in range(200):
        x, y, z = (_set(rng.standard_t(3, size=50)) for _ in range(3))
        xy, yz, xz = empirical_w1(x, y), empirical_w1(y, z), empirical_w1(x, z)
        assert xy == pytest.approx(empirical_w1(y, x))
        assert xz <= xy + yz + 1e-12


def test_w1_scale_equivariance():
    rng = np.random.default_rng(9)
    x, y = rng.normal(size=100), rng.normal(size=100)
    base = empirical_w1(_set(x), _set(y))
    assert empirical_w1(_set(3.0 * x + 1.0), _set(3.0 * y + 1.0)) == pytest.approx(3.0 * base)
    assert empirical_w1(_set(x + 0.5), _set(x)) == pytest.approx(0.5)


def test_w1_bounds_lipschitz_payoffs():
    """|E f(X) - E f(Y)| <= W1 for 1-Lipschitz f, such as call payoffs."""
    rng = np.random.default_rng(10)
    x = np.exp(0.2 * rng.normal(size=4096))
    y = np.exp(0.25 * rng.normal(size=4096))
    w1 = empirical_w1(_set(x), _set(y))
    for K in (0.8, 0.9, 1.0, 1.1, 1.2):
        gap = abs(np.maximum(x - K, 0).mean() - np.maximum(y - K, 0).mean())
        assert gap <= w1 + 1e-12


def test_w1_errors():
    with pytest.raises(DomainError):
        empirical_w1(_set([1.0, 2.0]), _set([1.0, 2.0, 3.0]))
    with pytest.raises(DomainError):
        _set([])
    with pytest.raises(DomainError):
        _set([1.0, np.nan])


# ---- Test 2: Calibration losses ----

def test_w1_loss_averages_maturities():
    model = {0.5: _set([0.0, 1.0], 0.5), 1.0: _set([0.0, 0.0], 1.0)}
    market = {0.5: _set([1.0, 2.0], 0.5), 1.0: _set([0.0, 2.0], 1.0)}
    assert w1_loss(model, market) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        w1_loss({0.5: model[0.5]}, market)
    with pytest.raises(DomainError):
        w1_loss({}, {})


def test_mse_loss():
    assert mse_loss([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert mse_loss([1.0, 3.0], [2.0, 2.0]) == pytest.approx(1.0)
    with pytest.raises(DomainError):
        mse_loss([1.0], [1.0, 2.0])


def test_sample_sets_wraps_arrays():
    sets = sample_sets({0.3: np.array([1.0, 2.0]), 1: [3.0]})
    assert sorted(sets) == [0.3, 1.0]
    assert sets[1.0].m == 1
    assert sets[0.3].maturity == 0.3
    assert not sets[0.3].values.flags.writeable
