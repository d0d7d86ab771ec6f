# test_gaussian_factory.py
# ---------------------------------------------------------------
# Testes para o módulo gaussian_factory.py
# Objetivo: conferir a covariância do vetor gaussiano de um passo
# contra as integrais que a definem, a fatoração de Cholesky com
# jitter e o determinismo dos fluxos contra-baseados.
# ---------------------------------------------------------------

import math
import os

import numpy as np
import pytest
from scipy import integrate, stats

from src.errors import DomainError, FactorizationError
from src.gaussian_factory import (
    RngStream,
    build_covariance,
    cholesky,
    covariance_matrix,
    lower_incomplete_gamma,
    sample_gaussian,
)
from src.soe_kernel import SoeApprox, read_soe

RESOURCES = os.path.join(os.path.dirname(__file__), "..", "resources")
H = 0.07
TAU = 1 / 128


def _reference_soe():
    return read_soe(os.path.join(RESOURCES, "nodes_n8.csv"), H, TAU, 1.0)


# ---- Test 1: Lower incomplete gamma ----

def test_lower_incomplete_gamma_values():
    assert abs(lower_incomplete_gamma(1.0, math.log(2.0)) - 0.5) < 1e-14
    assert lower_incomplete_gamma(0.57, 0.0) == 0.0
    assert abs(lower_incomplete_gamma(0.5, 30.0) - math.sqrt(math.pi)) < 1e-5


def test_lower_incomplete_gamma_domain():
    with pytest.raises(DomainError):
        lower_incomplete_gamma(0.0, 1.0)
    with pytest.raises(DomainError):
        lower_incomplete_gamma(0.5, -1.0)


def test_lower_incomplete_gamma_is_nondecreasing():
    x = np.linspace(0.0, 20.0, 400)
    assert np.all(np.diff(lower_incomplete_gamma(0.57, x)) >= 0)


# ---- Test 2: Step covariance ----

def test_covariance_without_nodes():
    empty = SoeApprox([], [], H, TAU, 1.0)
    sigma = covariance_matrix(empty, H, TAU)
    a = H + 0.5
    cross = math.sqrt(2 * H) * TAU ** a / a
    expected = np.array([[TAU, cross], [cross, TAU ** (2 * H)]])
    np.testing.assert_allclose(sigma, expected, rtol=1e-14)


def test_covariance_is_exactly_symmetric():
    cov = build_covariance(_reference_soe(), H, TAU)
    assert np.array_equal(cov.matrix, cov.matrix.T)
    assert cov.matrix[0, 0] == TAU
    assert cov.dim == 10


def test_cholesky_reproduces_covariance():
    cov = build_covariance(_reference_soe(), H, TAU)
    rebuilt = cov.chol @ cov.chol.T
    rel = np.linalg.norm(rebuilt - cov.matrix) / np.linalg.norm(cov.matrix)
    assert rel < 1e-10
    assert np.allclose(cov.chol, np.tril(cov.chol))


def test_covariance_is_positive_semidefinite():
    sigma = covariance_matrix(_reference_soe(), H, TAU)
    assert np.linalg.eigvalsh(sigma).min() >= -1e-10 * np.trace(sigma)


def test_small_node_limits():
    tiny = SoeApprox([1e-14], [1.0], H, TAU, 1.0)
    sigma = covariance_matrix(tiny, H, TAU)
    assert abs(sigma[0, 1] - TAU) / TAU < 1e-9

    tinier = SoeApprox([1e-12], [1.0], H, TAU, 1.0)
    sigma = covariance_matrix(tinier, H, TAU)
    assert abs(sigma[2, 1] - sigma[2, 0]) / sigma[2, 0] < 1e-6


def test_covariance_matches_defining_integrals():
    """Every entry equals E[XY] of the pair of stochastic integrals."""
    soe = _reference_soe()
    lam = soe.nodes
    n = lam.size
    sigma = covariance_matrix(soe, H, TAU)
    coef = math.sqrt(2 * H)

    def quad(f, alpha=0.0):
        value, _ = integrate.quad(f, 0.0, TAU, weight="alg", wvar=(alpha, 0.0),
                                  epsabs=1e-14, epsrel=1e-12, limit=200)
        return value

    assert abs(sigma[0, 0] - TAU) < 1e-15
    for k in range(n):
        assert abs(sigma[0, k + 1] - quad(lambda s: math.exp(-lam[k] * s))) < 1e-10
        for j in range(n):
            c = lam[k] + lam[j]
            assert abs(sigma[k + 1, j + 1] - quad(lambda s: math.exp(-c * s))) < 1e-10
        local = coef * quad(lambda s: math.exp(-lam[k] * s), H - 0.5)
        assert abs(sigma[n + 1, k + 1] - local) < 1e-10
    assert abs(sigma[n + 1, 0] - coef * quad(lambda s: 1.0, H - 0.5)) < 1e-10
    assert abs(sigma[n + 1, n + 1] - 2 * H * quad(lambda s: 1.0, 2 * H - 1.0)) < 1e-10


def test_covariance_domain():
    with pytest.raises(DomainError):
        covariance_matrix(_reference_soe(), H, 0.0)
    with pytest.raises(DomainError):
        covariance_matrix(_reference_soe(), 0.6, TAU)


# ---- Test 3: Cholesky ----

def test_cholesky_examples():
    np.testing.assert_array_equal(cholesky(np.eye(3)), np.eye(3))
    np.testing.assert_allclose(cholesky(np.array([[4.0, 2.0], [2.0, 5.0]])),
                               np.array([[2.0, 0.0], [1.0, 2.0]]), atol=1e-15)


def test_cholesky_rejects_indefinite_and_asymmetric():
    with pytest.raises(FactorizationError):
        cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(DomainError):
        cholesky(np.array([[1.0, 0.5], [0.4, 1.0]]))


# ---- Test 4: Counter-based streams ----

def test_stream_is_reproducible():
    a = RngStream(123, 7, 1).standard_normal(1000)
    b = RngStream(123, 7, 1).standard_normal(1000)
    np.testing.assert_array_equal(a, b)
    other = RngStream(123, 8, 1).standard_normal(1000)
    assert not np.array_equal(a, other)
    purpose = RngStream(123, 7, 2).standard_normal(1000)
    assert not np.array_equal(a, purpose)


def test_stream_seek_matches_sequential_draws():
    full = RngStream(99, 3).standard_normal(64)
    for position in (0, 1, 4, 5, 11, 40):
        stream = RngStream(99, 3).seek(position)
        np.testing.assert_array_equal(stream.standard_normal(8), full[position:position + 8])
        assert stream.position == position + 8


def test_stream_interleaving_does_not_matter():
    x, y = RngStream(5, 0), RngStream(5, 1)
    mixed = [x.uniforms(3), y.uniforms(5), x.uniforms(2)]
    np.testing.assert_array_equal(np.concatenate([mixed[0], mixed[2]]), RngStream(5, 0).uniforms(5))
    np.testing.assert_array_equal(mixed[1], RngStream(5, 1).uniforms(5))


def test_uniforms_are_open_interval():
    u = RngStream(1, 1).uniforms(100_000)
    assert u.min() > 0.0 and u.max() < 1.0


def test_normals_pass_kolmogorov_smirnov():
    z = RngStream(2024, 0).standard_normal(100_000)
    assert stats.kstest(z, "norm").pvalue > 1e-3


# ---- Test 5: Correlated sampling ----

def test_zero_factor_gives_zero_vectors():
    out = sample_gaussian(np.zeros((4, 4)), RngStream(1, 1), 50)
    assert out.shape == (50, 4)
    assert not out.any()


def test_sample_moments_match_covariance():
    cov = build_covariance(_reference_soe(), H, TAU)
    count = 1 << 17
    draws = sample_gaussian(cov.chol, RngStream(7, 0), count)
    diag = np.diag(cov.matrix)

    assert np.all(np.abs(draws.mean(axis=0)) <= 4 * np.sqrt(diag / count))

    empirical = draws.T @ draws / count
    # erro padrão de E[XY] para média zero conhecida
    stderr = np.sqrt((np.outer(diag, diag) + cov.matrix ** 2) / count)
    assert np.all(np.abs(empirical - cov.matrix) <= 5 * stderr)


def test_local_component_variance():
    cov = build_covariance(_reference_soe(), H, TAU)
    count = 1 << 16
    local = sample_gaussian(cov.chol, RngStream(11, 0), count)[:, -1]
    var = TAU ** (2 * H)
    assert abs(np.mean(local ** 2) - var) <= 4 * math.sqrt(2.0 / count) * var
