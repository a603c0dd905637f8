import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from charval.core import (ContractError, DomainError, MatrixFunction, OperatorFamily,
                          ParameterError, SpectralProfile, cauchy_derivative, is_hermitian,
                          kernel_projector, spectral_decomp)
from charval.models import polynomial_family


def _herm(rng, n):
    X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return 0.5 * (X + X.conj().T)


def test_spectral_decomp_diagonal():
    w, U = spectral_decomp(np.diag([1.0, -1.0, 0.0]))
    np.testing.assert_allclose(w, [-1, 0, 1])


def test_spectral_decomp_swap():
    w, _ = spectral_decomp(np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_allclose(w, [-1, 1], atol=1e-15)


def test_spectral_decomp_residual_and_unitarity(rng):
    M = _herm(rng, 50)
    w, U = spectral_decomp(M)
    nM = np.linalg.norm(M, 2)
    assert np.linalg.norm(M @ U - U * w, 2) <= 1e-12 * nM
    assert np.linalg.norm(U.conj().T @ U - np.eye(50), 2) <= 1e-12
    assert np.all(np.diff(w) >= 0)


def test_spectral_decomp_rejects_nonhermitian():
    with pytest.raises(ContractError):
        spectral_decomp(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_kernel_projector_examples(rng):
    np.testing.assert_allclose(kernel_projector(np.diag([1.0, 0, 0]), 1e-12), np.diag([0, 1.0, 1.0]))
    M = _herm(rng, 6) + 10 * np.eye(6)
    assert np.allclose(kernel_projector(M), 0)
    v = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    v /= np.linalg.norm(v)
    P = np.outer(v, v.conj())
    np.testing.assert_allclose(kernel_projector(P, 1e-12), np.eye(5) - P, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.integers(0, 6), st.integers(0, 2**31))
def test_kernel_projector_properties(n, k, seed):
    k = min(k, n)
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    lam = np.concatenate([np.zeros(k), rng.uniform(0.5, 2.0, n - k)])
    M = (Q * lam) @ Q.conj().T
    P = kernel_projector(M)
    assert np.linalg.norm(P @ P - P, 2) <= 1e-12
    assert np.linalg.norm(P - P.conj().T, 2) <= 1e-12
    assert round(np.trace(P).real) == k


def test_cauchy_derivative_examples(rng):
    lin = MatrixFunction(value=lambda z: z * np.eye(3), dim=3)
    np.testing.assert_allclose(cauchy_derivative(lin, 0.7 - 0.2j, 0.1), np.eye(3), atol=1e-13)
    sq = MatrixFunction(value=lambda z: z**2 * np.eye(2), dim=2)
    np.testing.assert_allclose(cauchy_derivative(sq, 1.0, 0.1), 2 * np.eye(2), atol=1e-13)
    C = [rng.standard_normal((4, 4)) for _ in range(4)]
    fam = polynomial_family(C)
    z0 = 0.3
    exact = C[1] + 2 * z0 * C[2] + 3 * z0**2 * C[3]
    np.testing.assert_allclose(cauchy_derivative(fam, z0, 0.2, 64), exact, atol=1e-10)


def test_cauchy_derivative_agrees_on_random_points(rng):
    C = [rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5)) for _ in range(3)]
    fam = polynomial_family(C)
    for z in rng.uniform(-1, 1, 20) + 1j * rng.uniform(-1, 1, 20):
        np.testing.assert_allclose(cauchy_derivative(fam, z, 0.1), fam.derivative(z), atol=1e-8)


def test_cauchy_derivative_domain():
    fam = OperatorFamily(2, lambda z: z * np.eye(2), domain_radius=1.0)
    with pytest.raises(DomainError):
        cauchy_derivative(fam, 0.5, 0.6)
    with pytest.raises(DomainError):
        fam(1.5)


def test_family_contract():
    with pytest.raises(ParameterError):
        OperatorFamily(0, lambda z: np.zeros((0, 0)))
    fam = OperatorFamily(2, lambda z: np.eye(3))
    with pytest.raises(ContractError):
        fam(0.1)


def test_F_derivative_matches_difference(rng):
    C = [rng.standard_normal((3, 3)) for _ in range(3)]
    F = polynomial_family(C).F
    z, h = 0.4 + 0.3j, 1e-6
    fd = (F(z + h) - F(z - h)) / (2 * h)
    np.testing.assert_allclose(F.derivative(z), fd, atol=1e-7)
    V, D = F.value_and_derivative(z)
    np.testing.assert_allclose(V, F(z))
    np.testing.assert_allclose(D, F.derivative(z))


def test_reflected_family(rng):
    A0 = _herm(rng, 4)
    fam = polynomial_family([A0])
    ref = fam.reflected()
    np.testing.assert_allclose(ref(0.2), -A0)
    assert is_hermitian(ref.a0())


def test_spectral_profile_count():
    prof = SpectralProfile(tuple(2.0 ** -np.arange(10)))
    assert prof.count(0.1, 1.0) == 4
    assert SpectralProfile(()).count(0, 1) == 0
    assert prof.count(-1, 1) == 10
    with pytest.raises(ContractError):
        prof.count(1, 0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1, 1), max_size=30), st.floats(-1, 1), st.floats(0, 1), st.floats(0, 1))
def test_profile_count_monotone(vals, lo, w1, w2):
    prof = SpectralProfile(tuple(vals))
    a, b = sorted((w1, w2))
    assert prof.count(lo, lo + a) <= prof.count(lo, lo + b)
