import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from qmetro.errors import NotHermitian, ZeroVector
from qmetro.linalg import (
    eig_hermitian,
    orthonormal_basis,
    projector_onto,
    propagator,
    propagator_derivative,
    random_hermitian,
    random_unitary,
    spectral_spread,
)

from conftest import I2, SX, SZ


def test_eig_diagonal():
    es = eig_hermitian(np.diag([0.0, 1.0]))
    np.testing.assert_allclose(es.eigenvalues, [0, 1])
    np.testing.assert_allclose(np.abs(es.eigenvectors), np.eye(2))


def test_eig_pauli_x():
    np.testing.assert_allclose(eig_hermitian(SX).eigenvalues, [-1, 1], atol=1e-15)


def test_eig_reconstruction_from_known_unitary(rng):
    u = random_unitary(8, rng)
    lam = np.sort(rng.standard_normal(8))
    m = (u * lam) @ u.conj().T
    es = eig_hermitian(m)
    np.testing.assert_allclose(es.eigenvalues, lam, atol=1e-12)
    assert np.max(np.abs(es.reconstruct() - m)) <= 1e-9


def test_eig_rejects_non_hermitian():
    with pytest.raises(NotHermitian):
        eig_hermitian(np.array([[0, 1], [0, 0]]))
    with pytest.raises(NotHermitian):
        eig_hermitian(np.ones((2, 3)))


def test_eig_symmetrizes_within_tolerance():
    m = np.array([[1.0, 2.0 + 1e-12], [2.0, -1.0]])
    es = eig_hermitian(m)
    assert np.max(np.abs(es.reconstruct() - 0.5 * (m + m.T))) < 1e-12


def test_eig_randomized_invariants(rng):
    for _ in range(1000):
        d = int(rng.integers(1, 17))
        m = random_hermitian(d, rng)
        w, v = eig_hermitian(m)
        assert np.all(np.diff(w) >= 0)
        assert np.max(np.abs(v.conj().T @ v - np.eye(d))) <= 1e-10
        assert np.max(np.abs((v * w) @ v.conj().T - m)) <= 1e-9


@pytest.mark.parametrize(
    "h, spread",
    [(SZ / 2, 1.0), (np.eye(3), 0.0), (np.diag([-3.0, 0.0, 5.0]), 8.0)],
)
def test_spectral_spread_examples(h, spread):
    assert spectral_spread(h) == pytest.approx(spread, abs=1e-14)


@settings(max_examples=200, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    d=st.integers(1, 8),
    mu=st.floats(-50, 50),
    kappa=st.floats(1e-3, 1e3),
)
def test_spread_shift_and_scale(seed, d, mu, kappa):
    h = random_hermitian(d, np.random.default_rng(seed))
    s = spectral_spread(h)
    assert spectral_spread(h + mu * np.eye(d)) == pytest.approx(s, abs=1e-9 * (1 + abs(mu)))
    assert spectral_spread(kappa * h) == pytest.approx(kappa * s, rel=1e-9, abs=1e-12 * kappa)


def test_propagator_zero_time(rng):
    h = random_hermitian(4, rng)
    np.testing.assert_allclose(propagator(h, 0.0), np.eye(4), atol=1e-14)


def test_propagator_diagonal():
    u = propagator(SZ / 2, np.pi)
    np.testing.assert_allclose(u, np.diag([np.exp(-0.5j * np.pi), np.exp(0.5j * np.pi)]), atol=1e-15)


@pytest.mark.parametrize("t", [0.1, 1.0, 2.7, -4.0])
def test_propagator_pauli_closed_form(t):
    expected = np.cos(t) * I2 - 1j * np.sin(t) * SX
    np.testing.assert_allclose(propagator(SX, t), expected, atol=1e-14)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 8), s=st.floats(-5, 5), t=st.floats(-5, 5))
def test_propagator_group_law_and_unitarity(seed, d, s, t):
    h = random_hermitian(d, np.random.default_rng(seed))
    u = propagator(h, s + t)
    assert np.max(np.abs(u.conj().T @ u - np.eye(d))) <= 1e-9
    assert np.max(np.abs(u - propagator(h, s) @ propagator(h, t))) <= 1e-9


def test_propagator_matches_scipy_expm(rng):
    for _ in range(20):
        h = random_hermitian(5, rng)
        np.testing.assert_allclose(propagator(h, 0.8), scipy.linalg.expm(-0.8j * h), atol=1e-12)


def test_propagator_derivative_against_frechet(rng):
    for _ in range(20):
        d = int(rng.integers(1, 6))
        h0 = random_hermitian(d, rng, 3.0)
        h = random_hermitian(d, rng)
        t = float(rng.uniform(0.1, 2.0))
        _, ref = scipy.linalg.expm_frechet(-1j * t * h0, -1j * t * h)
        np.testing.assert_allclose(propagator_derivative(h0, h, t), ref, atol=1e-11)


def test_propagator_derivative_degenerate_generator(rng):
    h = random_hermitian(3, rng)
    np.testing.assert_allclose(propagator_derivative(np.zeros((3, 3)), h, 0.7), -0.7j * h, atol=1e-14)


def gram_schmidt_projector(vectors, tol=1e-10):
    """Classical Gram-Schmidt oracle, one pass, no reorthogonalization."""
    q = []
    for v in vectors:
        v = np.asarray(v, dtype=complex)
        w = v - sum((u.conj() @ v) * u for u in q) if q else v
        if np.linalg.norm(w) > tol * max(np.linalg.norm(v), 1.0):
            q.append(w / np.linalg.norm(w))
    return sum(np.outer(u, u.conj()) for u in q), len(q)


def test_projector_single_vector():
    np.testing.assert_allclose(projector_onto([[1, 0]]), np.diag([1, 0]), atol=1e-15)


def test_projector_duplicates():
    p = projector_onto([[1, 0], [1, 0]])
    np.testing.assert_allclose(p, np.diag([1, 0]), atol=1e-15)
    assert np.linalg.matrix_rank(p) == 1


def test_projector_state_and_h_state(rng):
    for _ in range(50):
        d = int(rng.integers(3, 9))
        psi = rng.standard_normal(d) + 1j * rng.standard_normal(d)
        psi /= np.linalg.norm(psi)
        h = random_hermitian(d, rng)
        p = projector_onto([psi, h @ psi])
        ref, rank = gram_schmidt_projector([psi, h @ psi])
        assert rank == 2
        np.testing.assert_allclose(p, ref, atol=1e-12)
        np.testing.assert_allclose(p @ psi, psi, atol=1e-12)
        assert np.max(np.abs(p @ p - p)) <= 1e-10
        assert np.max(np.abs(p - p.conj().T)) <= 1e-10


def test_projector_contains_inputs(rng):
    vecs = [rng.standard_normal(6) + 1j * rng.standard_normal(6) for _ in range(3)]
    vecs.append(vecs[0] + 2 * vecs[1])
    q = orthonormal_basis(vecs)
    assert q.shape == (6, 3)
    p = q @ q.conj().T
    for v in vecs:
        np.testing.assert_allclose(p @ v, v, atol=1e-10)


def test_projector_zero_vectors():
    with pytest.raises(ZeroVector):
        projector_onto([np.zeros(3), 1e-14 * np.ones(3)])
