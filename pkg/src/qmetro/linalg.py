"""Dense Hermitian linear algebra: eigensystems, spreads, propagators, projectors.

Matrices are plain complex ``numpy`` arrays. Every exponential in this library
is of a Hermitian generator, so propagators are built from the eigensystem,
which keeps them unitary to round-off.
"""
from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from .errors import NoConvergence, NotHermitian, ZeroVector

HERMITIAN_TOL = 1e-10
NULL_NORM = 1e-12
DEPENDENT_RESIDUAL = 1e-10


class EigenSystem(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def as_matrix(m) -> np.ndarray:
    """Return ``m`` as a finite 2-D complex array (a fresh copy)."""
    a = np.array(m, dtype=complex)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def hermitian_part(m, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Check Hermiticity to ``tol`` (max-norm) and return ``(m + m^dag)/2``."""
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise NotHermitian(f"matrix is not square: {a.shape}")
    dev = np.max(np.abs(a - a.conj().T)) if a.size else 0.0
    if dev > tol:
        raise NotHermitian(f"asymmetry {dev:.3e} exceeds tolerance {tol:.0e}")
    return 0.5 * (a + a.conj().T)


def is_hermitian(m, tol: float = HERMITIAN_TOL) -> bool:
    try:
        hermitian_part(m, tol)
    except (NotHermitian, ValueError):
        return False
    return True


def eig_hermitian(m) -> EigenSystem:
    """Eigendecomposition of a Hermitian matrix, eigenvalues ascending."""
    a = hermitian_part(m)
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    return EigenSystem(w, v)


def spectral_spread(h) -> float:
    """Largest minus smallest eigenvalue."""
    w = eig_hermitian(h).eigenvalues
    return float(w[-1] - w[0])


def propagator(h, t: float) -> np.ndarray:
    """``exp(-i h t)`` for Hermitian ``h``."""
    w, v = eig_hermitian(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def propagator_derivative(h0, h, t: float) -> np.ndarray:
    """Derivative in ``b`` of ``exp(-i (h0 + b h) t)`` at ``b = 0``.

    Uses the divided-difference (Daleckii-Krein) form in the eigenbasis of
    ``h0``; equivalent to ``-i t U0(t) Hbar`` with ``Hbar`` the interaction
    picture average of ``h`` over ``[0, t]``.
    """
    w, v = eig_hermitian(h0)
    g = v.conj().T @ hermitian_part(h) @ v
    e = np.exp(-1j * w * t)
    dw = w[:, None] - w[None, :]
    close = np.abs(dw * t) < 1e-8
    safe = np.where(close, 1.0, dw)
    f = np.where(
        close,
        -1j * t * np.exp(-0.5j * (w[:, None] + w[None, :]) * t),
        (e[:, None] - e[None, :]) / safe,
    )
    return v @ (g * f) @ v.conj().T


def orthonormal_basis(vectors: Sequence) -> np.ndarray:
    """Columns spanning ``vectors``; modified Gram-Schmidt, two passes.

    Vectors whose residual after projection falls below 1e-10 (relative to
    their own norm) are dropped as linearly dependent.
    """
    basis: list[np.ndarray] = []
    any_nonnull = False
    for vec in vectors:
        x = np.asarray(vec, dtype=complex).ravel()
        norm = np.linalg.norm(x)
        if norm < NULL_NORM:
            continue
        any_nonnull = True
        x = x / norm
        for _ in range(2):
            for q in basis:
                x = x - (q.conj() @ x) * q
        r = np.linalg.norm(x)
        if r < DEPENDENT_RESIDUAL:
            continue
        basis.append(x / r)
    if not any_nonnull:
        raise ZeroVector("all input vectors are numerically null")
    return np.stack(basis, axis=1)


def projector_onto(vectors: Sequence) -> np.ndarray:
    """Orthogonal projector onto the span of ``vectors``."""
    q = orthonormal_basis(vectors)
    p = q @ q.conj().T
    return 0.5 * (p + p.conj().T)


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary (QR of a complex Ginibre matrix, phase-fixed)."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_hermitian(d: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return scale * 0.5 * (a + a.conj().T)
