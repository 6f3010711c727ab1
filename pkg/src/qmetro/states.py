"""States, observables, POVMs and the unitary sensing dynamics."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidPovm,
    InvalidState,
    NegativeProbability,
    NotProjector,
    ScheduleMismatch,
)
from .linalg import HERMITIAN_TOL, eig_hermitian, hermitian_part, orthonormal_basis, propagator

NORM_TOL = 1e-10
COMPLETENESS_TOL = 1e-9
PSD_TOL = 1e-10
PROB_CLAMP = 1e-12


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class QuantumState:
    """A pure state vector or a density matrix.

    Build with :meth:`pure`, :meth:`mixed` or :meth:`ensemble`. An ensemble
    keeps its pure-state decomposition so per-component quantities can be
    compared against the mixture.
    """

    vector: np.ndarray | None = None
    rho: np.ndarray | None = None
    weights: np.ndarray | None = None
    components: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        if (self.vector is None) == (self.rho is None):
            raise InvalidState("give exactly one of vector or rho")
        if self.vector is not None:
            psi = np.array(self.vector, dtype=complex).ravel()
            if abs(np.linalg.norm(psi) - 1.0) > NORM_TOL:
                raise InvalidState(f"state vector has norm {np.linalg.norm(psi):.12f}")
            object.__setattr__(self, "vector", _frozen(psi))
            return
        try:
            rho = hermitian_part(self.rho)
        except ValueError as exc:
            raise InvalidState(f"density matrix: {exc}") from exc
        tr = np.trace(rho).real
        if abs(tr - 1.0) > NORM_TOL:
            raise InvalidState(f"density matrix has trace {tr:.12f}")
        if np.linalg.eigvalsh(rho)[0] < -PSD_TOL:
            raise InvalidState("density matrix has a negative eigenvalue")
        object.__setattr__(self, "rho", _frozen(rho))
        if self.components is not None:
            p = np.array(self.weights, dtype=float)
            vecs = tuple(_frozen(np.array(v, dtype=complex).ravel()) for v in self.components)
            if len(p) != len(vecs):
                raise InvalidState("weights and components differ in length")
            if np.any(p < 0) or abs(p.sum() - 1.0) > NORM_TOL:
                raise InvalidState("ensemble weights must be non-negative and sum to 1")
            for v in vecs:
                if abs(np.linalg.norm(v) - 1.0) > NORM_TOL:
                    raise InvalidState("ensemble component is not normalized")
            recon = sum(pi * np.outer(v, v.conj()) for pi, v in zip(p, vecs))
            if np.max(np.abs(recon - rho)) > 1e-9:
                raise InvalidState("ensemble does not reproduce the density matrix")
            object.__setattr__(self, "weights", _frozen(p))
            object.__setattr__(self, "components", vecs)

    @classmethod
    def pure(cls, psi, normalize: bool = False) -> "QuantumState":
        psi = np.asarray(psi, dtype=complex).ravel()
        if normalize:
            psi = psi / np.linalg.norm(psi)
        return cls(vector=psi)

    @classmethod
    def mixed(cls, rho) -> "QuantumState":
        return cls(rho=rho)

    @classmethod
    def ensemble(cls, weights, vectors) -> "QuantumState":
        vecs = [np.asarray(v, dtype=complex).ravel() for v in vectors]
        w = np.asarray(weights, dtype=float)
        rho = sum(p * np.outer(v, v.conj()) for p, v in zip(w, vecs))
        return cls(rho=rho, weights=w, components=tuple(vecs))

    @classmethod
    def basis(cls, d: int, index: int) -> "QuantumState":
        psi = np.zeros(d, dtype=complex)
        psi[index] = 1.0
        return cls(vector=psi)

    @property
    def kind(self) -> str:
        return "pure" if self.vector is not None else "mixed"

    @property
    def dim(self) -> int:
        return len(self.vector) if self.vector is not None else self.rho.shape[0]

    @property
    def density_matrix(self) -> np.ndarray:
        if self.rho is not None:
            return self.rho
        return np.outer(self.vector, self.vector.conj())

    def decomposition(self) -> tuple[np.ndarray, list[np.ndarray]]:
        """Weights and pure components: the stored ensemble, else the eigenbasis."""
        if self.vector is not None:
            return np.ones(1), [self.vector]
        if self.components is not None:
            return self.weights, list(self.components)
        w, v = eig_hermitian(self.rho)
        keep = w > PSD_TOL
        return w[keep] / w[keep].sum(), [v[:, i] for i in np.flatnonzero(keep)]

    def purity(self) -> float:
        if self.vector is not None:
            return 1.0
        return float(np.real(np.trace(self.rho @ self.rho)))

    def transform(self, u: np.ndarray) -> "QuantumState":
        """Apply a unitary, carrying any stored ensemble along."""
        if self.vector is not None:
            return QuantumState(vector=u @ self.vector)
        if self.components is not None:
            return QuantumState.ensemble(self.weights, [u @ v for v in self.components])
        return QuantumState(rho=u @ self.rho @ u.conj().T)


@dataclass(frozen=True, eq=False)
class Observable:
    """A Hermitian operator to be measured.

    ``outcome_values`` is set when the observable is read out through a
    POVM rather than its own eigenbasis: outcome ``a`` then reports
    ``outcome_values[a]``.
    """

    operator: np.ndarray
    outcome_values: np.ndarray | None = None
    excluded: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "operator", _frozen(hermitian_part(self.operator)))

    @property
    def dim(self) -> int:
        return self.operator.shape[0]


@dataclass(frozen=True, eq=False)
class Povm:
    """Positive operators summing to the identity (or to ``support``).

    ``operators`` optionally holds measurement operators ``M`` with
    ``E = M^dag M``, which fix the post-measurement update ``M rho M^dag``.
    ``support`` is set for POVMs compressed onto a subspace, whose elements
    sum to the projector onto that subspace.
    """

    elements: tuple[np.ndarray, ...]
    operators: tuple[np.ndarray, ...] | None = None
    support: np.ndarray | None = None

    def __post_init__(self):
        els = tuple(_frozen(hermitian_part(e, 1e-9)) for e in self.elements)
        if not els:
            raise InvalidPovm("a POVM needs at least one element")
        d = els[0].shape[0]
        if any(e.shape != (d, d) for e in els):
            raise InvalidPovm("POVM elements have inconsistent shapes")
        for i, e in enumerate(els):
            if np.linalg.eigvalsh(e)[0] < -PSD_TOL:
                raise InvalidPovm(f"element {i} is not positive semidefinite")
        target = np.eye(d) if self.support is None else np.asarray(self.support)
        total = sum(els)
        if np.max(np.abs(total - target)) > COMPLETENESS_TOL:
            raise InvalidPovm("POVM elements do not sum to the identity")
        object.__setattr__(self, "elements", els)
        if self.support is not None:
            object.__setattr__(self, "support", _frozen(np.array(self.support, dtype=complex)))
        if self.operators is not None:
            ops = tuple(_frozen(np.array(m, dtype=complex)) for m in self.operators)
            if len(ops) != len(els):
                raise InvalidPovm("operator count differs from element count")
            for m, e in zip(ops, els):
                if np.max(np.abs(m.conj().T @ m - e)) > 1e-9:
                    raise InvalidPovm("measurement operator does not reproduce its element")
            object.__setattr__(self, "operators", ops)

    @classmethod
    def from_operators(cls, operators: Iterable) -> "Povm":
        ops = [np.asarray(m, dtype=complex) for m in operators]
        return cls(tuple(m.conj().T @ m for m in ops), operators=tuple(ops))

    @classmethod
    def projective(cls, basis) -> "Povm":
        """Rank-one projectors onto the columns of a unitary ``basis``."""
        b = np.asarray(basis, dtype=complex)
        projs = [np.outer(b[:, i], b[:, i].conj()) for i in range(b.shape[1])]
        return cls(tuple(projs), operators=tuple(projs))

    @classmethod
    def from_observable(cls, obs, tol: float = 1e-9) -> "Povm":
        """Spectral projectors of an observable, ascending eigenvalue order.

        Degenerate eigenvalues share one projector; see :func:`observable_spectrum`.
        """
        return cls.projective_groups(*observable_spectrum(obs, tol)[1:])

    @classmethod
    def projective_groups(cls, vectors, groups) -> "Povm":
        projs = []
        for g in groups:
            v = vectors[:, g]
            projs.append(v @ v.conj().T)
        return cls(tuple(projs), operators=tuple(projs))

    @classmethod
    def trivial(cls, d: int) -> "Povm":
        eye = np.eye(d, dtype=complex)
        return cls((eye,), operators=(eye,))

    @classmethod
    def unitary(cls, u) -> "Povm":
        """Single-outcome measurement whose only operator is the unitary ``u``."""
        u = np.asarray(u, dtype=complex)
        return cls((np.eye(u.shape[0], dtype=complex),), operators=(u,))

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    def __len__(self) -> int:
        return len(self.elements)

    def kraus(self) -> tuple[np.ndarray, ...]:
        """Measurement operators, defaulting to the element square roots."""
        if self.operators is not None:
            return self.operators
        roots = []
        for e in self.elements:
            w, v = eig_hermitian(e)
            roots.append((v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T)
        return tuple(roots)

    def compress(self, basis: np.ndarray) -> "Povm":
        """Express the POVM in the coordinates of an orthonormal column ``basis``."""
        els = tuple(basis.conj().T @ e @ basis for e in self.elements)
        return Povm(els)


def observable_spectrum(obs, tol: float = 1e-9):
    """Distinct eigenvalues of an observable with eigenvector groups."""
    op = obs.operator if isinstance(obs, Observable) else obs
    w, v = eig_hermitian(op)
    values, groups = [], []
    for i, x in enumerate(w):
        if values and abs(x - values[-1]) <= tol * max(1.0, abs(x)):
            groups[-1].append(i)
        else:
            values.append(x)
            groups.append([i])
    return np.array(values), v, groups


def _check_dim(state: QuantumState, d: int):
    if state.dim != d:
        raise DimensionMismatch(f"state dimension {state.dim} vs operator dimension {d}")


def evolve(state: QuantumState, h, b: float, tau: float) -> QuantumState:
    """Evolve under ``b * h`` for time ``tau``."""
    if tau < 0:
        raise ValueError("evolution time must be non-negative")
    h = np.asarray(h)
    _check_dim(state, h.shape[0])
    if b == 0 or tau == 0:
        return state
    return state.transform(propagator(b * h, tau))


def clamp_probabilities(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if np.any(p < -PROB_CLAMP):
        raise NegativeProbability(f"probability {p.min():.3e} below clamp window")
    return np.where(p < 0.0, 0.0, p)


def outcome_probabilities(state: QuantumState, povm: Povm) -> np.ndarray:
    """Born-rule outcome probabilities."""
    _check_dim(state, povm.dim)
    if state.vector is not None:
        psi = state.vector
        p = np.array([np.real(psi.conj() @ e @ psi) for e in povm.elements])
    else:
        rho = state.rho
        p = np.array([np.real(np.sum(rho.T * e)) for e in povm.elements])
    p = clamp_probabilities(p)
    if povm.support is None and abs(p.sum() - 1.0) > COMPLETENESS_TOL:
        raise InvalidPovm(f"probabilities sum to {p.sum():.12f}")
    return p


def _expect(state: QuantumState, op: np.ndarray) -> complex:
    if state.vector is not None:
        return complex(state.vector.conj() @ op @ state.vector)
    return complex(np.sum(state.rho.T * op))


def expectation_and_variance(state: QuantumState, obs) -> tuple[float, float]:
    """Mean and standard deviation of an observable.

    Returns ``(mean, deviation)``; despite the name the second entry is the
    square root of the variance.
    """
    op = obs.operator if isinstance(obs, Observable) else hermitian_part(obs)
    _check_dim(state, op.shape[0])
    mean = _expect(state, op)
    scale = max(1.0, np.max(np.abs(op)))
    if abs(mean.imag) > 1e-10 * scale:
        raise ArithmeticError(f"expectation has imaginary part {mean.imag:.3e}")
    second = _expect(state, op @ op).real
    var = max(second - mean.real ** 2, 0.0)
    return float(mean.real), float(np.sqrt(var))


def tensor(a, b):
    """Kronecker product of two states, two operators or two POVMs."""
    if isinstance(a, QuantumState) and isinstance(b, QuantumState):
        if a.vector is not None and b.vector is not None:
            return QuantumState(vector=np.kron(a.vector, b.vector))
        if a.components is not None or b.components is not None:
            wa, va = a.decomposition()
            wb, vb = b.decomposition()
            return QuantumState.ensemble(
                [x * y for x in wa for y in wb], [np.kron(u, v) for u in va for v in vb]
            )
        return QuantumState(rho=np.kron(a.density_matrix, b.density_matrix))
    if isinstance(a, Povm) and isinstance(b, Povm):
        els = tuple(np.kron(x, y) for x in a.elements for y in b.elements)
        ops = None
        if a.operators is not None and b.operators is not None:
            ops = tuple(np.kron(x, y) for x in a.operators for y in b.operators)
        return Povm(els, operators=ops)
    if isinstance(a, Observable) and isinstance(b, Observable):
        return Observable(np.kron(a.operator, b.operator))
    if isinstance(a, (QuantumState, Povm, Observable)) or isinstance(b, (QuantumState, Povm, Observable)):
        raise TypeError(f"cannot tensor {type(a).__name__} with {type(b).__name__}")
    return np.kron(np.asarray(a), np.asarray(b))


def extend_povm(povm: Povm, ancilla_dim: int) -> Povm:
    """``{E (x) I}`` acting on system (x) ancilla."""
    return tensor(povm, Povm.trivial(ancilla_dim))


def project_povm(povm: Povm, pi) -> Povm:
    """Compress a POVM with a projector: elements ``pi E pi``, summing to ``pi``."""
    pi = np.asarray(pi, dtype=complex)
    if pi.shape != (povm.dim, povm.dim):
        raise DimensionMismatch("projector and POVM dimensions differ")
    if np.max(np.abs(pi - pi.conj().T)) > HERMITIAN_TOL or np.max(np.abs(pi @ pi - pi)) > HERMITIAN_TOL:
        raise NotProjector("operator is not an orthogonal projector")
    els = tuple(pi @ e @ pi for e in povm.elements)
    ops = tuple(m @ pi for m in povm.operators) if povm.operators is not None else None
    return Povm(els, operators=ops, support=pi)


def average_hamiltonian(h, control: Sequence, tau: float, steps_per_segment: int = 64) -> np.ndarray:
    """Interaction-picture average of ``h`` under a piecewise-constant control.

    ``control`` is a sequence of ``(h0, duration)`` segments (``h0`` may be
    ``None`` for no drive). The time integral is a midpoint Riemann sum with
    ``steps_per_segment`` nodes per segment. An empty schedule returns ``h``.
    """
    h = hermitian_part(h)
    d = h.shape[0]
    if steps_per_segment < 1:
        raise ValueError("steps_per_segment must be >= 1")
    if not control:
        return h
    total = sum(float(dur) for _, dur in control)
    if abs(total - tau) > 1e-9:
        raise ScheduleMismatch(f"segment durations sum to {total!r}, expected {tau!r}")
    u = np.eye(d, dtype=complex)
    acc = np.zeros((d, d), dtype=complex)
    for h0, dur in control:
        dur = float(dur)
        if dur < 0:
            raise ScheduleMismatch("negative segment duration")
        h0 = np.zeros((d, d)) if h0 is None else np.asarray(h0)
        w, v = eig_hermitian(h0)
        dt = dur / steps_per_segment
        nodes = (np.arange(steps_per_segment) + 0.5) * dt
        vh_u = v.conj().T @ u
        for t in nodes:
            ut = (v * np.exp(-1j * w * t)) @ vh_u
            acc += dt * (ut.conj().T @ h @ ut)
        u = (v * np.exp(-1j * w * dur)) @ vh_u
    return hermitian_part(acc / tau, 1e-8)


def subspace_basis(state: QuantumState, h) -> np.ndarray:
    """Orthonormal basis of ``span{psi, h psi}`` (one column for eigenstates)."""
    if state.vector is None:
        raise InvalidState("subspace basis needs a pure state")
    return orthonormal_basis([state.vector, np.asarray(h) @ state.vector])
