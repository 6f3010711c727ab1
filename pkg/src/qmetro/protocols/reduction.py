"""Restriction of a pure-state problem to the two-dimensional span of psi and H psi."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..errors import EigenstateInput, InvalidState
from ..linalg import DEPENDENT_RESIDUAL, hermitian_part
from ..states import Povm, QuantumState, _check_dim


class ReducedProblem(NamedTuple):
    state: QuantumState
    hamiltonian: np.ndarray
    povm: Povm
    basis: np.ndarray  # columns: psi, normalized component of H psi orthogonal to psi


def reduce_to_subspace(state: QuantumState, h, povm: Povm) -> ReducedProblem:
    """Compress (state, H, POVM) onto ``span{psi, H psi}``.

    Only the projected POVM elements ``P E P`` and the compressed
    Hamiltonian enter the first-order outcome probabilities, so the
    reduced problem has the same Fisher information.
    """
    if state.vector is None:
        raise InvalidState("subspace reduction needs a pure state")
    h = hermitian_part(h)
    _check_dim(state, h.shape[0])
    psi = state.vector
    omega = h @ psi
    omega = omega - psi * (psi.conj() @ omega)
    norm = np.linalg.norm(omega)
    if norm < DEPENDENT_RESIDUAL:
        raise EigenstateInput("state is an eigenstate of H: no information, nothing to reduce")
    basis = np.column_stack([psi, omega / norm])
    return ReducedProblem(
        QuantumState.basis(2, 0),
        hermitian_part(basis.conj().T @ h @ basis, 1e-9),
        povm.compress(basis),
        basis,
    )
