"""Sensor spin plus K polarizable dark spins used as an entanglement resource.

Ordering is sensor first, then the dark spins. Dark-spin basis is
``(up, down)`` with ``I_z = diag(-1/2, +1/2)``, so the fully polarized
``|up...up>`` has ``sum I_z = -K/2``. The circuit: prepare
``(|0> + |1>)/sqrt2 |up...up>``, CNOT onto every dark spin, sense for
``tau`` under ``H_meas``, flip the sensor, CNOT again, read out
``O = i(|0><1| - |1><0|)`` on the sensor.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import CapExceeded
from ..linalg import propagator, spectral_spread
from ..states import Povm, QuantumState
from .spec import FeedbackStep, PolicyEntry, ProtocolSpec

MAX_ANCILLAS = 10

X = np.array([[0, 1], [1, 0]], dtype=complex)
SPIN_Z = np.diag([-0.5, 0.5]).astype(complex)
P0 = np.diag([1, 0]).astype(complex)
P1 = np.diag([0, 1]).astype(complex)
READOUT = np.array([[0, 1j], [-1j, 0]])


def _check_count(k: int):
    if not 0 <= k <= MAX_ANCILLAS:
        raise CapExceeded(f"ancilla count {k} outside 0..{MAX_ANCILLAS}")


def _kron_all(ops) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for op in ops:
        out = np.kron(out, op)
    return out


def _on_spin(op, i: int, k: int) -> np.ndarray:
    """``op`` on dark spin ``i`` of ``k``, identity elsewhere (dark-spin space only)."""
    return _kron_all([op if j == i else np.eye(2) for j in range(k)])


def measurement_hamiltonian(k: int) -> np.ndarray:
    """``|1><1| (x) I + sum_i I_z^i``; eigenvalue spread ``1 + k``."""
    _check_count(k)
    dark = sum((_on_spin(SPIN_Z, i, k) for i in range(k)), np.zeros((2**k, 2**k), dtype=complex))
    return np.kron(P1, np.eye(2**k)) + np.kron(np.eye(2), dark)


def interaction_hamiltonian(k: int, coupling: float, spin_half: bool = False) -> np.ndarray:
    """Sensor-conditioned transverse drive ``coupling |1><1| (x) sum_i I_x^i``.

    With ``spin_half`` the dark-spin operator is ``X/2``; otherwise the
    Pauli ``X`` is used, for which the CNOT pulse is ``pi / (2 coupling)``.
    """
    _check_count(k)
    ix = X / 2 if spin_half else X
    drive = sum((_on_spin(ix, i, k) for i in range(k)), np.zeros((2**k, 2**k), dtype=complex))
    return coupling * np.kron(P1, drive)


def cnot_layer(k: int) -> np.ndarray:
    """Sensor-controlled NOT on every dark spin."""
    _check_count(k)
    return np.kron(P0, np.eye(2**k)) + np.kron(P1, _kron_all([X] * k))


def sensor_flip(k: int) -> np.ndarray:
    return np.kron(X, np.eye(2**k))


def initial_state(k: int) -> QuantumState:
    _check_count(k)
    polarized = np.zeros(2**k)
    polarized[0] = 1.0
    return QuantumState.pure(np.kron(np.array([1, 1]) / math.sqrt(2), polarized))


def readout_povm(k: int) -> Povm:
    """Sensor readout of ``O``; outcome 0 is eigenvalue -1, outcome 1 is +1."""
    _, v = np.linalg.eigh(READOUT)
    return Povm.from_operators([np.kron(np.outer(v[:, i], v[:, i].conj()), np.eye(2**k)) for i in range(2)])


def build_ancilla_protocol(k: int, tau: float, lambda_coupling: float = 1.0, rounds: int = 1) -> ProtocolSpec:
    """Two-step protocol: instantaneous entangling gate, then sensing and readout.

    The entangling gate is the exact CNOT layer (see :func:`pulse_deviation`
    for the timed-pulse equivalent at the given coupling). The flip and the
    disentangling CNOT are folded into the readout operators.
    """
    _check_count(k)
    if lambda_coupling <= 0:
        raise ValueError("coupling must be positive")
    d = 2 ** (k + 1)
    c = cnot_layer(k)
    entangle = FeedbackStep(0.0, {(): PolicyEntry(Povm.trivial(d), unitary=c)})
    tail = c @ sensor_flip(k)
    readout = Povm.from_operators([m @ tail for m in readout_povm(k).operators])
    sense = FeedbackStep(float(tau), {(0,): PolicyEntry(readout)})
    return ProtocolSpec(initial_state(k), measurement_hamiltonian(k), (entangle, sense), float(tau), rounds, "feedback")


def circuit_states(k: int, tau: float, b: float) -> dict:
    """State vector after each stage of the circuit at field ``b``."""
    h = measurement_hamiltonian(k)
    c = cnot_layer(k)
    prepared = initial_state(k).vector
    entangled = c @ prepared
    w = np.diag(h).real  # H_meas is diagonal in the computational basis
    sensed = np.exp(-1j * b * tau * w) * entangled
    flipped = sensor_flip(k) @ sensed
    final = c @ flipped
    return {"prepared": prepared, "entangled": entangled, "sensed": sensed,
            "flipped": flipped, "final": final}


def branch_phases(k: int, tau: float, b: float) -> tuple[float, float]:
    """Phases ``E tau b`` picked up by the ``|1, down...>`` and ``|0, up...>`` branches."""
    h = np.diag(measurement_hamiltonian(k)).real
    d = 2**k
    return float(h[d + d - 1] * tau * b), float(h[0] * tau * b)


def schmidt_coefficients(vector: np.ndarray, k: int) -> np.ndarray:
    """Schmidt coefficients across the sensor / dark-spin cut."""
    return np.linalg.svd(np.asarray(vector).reshape(2, 2**k), compute_uv=False)


def effective_hamiltonian(k: int) -> np.ndarray:
    """``C^dag H_meas C`` compressed onto ``span{|0>, |1>} (x) |up...up>``."""
    c = cnot_layer(k)
    conj = c.conj().T @ measurement_hamiltonian(k) @ c
    d = 2**k
    idx = [0, d]
    return conj[np.ix_(idx, idx)]


def target_hamiltonian(k: int) -> np.ndarray:
    """Sensor operator ``|1><1| (1 + K)``: the dark spins add K to the excited branch."""
    return (1 + k) * P1


def sector_leakage(k: int) -> float:
    """Largest coupling of the polarized sector to the rest under ``C^dag H_meas C``."""
    c = cnot_layer(k)
    conj = c.conj().T @ measurement_hamiltonian(k) @ c
    d = 2**k
    mask = np.ones(2 * d, dtype=bool)
    mask[[0, d]] = False
    return float(np.max(np.abs(conj[np.ix_([0, d], np.flatnonzero(mask))]), initial=0.0))


def effective_hamiltonian_check(k: int) -> tuple[float, float]:
    """Spreads of ``H_meas`` and of the circuit-conjugated sensor Hamiltonian."""
    return spectral_spread(measurement_hamiltonian(k)), spectral_spread(effective_hamiltonian(k))


def pulse_deviation(k: int, coupling: float, t: float, spin_half: bool = False) -> float:
    """Distance of ``exp(-i H_int t)`` from the CNOT layer up to sensor-local phases.

    Both operators are block diagonal in the sensor basis; each block of
    ``C^dag exp(-i H_int t)`` is compared with the best multiple of the
    identity.
    """
    u = propagator(interaction_hamiltonian(k, coupling, spin_half), t)
    g = cnot_layer(k).conj().T @ u
    d = 2**k
    worst = float(np.max(np.abs(g[:d, d:]), initial=0.0) + np.max(np.abs(g[d:, :d]), initial=0.0))
    for blk in (g[:d, :d], g[d:, d:]):
        worst = max(worst, float(np.max(np.abs(blk - np.trace(blk) / d * np.eye(d)))))
    return worst


def entangling_pulse_time(coupling: float, spin_half: bool = False) -> float:
    return math.pi / coupling if spin_half else math.pi / (2 * coupling)
