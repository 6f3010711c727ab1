"""Random states, POVMs and Hamiltonians for property checks and demos."""
from __future__ import annotations

import numpy as np

from .linalg import random_hermitian, random_unitary
from .protocols.spec import FeedbackStep, MultiRoundSpec, PolicyEntry, ProtocolSpec
from .states import Povm, QuantumState

__all__ = [
    "random_hermitian",
    "random_unitary",
    "random_state",
    "random_ensemble",
    "random_povm",
    "random_control",
    "random_feedback_protocol",
    "random_adaptive_rounds",
]


def random_state(d: int, rng: np.random.Generator) -> QuantumState:
    z = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return QuantumState.pure(z, normalize=True)


def random_ensemble(d: int, rng: np.random.Generator, n_components: int | None = None) -> QuantumState:
    """Mixed state stored with an explicit, generally non-orthogonal, decomposition."""
    k = n_components or int(rng.integers(2, d + 2))
    w = rng.dirichlet(np.ones(k))
    vecs = [random_state(d, rng).vector for _ in range(k)]
    return QuantumState.ensemble(w, vecs)


def random_povm(d: int, n_outcomes: int, rng: np.random.Generator) -> Povm:
    """POVM with measurement operators cut from a Haar-random isometry."""
    u = random_unitary(d * n_outcomes, rng)
    iso = u[:, :d]
    ops = [iso[a * d:(a + 1) * d, :] for a in range(n_outcomes)]
    return Povm.from_operators(ops)


def random_control(d: int, tau: float, rng: np.random.Generator, n_segments: int | None = None,
                   strength: float = 3.0) -> list[tuple[np.ndarray, float]]:
    """Piecewise-constant control schedule with random segment lengths."""
    k = n_segments or int(rng.integers(1, 5))
    durations = rng.dirichlet(np.ones(k)) * tau
    durations[-1] = tau - durations[:-1].sum()
    return [(random_hermitian(d, rng, strength), float(t)) for t in durations]


def _prefixes(counts_by_step: list[dict], k: int) -> list[tuple]:
    level = [()]
    for j in range(k):
        level = [p + (a,) for p in level for a in range(counts_by_step[j][p])]
    return level


def random_feedback_protocol(rng: np.random.Generator, d: int | None = None, n_steps: int | None = None,
                             tau: float | None = None, h=None, max_outcomes: int = 3,
                             mixed: bool | None = None) -> ProtocolSpec:
    """Random feedback protocol with a full policy table.

    Every prefix gets its own random POVM; conditional unitaries and
    per-prefix control schedules are switched on at random.
    """
    d = d or int(rng.integers(2, 5))
    k = n_steps or int(rng.integers(1, 4))
    tau = float(tau if tau is not None else rng.uniform(0.3, 2.0))
    h = random_hermitian(d, rng) if h is None else h
    durations = rng.dirichlet(np.ones(k)) * tau
    durations[-1] = tau - durations[:-1].sum()
    counts, steps = [], []
    for j in range(k):
        counts.append({})
        policy = {}
        for p in _prefixes(counts, j):
            n_out = int(rng.integers(1, max_outcomes + 1))
            counts[j][p] = n_out
            u = random_unitary(d, rng) if rng.random() < 0.5 else None
            ctrl = random_control(d, float(durations[j]), rng) if rng.random() < 0.3 else None
            policy[p] = PolicyEntry(random_povm(d, n_out, rng), unitary=u, control=ctrl)
        steps.append(FeedbackStep(float(durations[j]), policy))
    if mixed is None:
        mixed = rng.random() < 0.3
    state = random_ensemble(d, rng) if mixed else random_state(d, rng)
    return ProtocolSpec.feedback(state, h, steps)


def random_adaptive_rounds(rng: np.random.Generator, d: int | None = None, tau: float | None = None,
                           rounds: int = 2, max_steps: int = 2) -> MultiRoundSpec:
    """Multi-round protocol whose later rounds depend on all earlier outcomes."""
    d = d or int(rng.integers(2, 4))
    tau = float(tau if tau is not None else rng.uniform(0.3, 2.0))
    h = random_hermitian(d, rng)

    def draw():
        return random_feedback_protocol(rng, d, int(rng.integers(1, max_steps + 1)), tau, h, max_outcomes=2)

    from .protocols.feedback import run_feedback_distribution

    policy = {}
    level = [((), draw())]
    for _ in range(rounds - 1):
        nxt = []
        for hist, proto in level:
            policy[hist] = proto
            labels = run_feedback_distribution(proto).labels
            nxt += [(hist + (lab,), draw()) for lab in labels]
        level = nxt
    for hist, proto in level:
        policy[hist] = proto
    return MultiRoundSpec(rounds, policy)
