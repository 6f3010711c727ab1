"""Classical Fisher information, Cramer-Rao bounds and linearized estimators.

The field ``b`` enters as ``b * H``; outcome probabilities are expanded to
first order, ``P = P0 + b dP``, and every bound here is built from the
per-shot Fisher information ``F = sum dP**2 / P0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    AllOutcomesRare,
    CrossCheckFailure,
    DimensionMismatch,
    InsensitiveObservable,
    NonRegular,
    ZeroInformation,
    ZeroSpread,
)
from .linalg import eig_hermitian, hermitian_part, spectral_spread
from .states import (
    Observable,
    Povm,
    QuantumState,
    evolve,
    expectation_and_variance,
    outcome_probabilities,
)

EPS = 1e-12
IRREGULAR_DP = math.sqrt(EPS)
FD_STEP = 1e-6
FD_RTOL = 1e-4


@dataclass(frozen=True, eq=False)
class LinearizedDistribution:
    """Outcome probabilities at zero field and their first-order shifts."""

    p0: np.ndarray
    dp: np.ndarray
    labels: tuple | None = None
    fd_residual: float = float("nan")

    def __post_init__(self):
        p0 = np.asarray(self.p0, dtype=float).copy()
        dp = np.asarray(self.dp, dtype=float).copy()
        if p0.shape != dp.shape or p0.ndim != 1:
            raise DimensionMismatch("p0 and dp must be matching 1-D arrays")
        if np.any(p0 < 0):
            raise ValueError("negative zero-field probability")
        if abs(p0.sum() - 1.0) > 1e-9:
            raise ValueError(f"zero-field probabilities sum to {p0.sum():.12f}")
        if abs(dp.sum()) > 1e-9 * max(1.0, np.abs(dp).sum()):
            raise ValueError(f"probability shifts sum to {dp.sum():.3e}, not 0")
        p0.setflags(write=False)
        dp.setflags(write=False)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "dp", dp)
        if self.labels is None:
            object.__setattr__(self, "labels", tuple(range(len(p0))))

    def __len__(self):
        return len(self.p0)

    def probabilities(self, b: float) -> np.ndarray:
        """First-order probabilities at field ``b`` (may leave [0, 1] for large b)."""
        return self.p0 + b * self.dp

    @property
    def kept(self) -> np.ndarray:
        return self.p0 >= EPS

    @property
    def fisher(self) -> float:
        k = self.kept
        return float(np.sum(self.dp[k] ** 2 / self.p0[k]))

    @property
    def irregular(self) -> tuple[int, ...]:
        bad = (~self.kept) & (np.abs(self.dp) > IRREGULAR_DP)
        return tuple(int(i) for i in np.flatnonzero(bad))


@dataclass(frozen=True)
class FisherReport:
    fisher_per_shot: float
    n_shots: int
    delta_b_min: float
    quantum_bound: float | None = None
    regular: bool = True
    irregular_outcomes: tuple[int, ...] = field(default=())

    @property
    def informative(self) -> bool:
        return self.fisher_per_shot > 0

    def as_dict(self) -> dict:
        return {
            "fisher_per_shot": self.fisher_per_shot,
            "n_shots": self.n_shots,
            "delta_b_min": None if math.isinf(self.delta_b_min) else self.delta_b_min,
            "quantum_bound": self.quantum_bound,
            "regular": self.regular,
            "informative": self.informative,
            "irregular_outcomes": list(self.irregular_outcomes),
        }


def classical_fisher(dist: LinearizedDistribution, n: int = 1, quantum_bound: float | None = None,
                     strict: bool = False) -> FisherReport:
    """Per-shot Fisher information and the resulting ``1/sqrt(N F)`` limit.

    Outcomes with ``P0 < 1e-12`` are left out of the sum. If such an outcome
    still moves (``|dP| > 1e-6``) the expansion is invalid there and the
    report is marked non-regular; ``strict`` turns that into ``NonRegular``.
    """
    if n < 1:
        raise ValueError("shot count must be >= 1")
    f = dist.fisher
    irregular = dist.irregular
    if irregular and strict:
        raise NonRegular(f"outcomes {irregular} have P0 < {EPS:g} but nonzero dP")
    delta = math.inf if f <= 0 else 1.0 / math.sqrt(n * f)
    return FisherReport(f, n, delta, quantum_bound, not irregular, irregular)


def quantum_crb(h, tau: float, n: int = 1) -> float:
    """``1 / (tau sqrt(N) (Lambda - lambda))``."""
    if tau <= 0 or n < 1:
        raise ValueError("need tau > 0 and n >= 1")
    s = spectral_spread(h)
    if s <= 0:
        raise ZeroSpread("zero eigenvalue spread: the field cannot be sensed")
    return 1.0 / (tau * math.sqrt(n) * s)


def _fd_step(h, tau: float) -> float:
    scale = tau * spectral_spread(h)
    return FD_STEP / scale if scale > 0 else FD_STEP


def linearize_povm(state: QuantumState, h, povm: Povm, tau: float, check: bool = True) -> LinearizedDistribution:
    """Zero-field probabilities and commutator derivatives ``i tau <[H, E]>``.

    With ``check`` the derivatives are compared with a central finite
    difference of the exact probabilities; disagreement beyond relative 1e-4
    raises ``CrossCheckFailure``.
    """
    h = hermitian_part(h)
    if h.shape[0] != povm.dim or state.dim != povm.dim:
        raise DimensionMismatch("state, Hamiltonian and POVM dimensions differ")
    p0 = outcome_probabilities(state, povm)
    rho = state.density_matrix
    dp = np.empty(len(povm))
    for a, e in enumerate(povm.elements):
        c = 1j * tau * np.trace(rho @ (h @ e - e @ h))
        if abs(c.imag) > 1e-10 * max(1.0, abs(c.real)):
            raise ArithmeticError(f"commutator expectation has imaginary part {c.imag:.3e}")
        dp[a] = c.real
    residual = float("nan")
    if check:
        step = _fd_step(h, tau)
        plus = outcome_probabilities(evolve(state, h, step, tau), povm)
        minus = outcome_probabilities(evolve(state, h, -step, tau), povm)
        fd = (plus - minus) / (2 * step)
        residual = float(np.max(np.abs(fd - dp))) if len(dp) else 0.0
        floor = 1e-4 * tau * spectral_spread(h)
        tol = FD_RTOL * np.maximum(np.abs(dp), floor)
        if np.any(np.abs(fd - dp) > tol + 1e-12):
            raise CrossCheckFailure(f"finite-difference residual {residual:.3e}")
    return LinearizedDistribution(p0, dp, fd_residual=residual)


def _extremal_vector(w: np.ndarray, v: np.ndarray, top: bool) -> np.ndarray:
    target = w[-1] if top else w[0]
    group = np.flatnonzero(np.abs(w - target) <= 1e-9 * max(1.0, abs(target)))
    if len(group) == 1:
        vec = v[:, group[0]]
    else:
        # degenerate: project the basis vector with the largest overlap
        p = v[:, group] @ v[:, group].conj().T
        weight = np.real(np.diag(p))
        j = int(np.flatnonzero(weight >= weight.max() - 1e-12)[0])
        vec = p[:, j] / np.linalg.norm(p[:, j])
    mag = np.abs(vec)
    k = int(np.flatnonzero(mag >= mag.max() - 1e-12)[0])
    return vec * (abs(vec[k]) / vec[k])


def optimal_configuration(h) -> tuple[QuantumState, Observable]:
    """Probe state and observable that saturate the Cramer-Rao bound.

    State ``(|L> + |l>)/sqrt(2)`` and observable ``i|L><l| - i|l><L|`` where
    ``|L>, |l>`` are eigenvectors of the largest and smallest eigenvalues.
    """
    w, v = eig_hermitian(h)
    if w[-1] - w[0] <= 0:
        raise ZeroSpread("zero eigenvalue spread: the field cannot be sensed")
    big = _extremal_vector(w, v, top=True)
    small = _extremal_vector(w, v, top=False)
    psi = (big + small) / math.sqrt(2)
    op = 1j * np.outer(big, small.conj()) - 1j * np.outer(small, big.conj())
    return QuantumState.pure(psi, normalize=True), Observable(op)


def commutator_expectation(state: QuantumState, h, obs) -> complex:
    op = obs.operator if isinstance(obs, Observable) else np.asarray(obs)
    h = np.asarray(h)
    return complex(np.trace(state.density_matrix @ (h @ op - op @ h)))


def saturation_ratio(state: QuantumState, h, obs) -> float:
    """``|<[H, O]>| / Delta O``; equals the spread for an optimal pair."""
    _, dev = expectation_and_variance(state, obs)
    return abs(commutator_expectation(state, h, obs)) / dev


def sensitivity_from_observable(state: QuantumState, h, obs, tau: float, n: int = 1) -> float:
    """``Delta O / (tau sqrt(N) |<[H, O]>|)`` from first-order perturbation theory."""
    _, dev = expectation_and_variance(state, obs)
    c = abs(commutator_expectation(state, h, obs))
    if c <= 1e-12:
        raise InsensitiveObservable("commutator expectation vanishes")
    return dev / (tau * math.sqrt(n) * c)


class ScanResult(NamedTuple):
    alpha: float
    theta: float
    delta_b: float
    grid: np.ndarray


def two_level_optimum_scan(h, grid: int = 721, tau: float = 1.0, n: int = 1, phi: float = math.pi) -> ScanResult:
    """Grid search of the two-level sensitivity over observable and state angles.

    In the eigenbasis ``(|L>, |l>)`` of ``h`` the observable is
    ``cos(alpha) Z + sin(alpha) X`` and the probe state is
    ``cos(theta/2)|L> + exp(i phi/2) sin(theta/2)|l>``. Both angles run over
    ``[0, pi]`` with ``grid`` points. Ties go to the smallest ``(alpha, theta)``.
    """
    h = hermitian_part(h)
    if h.shape != (2, 2):
        raise DimensionMismatch("the angle scan needs a 2x2 Hamiltonian")
    w, v = eig_hermitian(h)
    big, small = v[:, 1], v[:, 0]
    angles = np.linspace(0.0, math.pi, grid)
    z = np.outer(big, big.conj()) - np.outer(small, small.conj())
    x = np.outer(big, small.conj()) + np.outer(small, big.conj())
    ops = np.cos(angles)[:, None, None] * z + np.sin(angles)[:, None, None] * x
    psis = (np.cos(angles / 2)[:, None] * big
            + np.exp(0.5j * phi) * np.sin(angles / 2)[:, None] * small)
    comm = np.einsum("ij,ajk->aik", h, ops) - np.einsum("aij,jk->aik", ops, h)
    sq = np.einsum("aij,ajk->aik", ops, ops)
    mean = np.einsum("ti,aij,tj->at", psis.conj(), ops, psis).real
    second = np.einsum("ti,aij,tj->at", psis.conj(), sq, psis).real
    slope = np.abs(np.einsum("ti,aij,tj->at", psis.conj(), comm, psis))
    dev = np.sqrt(np.clip(second - mean ** 2, 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        db = np.where(slope > 1e-12, dev / (tau * math.sqrt(n) * slope), np.inf)
    i, j = np.unravel_index(int(np.argmin(db)), db.shape)
    return ScanResult(float(angles[i]), float(angles[j]), float(db[i, j]), db)


def derived_outcome_values(dist: LinearizedDistribution) -> np.ndarray:
    """Per-outcome values ``dP / (P0 F)``; zero for rare outcomes or when ``F = 0``."""
    kept = dist.kept
    if not np.any(kept):
        raise AllOutcomesRare("every outcome has P0 below 1e-12")
    f = dist.fisher
    values = np.zeros(len(dist))
    if f > 0:
        values[kept] = dist.dp[kept] / (dist.p0[kept] * f)
    return values


def derived_operator(povm: Povm, dist: LinearizedDistribution) -> Observable:
    """Observable whose POVM readout carries all of the POVM's Fisher information.

    Outcome ``a`` is assigned the value ``dP_a / (P0_a F)``; the operator is
    ``sum_a value_a E_a``. Its mean over observed frequencies is the
    linearized maximum-likelihood estimate. Outcomes with ``P0 < 1e-12`` get
    value 0 and are listed in ``excluded``.
    """
    if len(povm) != len(dist):
        raise DimensionMismatch("POVM and distribution have different outcome counts")
    values = derived_outcome_values(dist)
    kept = dist.kept
    op = sum(x * e for x, e in zip(values, povm.elements))
    excluded = tuple(int(i) for i in np.flatnonzero(~kept))
    return Observable(op, outcome_values=values, excluded=excluded)


def readout_sensitivity(obs: Observable, dist: LinearizedDistribution, n: int = 1) -> float:
    """Sensitivity of estimating ``b`` from the mean reported value of ``obs``."""
    o = np.asarray(obs.outcome_values)
    slope = float(o @ dist.dp)
    mean = float(o @ dist.p0)
    var = float((o ** 2) @ dist.p0) - mean ** 2
    if abs(slope) <= 1e-15:
        return math.inf
    return math.sqrt(max(var, 0.0)) / (abs(slope) * math.sqrt(n))


def _check_frequencies(frequencies, dist) -> np.ndarray:
    freq = np.asarray(frequencies, dtype=float)
    if freq.shape != dist.p0.shape:
        raise DimensionMismatch("frequency table does not match the outcome count")
    if abs(freq.sum() - 1.0) > 1e-9:
        raise ValueError(f"frequencies sum to {freq.sum():.12f}")
    return freq


def mle_estimate(frequencies: Sequence[float], dist: LinearizedDistribution) -> float:
    """Linearized maximum-likelihood estimate of ``b`` from outcome frequencies."""
    freq = _check_frequencies(frequencies, dist)
    f = dist.fisher
    if f <= 0:
        raise ZeroInformation("the distribution carries no Fisher information")
    k = dist.kept
    delta = freq[k] - dist.p0[k]
    return float(np.sum(dist.dp[k] * delta / dist.p0[k]) / f)


def observable_estimate(frequencies: Sequence[float], obs: Observable) -> float:
    """Mean reported value of an observable read out through its POVM."""
    if obs.outcome_values is None:
        raise ValueError("observable has no outcome values")
    freq = np.asarray(frequencies, dtype=float)
    return float(freq @ obs.outcome_values)


def finite_trial_bound(dist: LinearizedDistribution, k: int) -> float:
    """Lower bound on the spread of any estimator built from ``k`` trials."""
    if k < 1:
        raise ValueError("need at least one trial")
    f = dist.fisher
    if f <= 0:
        raise ZeroInformation("the distribution carries no Fisher information")
    return 1.0 / math.sqrt(k * f)


def component_fisher(state: QuantumState, h, povm: Povm, tau: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Fisher information of a mixed state and of each stored pure component.

    Returns ``(F_mixture, weights, F_components)``.
    """
    mix = linearize_povm(state, h, povm, tau, check=False).fisher
    weights, comps = state.decomposition()
    parts = np.array([
        linearize_povm(QuantumState(vector=c), h, povm, tau, check=False).fisher for c in comps
    ])
    return mix, np.asarray(weights), parts
