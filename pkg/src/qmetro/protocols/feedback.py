"""Exact outcome-history enumeration for feedback protocols.

Each history carries the unnormalized density matrix at four field values
(the requested ``b``, zero, and the two finite-difference points) plus one
first-order tangent per completed step. The tangents give the analytic
derivative used to cross-check the finite differences, split by step.
"""
from __future__ import annotations

import numpy as np

from ..errors import Blowup, CrossCheckFailure, PolicyGap
from ..fisher import EPS, FD_RTOL, FD_STEP, IRREGULAR_DP
from ..linalg import hermitian_part, propagator, propagator_derivative, spectral_spread
from ..states import Povm
from .spec import FeedbackStep, OutcomeDistribution, PolicyEntry, ProtocolSpec

HISTORY_CAP = 10**6


def schedule_propagators(h, segments, fields) -> tuple[np.ndarray, np.ndarray]:
    """Propagators over a piecewise schedule at each field value, and the zero-field derivative.

    ``segments`` is a sequence of ``(h0 | None, duration)``. Returns an array
    of shape ``(len(fields), d, d)`` and ``d/db U`` at ``b = 0``.
    """
    d = h.shape[0]
    zero = np.zeros((d, d), dtype=complex)
    us = np.broadcast_to(np.eye(d, dtype=complex), (len(fields), d, d)).copy()
    u0_total = np.eye(d, dtype=complex)
    du = np.zeros((d, d), dtype=complex)
    for h0, dt in segments:
        h0 = zero if h0 is None else h0
        u0 = propagator(h0, dt)
        du = propagator_derivative(h0, h, dt) @ u0_total + u0 @ du
        u0_total = u0 @ u0_total
        us = np.stack([propagator(b * h + h0, dt) for b in fields]) @ us
    return us, du


def interaction_average(h, control, tau: float) -> np.ndarray:
    """Exact interaction-picture average of ``h`` over a piecewise control schedule.

    Uses ``dU/db = -i tau U0 Hbar`` with the Frechet derivative of each
    segment, so there is no time discretization.
    """
    h = hermitian_part(h)
    segs = tuple(control) if control else ((None, tau),)
    if tau <= 0:
        return h.copy()
    us, du = schedule_propagators(h, segs, [0.0])
    return hermitian_part(1j / tau * us[0].conj().T @ du, 1e-8)


def _fd_scale(spec: ProtocolSpec) -> float:
    spreads = [spectral_spread(spec.hamiltonian)]
    for s in spec.steps:
        spreads += [spectral_spread(e.sensing) for e in s.policy.values() if e.sensing is not None]
    return spec.tau * max(spreads)


class _Enumerator:
    def __init__(self, spec: ProtocolSpec, b: float, cap: int):
        self.spec = spec
        self.cap = cap
        self.scale = _fd_scale(spec)
        self.h_fd = FD_STEP / self.scale if self.scale > 0 else FD_STEP
        self.fields = [float(b), 0.0, self.h_fd, -self.h_fd]
        self.cache = {}
        n = len(spec.steps)
        self.depth_mass = np.zeros(n)
        self.pruned = 0.0
        self.irregular = []
        self.leaves = []

    def _step_operators(self, k: int, entry: PolicyEntry):
        key = (k, id(entry))
        if key not in self.cache:
            step = self.spec.steps[k]
            h = entry.sensing if entry.sensing is not None else self.spec.hamiltonian
            us, du = schedule_propagators(h, step.schedule_for(entry), self.fields)
            ops = np.stack(entry.operators())
            self.cache[key] = (ops[:, None] @ us[None], ops @ du)
        return self.cache[key]

    def visit(self, k: int, prefix: tuple, sig: np.ndarray, tan: np.ndarray):
        step = self.spec.steps[k]
        try:
            entry = step.policy[prefix]
        except KeyError:
            raise PolicyGap(f"no policy entry for step {k} after outcomes {prefix}") from None
        amps, damps = self._step_operators(k, entry)
        last = k + 1 == len(self.spec.steps)
        for beta in range(len(amps)):
            a = amps[beta]
            child = a @ sig @ a.conj().transpose(0, 2, 1)
            mass = np.trace(child, axis1=1, axis2=2).real
            self.depth_mass[k] += mass[1]
            label = prefix + (beta,)
            if mass.max() < EPS:
                self.pruned += mass[1]
                if abs(mass[2] - mass[3]) / (2 * self.h_fd) > IRREGULAR_DP:
                    self.irregular.append(label)
                continue
            a0 = a[1]
            x = damps[beta] @ sig[1] @ a0.conj().T
            ctan = np.concatenate([a0 @ tan @ a0.conj().T, (x + x.conj().T)[None]])
            if last:
                if len(self.leaves) >= self.cap:
                    raise Blowup(f"more than {self.cap} outcome histories")
                self.leaves.append((label, mass, np.trace(ctan, axis1=1, axis2=2).real))
            else:
                self.visit(k + 1, label, child, ctan)


def _cross_check(dp_fd, dp_an, scale: float):
    tol = FD_RTOL * np.maximum(np.abs(dp_an), 1e-4 * scale) + 1e-12
    bad = np.abs(dp_fd - dp_an) > tol
    if np.any(bad):
        i = int(np.argmax(np.abs(dp_fd - dp_an) - tol))
        raise CrossCheckFailure(
            f"finite-difference derivative {dp_fd[i]:.6g} disagrees with commutator form {dp_an[i]:.6g}")


def run_feedback_distribution(spec: ProtocolSpec, b: float = 0.0, cap: int = HISTORY_CAP,
                              check: bool = True) -> OutcomeDistribution:
    """Enumerate every outcome history of one round of ``spec``.

    Histories whose probability is below ``1e-12`` at every evaluated field
    are pruned; a pruned history with a derivative above ``1e-6`` is
    recorded in ``irregular``. The finite-difference derivative is the
    primary result and must match the propagated tangent to ``1e-4``.
    Its rounding-level violation of ``sum(dp) = 0`` is removed by projection
    and kept in ``fd_residual``.
    """
    en = _Enumerator(spec, b, cap)
    d = spec.dim
    rho = spec.initial_state.density_matrix
    en.visit(0, (), np.broadcast_to(rho, (4, d, d)).copy(), np.zeros((0, d, d), dtype=complex))
    if not en.leaves:
        raise Blowup("every outcome history was pruned")
    labels = tuple(lab for lab, _, _ in en.leaves)
    mass = np.array([m for _, m, _ in en.leaves])
    steps = np.array([t for _, _, t in en.leaves])
    dp_fd = (mass[:, 2] - mass[:, 3]) / (2 * en.h_fd)
    # sum(dp) = 0 exactly; what remains is rounding amplified by 1/h, so project it out
    residual = float(dp_fd.sum())
    dp_fd = dp_fd - mass[:, 1] / mass[:, 1].sum() * residual
    dp_an = steps.sum(axis=1)
    if check:
        _cross_check(dp_fd, dp_an, en.scale)
    return OutcomeDistribution(
        labels=labels,
        probabilities=mass[:, 0],
        p0=mass[:, 1],
        dp=dp_fd,
        dp_analytic=dp_an,
        b=float(b),
        dp_steps=steps,
        depth_mass=tuple(en.depth_mass),
        pruned_mass=en.pruned,
        irregular=tuple(en.irregular),
        fd_residual=residual,
    )


def step_efficiencies(spec: ProtocolSpec, dist: OutcomeDistribution | None = None) -> np.ndarray:
    """Fisher information carried by each step, rescaled to the full round time.

    Step ``L`` alone contributes ``sum_h dP_L(h)^2 / P0(h)``; dividing by
    ``(duration_L / tau)^2`` gives the information a procedure built only
    from that step would reach per round. Zero-duration steps score 0.
    """
    if dist is None:
        dist = run_feedback_distribution(spec)
    keep = dist.p0 >= EPS
    raw = np.sum(dist.dp_steps[keep] ** 2 / dist.p0[keep, None], axis=0)
    frac = spec.durations / spec.tau if spec.tau > 0 else np.zeros(len(spec.steps))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(frac > 0, raw / frac**2, 0.0)


def strip_feedback(spec: ProtocolSpec) -> ProtocolSpec:
    """Fold every conditional unitary into the measurement operators it follows."""
    steps = []
    for s in spec.steps:
        policy = {}
        for prefix, e in s.policy.items():
            if e.unitary is None:
                policy[prefix] = e
            else:
                policy[prefix] = PolicyEntry(Povm.from_operators(e.operators()), None, e.control, e.sensing)
        steps.append(FeedbackStep(s.duration, policy, s.control))
    return ProtocolSpec(spec.initial_state, spec.hamiltonian, tuple(steps), spec.tau, spec.rounds, spec.variant)


def to_interaction_picture(spec: ProtocolSpec) -> ProtocolSpec:
    """Remove all control Hamiltonians by moving to the rotating frame.

    Each entry's free control evolution ``U0`` is absorbed into its
    measurement operators (``M -> M U0``) and the sensing Hamiltonian is
    replaced by its exact interaction-picture average. Zero-field
    probabilities and first-order derivatives are preserved exactly; the
    distribution at finite field is not.
    """
    steps = []
    for s in spec.steps:
        policy = {}
        for prefix, e in s.policy.items():
            h = e.sensing if e.sensing is not None else spec.hamiltonian
            segs = s.schedule_for(e)
            u0 = schedule_propagators(h, segs, [0.0])[0][0]
            ops = [m @ u0 for m in e.operators()]
            sensing = interaction_average(h, segs, s.duration)
            policy[prefix] = PolicyEntry(Povm.from_operators(ops), None, None, sensing)
        steps.append(FeedbackStep(s.duration, policy))
    return ProtocolSpec(spec.initial_state, spec.hamiltonian, tuple(steps), spec.tau, spec.rounds, "feedback")
