"""Declarative protocol descriptions and their outcome distributions."""
from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from ..codec import decode_array, decode_povm, decode_state, encode_array, encode_povm, encode_state
from ..errors import DimensionMismatch, ScheduleMismatch
from ..fisher import EPS, LinearizedDistribution
from ..linalg import hermitian_part
from ..states import Povm, QuantumState

VARIANTS = ("simple", "controlled", "feedback")

Schedule = tuple  # of (h0 | None, duration) pairs


def _schedule(control, d: int, duration: float | None) -> Schedule:
    if not control:
        return ()
    segs = []
    for h0, dur in control:
        h0 = None if h0 is None else hermitian_part(h0)
        if h0 is not None and h0.shape != (d, d):
            raise DimensionMismatch("control Hamiltonian has the wrong dimension")
        if dur < 0:
            raise ScheduleMismatch("negative control segment")
        segs.append((h0, float(dur)))
    if duration is not None and abs(sum(t for _, t in segs) - duration) > 1e-9:
        raise ScheduleMismatch("control segments do not fill the step")
    return tuple(segs)


@dataclass(frozen=True, eq=False)
class PolicyEntry:
    """What happens in one step for one outcome-history prefix.

    The system evolves for the step duration under ``b * H + H0(t)``
    (``control`` overrides the step's default schedule, ``sensing`` replaces
    ``H``), is measured with ``povm.kraus()``, then ``unitary`` is applied.
    """

    povm: Povm
    unitary: np.ndarray | None = None
    control: Schedule | None = None
    sensing: np.ndarray | None = None

    def __post_init__(self):
        d = self.povm.dim
        if self.unitary is not None:
            u = np.array(self.unitary, dtype=complex)
            if u.shape != (d, d) or np.max(np.abs(u.conj().T @ u - np.eye(d))) > 1e-9:
                raise ValueError("feedback unitary is not a unitary of the POVM dimension")
            object.__setattr__(self, "unitary", u)
        if self.control is not None:
            object.__setattr__(self, "control", _schedule(self.control, d, None))
        if self.sensing is not None:
            object.__setattr__(self, "sensing", hermitian_part(self.sensing))

    def operators(self) -> tuple[np.ndarray, ...]:
        ks = self.povm.kraus()
        if self.unitary is None:
            return ks
        return tuple(self.unitary @ m for m in ks)


@dataclass(frozen=True, eq=False)
class FeedbackStep:
    """One sensing interval followed by a history-dependent measurement.

    ``policy`` maps the tuple of earlier outcomes in the round to a
    :class:`PolicyEntry`; ``control`` is the default piecewise-constant
    ``H0`` schedule for the interval.
    """

    duration: float
    policy: Mapping[tuple, PolicyEntry]
    control: Schedule = ()

    def __post_init__(self):
        if self.duration < 0:
            raise ScheduleMismatch("negative step duration")
        pol = {tuple(int(x) for x in k): v for k, v in dict(self.policy).items()}
        object.__setattr__(self, "policy", MappingProxyType(pol))
        dims = {e.povm.dim for e in pol.values()}
        if len(dims) > 1:
            raise DimensionMismatch("policy entries disagree on dimension")
        d = dims.pop() if dims else None
        if self.control and d is not None:
            object.__setattr__(self, "control", _schedule(self.control, d, self.duration))
        else:
            object.__setattr__(self, "control", tuple(self.control))

    def schedule_for(self, entry: PolicyEntry) -> Schedule:
        segs = entry.control if entry.control is not None else self.control
        if not segs:
            return ((None, self.duration),)
        if abs(sum(t for _, t in segs) - self.duration) > 1e-9:
            raise ScheduleMismatch("control segments do not fill the step")
        return segs


@dataclass(frozen=True, eq=False)
class ProtocolSpec:
    """A single-round metrology procedure repeated ``rounds`` times."""

    initial_state: QuantumState
    hamiltonian: np.ndarray
    steps: tuple[FeedbackStep, ...]
    tau: float
    rounds: int = 1
    variant: str = "feedback"

    def __post_init__(self):
        h = hermitian_part(self.hamiltonian)
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "steps", tuple(self.steps))
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not self.steps:
            raise ValueError("a protocol needs at least one step")
        total = sum(s.duration for s in self.steps)
        if abs(total - self.tau) > 1e-9:
            raise ScheduleMismatch(f"step durations sum to {total!r}, expected tau={self.tau!r}")
        d = h.shape[0]
        if self.initial_state.dim != d:
            raise DimensionMismatch("initial state and Hamiltonian dimensions differ")
        for s in self.steps:
            for e in s.policy.values():
                if e.povm.dim != d:
                    raise DimensionMismatch("policy POVM dimension differs from the Hamiltonian")

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def durations(self) -> np.ndarray:
        return np.array([s.duration for s in self.steps])

    @classmethod
    def simple(cls, state: QuantumState, h, povm: Povm, tau: float, rounds: int = 1) -> "ProtocolSpec":
        step = FeedbackStep(tau, {(): PolicyEntry(povm)})
        return cls(state, h, (step,), tau, rounds, "simple")

    @classmethod
    def controlled(cls, state: QuantumState, h, povm: Povm, tau: float, control, rounds: int = 1) -> "ProtocolSpec":
        step = FeedbackStep(tau, {(): PolicyEntry(povm)}, tuple(control))
        return cls(state, h, (step,), tau, rounds, "controlled")

    @classmethod
    def feedback(cls, state: QuantumState, h, steps: Sequence[FeedbackStep], rounds: int = 1) -> "ProtocolSpec":
        steps = tuple(steps)
        return cls(state, h, steps, float(sum(s.duration for s in steps)), rounds, "feedback")

    def with_state(self, state: QuantumState) -> "ProtocolSpec":
        return ProtocolSpec(state, self.hamiltonian, self.steps, self.tau, self.rounds, self.variant)

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "tau": self.tau,
            "rounds": self.rounds,
            "hamiltonian": encode_array(self.hamiltonian),
            "initial_state": encode_state(self.initial_state),
            "steps": [_encode_step(s) for s in self.steps],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ProtocolSpec":
        variant = obj.get("variant", "feedback")
        steps = tuple(_decode_step(s) for s in obj["steps"])
        tau = float(obj.get("tau", sum(s.duration for s in steps)))
        return cls(decode_state(obj["initial_state"]), decode_array(obj["hamiltonian"], 2), steps, tau,
                   int(obj.get("rounds", 1)), variant)


def _encode_schedule(segs) -> list | None:
    if segs is None:
        return None
    return [{"hamiltonian": None if h0 is None else encode_array(h0), "duration": t} for h0, t in segs]


def _decode_schedule(obj) -> Schedule | None:
    if obj is None:
        return None
    return tuple((None if s.get("hamiltonian") is None else decode_array(s["hamiltonian"], 2),
                  float(s["duration"])) for s in obj)


def _encode_step(step: FeedbackStep) -> dict:
    entries = []
    for prefix, e in sorted(step.policy.items()):
        item = {"prefix": list(prefix), "povm": encode_povm(e.povm)}
        if e.unitary is not None:
            item["unitary"] = encode_array(e.unitary)
        if e.control is not None:
            item["control"] = _encode_schedule(e.control)
        if e.sensing is not None:
            item["sensing"] = encode_array(e.sensing)
        entries.append(item)
    out = {"duration": step.duration, "policy": entries}
    if step.control:
        out["control"] = _encode_schedule(step.control)
    return out


def _decode_step(obj: dict) -> FeedbackStep:
    policy = {}
    for item in obj["policy"]:
        policy[tuple(item.get("prefix", []))] = PolicyEntry(
            decode_povm(item["povm"]),
            unitary=decode_array(item["unitary"], 2) if item.get("unitary") is not None else None,
            control=_decode_schedule(item.get("control")),
            sensing=decode_array(item["sensing"], 2) if item.get("sensing") is not None else None,
        )
    return FeedbackStep(float(obj["duration"]), policy, _decode_schedule(obj.get("control")) or ())


@dataclass(frozen=True, eq=False)
class MultiRoundSpec:
    """``rounds`` rounds, each chosen from the outcomes of the earlier ones.

    ``policy`` maps the tuple of earlier round outcomes (each itself an
    outcome-history tuple) to the protocol run next; ``fallback`` covers
    histories without an explicit entry.
    """

    rounds: int
    policy: Mapping[tuple, ProtocolSpec] = field(default_factory=dict)
    fallback: ProtocolSpec | None = None
    variant: str = "multi_round"

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        pol = {tuple(tuple(int(x) for x in o) for o in k): v for k, v in dict(self.policy).items()}
        object.__setattr__(self, "policy", MappingProxyType(pol))

    @classmethod
    def repeated(cls, spec: ProtocolSpec, rounds: int) -> "MultiRoundSpec":
        return cls(rounds, {}, spec)

    def to_dict(self) -> dict:
        return {
            "variant": "multi_round",
            "rounds": self.rounds,
            "fallback": None if self.fallback is None else self.fallback.to_dict(),
            "policy": [{"history": [list(o) for o in k], "protocol": v.to_dict()}
                       for k, v in sorted(self.policy.items())],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "MultiRoundSpec":
        fb = obj.get("fallback")
        pol = {tuple(tuple(o) for o in item["history"]): ProtocolSpec.from_dict(item["protocol"])
               for item in obj.get("policy", [])}
        return cls(int(obj["rounds"]), pol, None if fb is None else ProtocolSpec.from_dict(fb))


def spec_from_dict(obj: dict):
    if obj.get("variant") == "multi_round":
        return MultiRoundSpec.from_dict(obj)
    return ProtocolSpec.from_dict(obj)


@dataclass(frozen=True, eq=False)
class OutcomeDistribution:
    """Exact distribution over complete outcome histories.

    ``dp`` is the central finite-difference derivative at zero field and
    ``dp_analytic`` the propagated first-order (commutator) derivative;
    ``dp_steps`` splits the analytic derivative by sensing step.
    """

    labels: tuple
    probabilities: np.ndarray
    p0: np.ndarray
    dp: np.ndarray
    dp_analytic: np.ndarray
    b: float = 0.0
    dp_steps: np.ndarray | None = None
    depth_mass: tuple = ()
    pruned_mass: float = 0.0
    irregular: tuple = ()
    fd_residual: float = 0.0

    def __post_init__(self):
        for name in ("probabilities", "p0", "dp", "dp_analytic"):
            a = np.asarray(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        for name in ("probabilities", "p0"):
            s = getattr(self, name).sum()
            if abs(s - 1.0) > 1e-9:
                raise ArithmeticError(f"{name} sum to {s:.12f}")
        if abs(self.dp.sum()) > 1e-9 * max(1.0, np.abs(self.dp).sum()):
            raise ArithmeticError(f"derivatives sum to {self.dp.sum():.3g}")

    def __len__(self):
        return len(self.labels)

    def linearized(self) -> LinearizedDistribution:
        return LinearizedDistribution(self.p0, self.dp, labels=self.labels)

    @property
    def regular(self) -> bool:
        return not self.irregular and not self.linearized().irregular

    @property
    def fisher(self) -> float:
        keep = self.p0 >= EPS
        return float(np.sum(self.dp[keep] ** 2 / self.p0[keep]))

    @property
    def fisher_analytic(self) -> float:
        keep = self.p0 >= EPS
        return float(np.sum(self.dp_analytic[keep] ** 2 / self.p0[keep]))

    def index(self) -> dict:
        return {lab: i for i, lab in enumerate(self.labels)}
