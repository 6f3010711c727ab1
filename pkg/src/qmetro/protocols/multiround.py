"""Joint distributions over several adaptively chosen rounds."""
from __future__ import annotations

import numpy as np

from ..errors import Blowup, PolicyGap
from ..fisher import EPS, IRREGULAR_DP
from .feedback import HISTORY_CAP, run_feedback_distribution
from .spec import MultiRoundSpec, OutcomeDistribution, ProtocolSpec


def run_multiround_distribution(spec: MultiRoundSpec | ProtocolSpec, b: float = 0.0,
                                cap: int = HISTORY_CAP, check: bool = True) -> OutcomeDistribution:
    """Enumerate all N-round outcome tuples.

    The protocol for round ``i`` is looked up from the outcomes of rounds
    ``1..i-1``. Probabilities multiply and derivatives follow the product
    rule, so the joint distribution factorizes round by round by
    construction. A :class:`ProtocolSpec` is run as ``spec.rounds``
    identical independent rounds.
    """
    if isinstance(spec, ProtocolSpec):
        spec = MultiRoundSpec.repeated(spec, spec.rounds)
    cache = {}
    leaves = []
    depth_mass = np.zeros(spec.rounds)
    state = {"pruned": 0.0, "irregular": []}

    def round_dist(history):
        proto = spec.policy.get(history, spec.fallback)
        if proto is None:
            raise PolicyGap(f"no protocol for round {len(history) + 1} after outcomes {history}")
        key = id(proto)
        if key not in cache:
            cache[key] = run_feedback_distribution(proto, b, cap, check)
        return cache[key]

    def visit(history, pb, p0, dfd, dan):
        i = len(history)
        dist = round_dist(history)
        q_b, q0, dq, dqa = dist.probabilities, dist.p0, dist.dp, dist.dp_analytic
        for j, lab in enumerate(dist.labels):
            cb, c0 = pb * q_b[j], p0 * q0[j]
            cfd = dfd * q0[j] + p0 * dq[j]
            can = dan * q0[j] + p0 * dqa[j]
            depth_mass[i] += c0
            h = history + (lab,)
            if max(cb, c0) < EPS:
                state["pruned"] += c0
                if abs(cfd) > IRREGULAR_DP:
                    state["irregular"].append(h)
                continue
            if i + 1 == spec.rounds:
                if len(leaves) >= cap:
                    raise Blowup(f"more than {cap} multi-round outcome histories")
                leaves.append((h, cb, c0, cfd, can))
            else:
                visit(h, cb, c0, cfd, can)

    visit((), 1.0, 1.0, 0.0, 0.0)
    if not leaves:
        raise Blowup("every outcome history was pruned")
    cols = list(zip(*leaves))
    inner_irregular = tuple(lab for d in cache.values() for lab in d.irregular)
    return OutcomeDistribution(
        labels=tuple(cols[0]),
        probabilities=np.array(cols[1]),
        p0=np.array(cols[2]),
        dp=np.array(cols[3]),
        dp_analytic=np.array(cols[4]),
        b=float(b),
        depth_mass=tuple(depth_mass),
        pruned_mass=state["pruned"],
        irregular=tuple(state["irregular"]) + inner_irregular,
    )
