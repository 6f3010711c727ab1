"""
Measurement feedback does not beat the single-shot limit
========================================================

Random protocols interleave partial measurements, conditional unitaries and
control, chosen from the outcomes seen so far. Their Fisher information per
shot stays below (tau * spread)^2; adaptive sequences of rounds add up to at
most rounds times that.
"""
import numpy as np

from qmetro.linalg import spectral_spread
from qmetro.protocols import run_feedback_distribution, run_multiround_distribution
from qmetro.random_instances import random_adaptive_rounds, random_feedback_protocol

rng = np.random.default_rng(7)
fractions = []
for _ in range(100):
    spec = random_feedback_protocol(rng)
    dist = run_feedback_distribution(spec)
    fractions.append(dist.fisher / (spec.tau * spectral_spread(spec.hamiltonian)) ** 2)
print(f"single-round protocols: best fraction of the limit {max(fractions):.3f}")

spec = random_feedback_protocol(rng, d=3, n_steps=3)
dist = run_feedback_distribution(spec)
print(f"one example: {len(dist.labels)} histories, analytic vs finite-difference slope "
      f"max gap {np.max(np.abs(dist.dp - dist.dp_analytic)):.2e}")

fractions = []
for _ in range(40):
    m = random_adaptive_rounds(rng, rounds=2)
    first = m.policy[()]
    cap = m.rounds * (first.tau * spectral_spread(first.hamiltonian)) ** 2
    fractions.append(run_multiround_distribution(m).fisher / cap)
print(f"two adaptive rounds: best fraction of the limit {max(fractions):.3f}")
