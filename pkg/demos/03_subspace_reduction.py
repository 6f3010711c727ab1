"""
Pure-state problems live in a two-dimensional subspace
======================================================

For a pure probe, span{psi, H psi} carries all the information. The reduced
problem gives the same Fisher information and a spread no larger than H's.
"""
import numpy as np

from qmetro.fisher import linearize_povm
from qmetro.linalg import spectral_spread
from qmetro.protocols import reduce_to_subspace
from qmetro.random_instances import random_hermitian, random_povm, random_state

rng = np.random.default_rng(3)
for d in (3, 4, 6):
    state, h, povm = random_state(d, rng), random_hermitian(d, rng), random_povm(d, 3, rng)
    red = reduce_to_subspace(state, h, povm)
    full = linearize_povm(state, h, povm, 1.0).fisher
    small = linearize_povm(red.state, red.hamiltonian, red.povm, 1.0).fisher
    print(f"d={d}: Fisher {full:.10f} -> {small:.10f}, "
          f"spread {spectral_spread(h):.4f} -> {spectral_spread(red.hamiltonian):.4f}")
