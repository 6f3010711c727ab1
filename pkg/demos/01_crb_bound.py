"""
Quantum Cramer-Rao limit for a field coupled through H
=======================================================

The best achievable error on b after N shots of duration tau depends on H
only through its eigenvalue spread.
"""
import numpy as np

from qmetro.fisher import classical_fisher, linearize_povm, optimal_configuration, quantum_crb
from qmetro.states import Povm

# a spin-1/2 along z: spread 1, so tau = 1 and N = 100 give 0.1
half_z = np.diag([0.5, -0.5])
print("bound, spin-1/2:", quantum_crb(half_z, 1.0, 100))

# doubling tau halves the limit, quadrupling N halves it too
print("tau = 2:", quantum_crb(half_z, 2.0, 100), " N = 400:", quantum_crb(half_z, 1.0, 400))

# the optimal probe and readout reach the limit exactly
state, obs = optimal_configuration(half_z)
dist = linearize_povm(state, half_z, Povm.from_observable(obs), 1.0)
print("classical Fisher of the optimal readout:", dist.fisher)
print("its error for N = 100:", classical_fisher(dist, 100).delta_b_min)

# a poor readout (measuring along z) learns nothing at b = 0
dist_z = linearize_povm(state, half_z, Povm.projective(np.eye(2)), 1.0)
print("Fisher when reading out along z:", dist_z.fisher)
