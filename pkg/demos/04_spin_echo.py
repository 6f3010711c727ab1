"""
Control cannot widen the effective spread
=========================================

Going to the frame of a control schedule replaces H by its time average.
A pi pulse in the middle of the window (a spin echo) cancels a static
z field almost completely; random controls never beat the original spread.
"""
import math

import numpy as np

from qmetro.linalg import spectral_spread
from qmetro.protocols import interaction_average
from qmetro.random_instances import random_control, random_hermitian
from qmetro.states import average_hamiltonian

sx = np.array([[0, 1], [1, 0]], dtype=complex)
half_z = np.diag([0.5, -0.5])

for pulse in (0.2, 0.05, 0.01):
    half = (1.0 - pulse) / 2
    echo = [(None, half), (math.pi / (2 * pulse) * sx, pulse), (None, half)]
    exact = interaction_average(half_z, echo, 1.0)
    sampled = average_hamiltonian(half_z, echo, 1.0, steps_per_segment=256)
    print(f"pulse {pulse:5.2f}: effective spread {spectral_spread(exact):.4f} "
          f"(midpoint sum {spectral_spread(sampled):.4f})")

rng = np.random.default_rng(5)
excess = []
for _ in range(200):
    h = random_hermitian(3, rng)
    excess.append(spectral_spread(interaction_average(h, random_control(3, 1.0, rng), 1.0)) - spectral_spread(h))
print("largest spread change under random control:", max(excess))
