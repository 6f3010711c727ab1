"""
Brute-force search of two-level probes and readouts
===================================================

Scan observable angle alpha and state angle theta on a grid and compare
the best point with the closed-form optimum.
"""
import math

import numpy as np

from qmetro.fisher import two_level_optimum_scan

half_z = np.diag([0.5, -0.5])
scan = two_level_optimum_scan(half_z, grid=721, tau=1.0, n=1)
print(f"best alpha = {scan.alpha:.5f}, best theta = {scan.theta:.5f}  (pi/2 = {math.pi / 2:.5f})")
print(f"best delta_b = {scan.delta_b:.8f}")

# the landscape: equatorial states with a transverse readout are best,
# eigenstates and readouts along the field axis are blind
grid = scan.grid
for label, (i, j) in {"alpha=0": (0, 360), "theta=0": (360, 0), "optimum": (360, 360)}.items():
    print(f"{label:>8}: delta_b = {grid[i, j]:.4g}")
