"""
Dark spins as an amplifier
==========================

A sensor spin is entangled with K dark spins through a CNOT layer. The
field then acts on 1 + K spins at once, and the readout reaches the limit
for a Hamiltonian with spread 1 + K: error 1 / ((1 + K) tau sqrt(N)).
"""
import math

from qmetro.montecarlo import run_experiment
from qmetro.protocols import ancilla, run_feedback_distribution

tau, shots = 1.0, 10_000
print(" K   analytic     target       Monte Carlo sd")
for k in range(7):
    spec = ancilla.build_ancilla_protocol(k, tau, rounds=shots)
    dist = run_feedback_distribution(spec)
    analytic = 1 / math.sqrt(shots * dist.fisher)
    run = run_experiment(spec, 0.0, shots, seed=100 + k, repeats=200)
    print(f"{k:2d}   {analytic:.6e} {1 / ((1 + k) * tau * math.sqrt(shots)):.6e} {run.empirical_sd:.6e}")

# the conjugated sensor Hamiltonian has spread 1 + K and does not leak
for k in (1, 3):
    print(f"K={k}: spreads {ancilla.effective_hamiltonian_check(k)}, leakage {ancilla.sector_leakage(k)}")
