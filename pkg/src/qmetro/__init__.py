"""Quantum parameter estimation: Fisher information, Cramer-Rao bounds and protocol simulation."""
__version__ = "0.1.0"
