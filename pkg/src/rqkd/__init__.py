"""Randomized quantum Krylov diagonalization with explicitly double-factorized Hamiltonians."""

__version__ = "0.1.0"
