"""Bit-string Monte Carlo engine for charge-conserving quantum automaton circuits.

The package simulates hybrid automaton circuits (permutation gates, CZ phase
gates, and charge-preserving composite measurements) purely on classical bit
strings, estimates second Renyi entropies and related observables, and
validates everything against an exact sign-state oracle at small sizes.
"""

__version__ = "0.1.0"
