"""Quantum flows, Riccati equations and quadratic-cost control synthesis."""

__version__ = "0.1.0"
