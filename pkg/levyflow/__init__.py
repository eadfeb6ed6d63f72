"""Simulation and pathwise analysis of Lévy-driven SDEs with Hölder drift."""

__version__ = "0.1.0"
