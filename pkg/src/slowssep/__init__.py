"""Simulation and large-deviations numerics for the one-dimensional
symmetric exclusion process in weak contact with boundary reservoirs."""

__version__ = "0.1.0"
