"""Simulation and analysis of pulsed heralded single-photon sources."""

__version__ = "0.1.0"
