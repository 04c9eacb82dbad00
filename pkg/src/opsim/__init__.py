"""Discrete-event simulator for opportunistic networks."""

__version__ = "0.1.0"
