"""Schottky sets of circle homeomorphisms, pivotal-time random walks and experiments."""
__version__ = "0.1.0"
