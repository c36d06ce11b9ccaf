"""Approximation algorithms for stochastic load balancing on unrelated machines."""

__version__ = "0.1.0"
