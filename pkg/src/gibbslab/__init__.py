"""Spectral Monte Carlo laboratory for truncated Hartree Gibbs measures on T^3."""

__version__ = "0.1.0"
