"""Numerical laboratory for Gross-Pitaevskii dynamics, scattering lengths and bosonic hierarchies."""

__version__ = "0.1.0"
