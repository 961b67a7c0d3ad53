"""Numerical library for singular and layered radial steady states of the
stationary Keller-Segel equation -Delta u + u = lambda e^u on the unit disk
with Neumann boundary conditions."""

__version__ = "0.1.0"
