"""Inverse-iteration eigensolvers for the Laplacian with Robin, mixed
Dirichlet-Neumann, and optimal-insulation boundary conditions on
triangulated 2D domains."""

__version__ = "0.1.0"
