"""Constraint-preserving hybrid finite elements for 2-D Maxwell's equations.

Broken-space semidiscretization with a Lagrange-multiplier magnetic trace,
leapfrog time stepping, frequency-domain eigenmodes and hybrid
post-processing of a charge-conserving electric flux.
"""
from .assembly import SystemMatrices, assemble
from .mesh import Mesh, generate_uniform_grid

__version__ = "0.1.0"

__all__ = ["Mesh", "SystemMatrices", "assemble", "generate_uniform_grid"]
