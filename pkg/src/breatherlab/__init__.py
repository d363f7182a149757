"""Breather solutions of the Klein-Gordon / quantum Hamilton-Jacobi equations.

Natural units (m = c = hbar = 1) are the default everywhere; formulas keep
the constants explicit through :class:`PhysicalParams`.
"""

__version__ = "0.1.0"

from .core import (ComplexField, GridError, PhysicalParams, Potentials, SamplingError, SpacetimeGrid,
                   build_grid, natural_units, sample)
from .special import ModeIndex, associated_legendre, spherical_bessel_j
from .breathers import BreatherSpec, SpacetimeEvent, action, psi

__all__ = [
    "ComplexField", "GridError", "PhysicalParams", "Potentials", "SamplingError", "SpacetimeGrid",
    "build_grid", "natural_units", "sample", "ModeIndex", "associated_legendre", "spherical_bessel_j",
    "BreatherSpec", "SpacetimeEvent", "action", "psi", "__version__",
]
