"""Numerical laboratory for the kinetic Fokker-Planck equation in a bounded
domain with Maxwell (specular + diffusive) wall reflection."""

__version__ = "0.1.0"

from .errors import (
    CFLViolation,
    ConfigError,
    KfpError,
    NumericalAbort,
    WeightClassError,
)
from .geometry import BoundaryNode, Domain, boundary_quadrature
from .weights import WeightSpec

__all__ = [
    "__version__",
    "BoundaryNode",
    "CFLViolation",
    "ConfigError",
    "Domain",
    "KfpError",
    "NumericalAbort",
    "WeightClassError",
    "WeightSpec",
    "boundary_quadrature",
]
