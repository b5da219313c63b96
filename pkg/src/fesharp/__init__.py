"""Finite element sharpness laboratory.

Element families, broken Sobolev norms and discrete problems on the unit
square, used to measure whether approximation errors are bounded below by
c h^(r-j) on quasi-uniform meshes and whether the weighted per-cell sums stay
bounded below on shape-regular graded meshes.
"""
from .elements import FAMILIES, MultiIndex, reference_element
from .mesh import Mesh, MeshQuality, build_structured, grade_toward_corner, perturb, quality, refine_uniform
from .norms import NormSpec, broken_error, sharpness_ratio, weighted_error
from .space import FEFunction, FESpace, build, check_vanishing, interpolate

__version__ = "0.1.0"

__all__ = [
    "FAMILIES", "MultiIndex", "reference_element", "Mesh", "MeshQuality", "build_structured",
    "grade_toward_corner", "perturb", "quality", "refine_uniform", "NormSpec", "broken_error",
    "sharpness_ratio", "weighted_error", "FEFunction", "FESpace", "build", "check_vanishing", "interpolate",
]
