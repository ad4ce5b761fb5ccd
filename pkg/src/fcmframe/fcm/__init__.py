"""Finite Cell Method kernel for 3D linear elasticity."""

from .basis import gauss_legendre, integrated_legendre, nodal_mask, shape_functions, tensor_basis
from .grid import CUT, INSIDE, OUTSIDE, CellGrid, build_grid
from .quadrature import OctreePartition, QuadratureScheme, partition_cells
from .assembly import (
    assemble_unconstrained,
    box_moments,
    cell_stiffness,
    elasticity_from_moments,
    full_cell_stiffness,
)
from .boundary import (
    SurfaceQuadrature,
    clip_polygon_to_box,
    neumann_load,
    penalty_dirichlet,
    penalty_matrix,
    penalty_vector,
    surface_quadrature,
    triangle_rule,
)
from .solver import (
    Factorization,
    FactorizationError,
    NotPositiveDefiniteError,
    factorize,
    pardiso_available,
    solve,
)
from .field import ElasticField, FieldEvaluation, evaluate, von_mises
from .system import FcmSystem, PenaltyReducedWarning, build_system

__all__ = [
    "gauss_legendre", "integrated_legendre", "nodal_mask", "shape_functions", "tensor_basis",
    "CUT", "INSIDE", "OUTSIDE", "CellGrid", "build_grid",
    "OctreePartition", "QuadratureScheme", "partition_cells",
    "assemble_unconstrained", "box_moments", "cell_stiffness", "elasticity_from_moments",
    "full_cell_stiffness",
    "SurfaceQuadrature", "clip_polygon_to_box", "neumann_load", "penalty_dirichlet",
    "penalty_matrix", "penalty_vector", "surface_quadrature", "triangle_rule",
    "Factorization", "FactorizationError", "NotPositiveDefiniteError", "factorize", "pardiso_available", "solve",
    "ElasticField", "FieldEvaluation", "evaluate", "von_mises",
    "FcmSystem", "PenaltyReducedWarning", "build_system",
]
