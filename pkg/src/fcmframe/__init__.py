"""Two-scale analysis of space frames with resolved 3D nodes.

Nodes are modelled with the Finite Cell Method on Cartesian grids, condensed
into superelements, assembled with Timoshenko beams, and the global solution
is mapped back onto the node models for stress recovery.
"""

__version__ = "0.1.0"

from .material import Material
from .beam import (
    CrossSection,
    FrameModel,
    GlobalSolution,
    assemble_and_solve,
    element_rotation,
    euler_buckling_check,
    internal_actions,
    local_stiffness_timoshenko,
    section_circular,
    section_hollow_circular,
)
from .condense import (
    CondensedStiffness,
    FcmParameters,
    SubstructureSpec,
    compute_change_of_basis,
    condense,
    unit_deformation_bc,
    validate_condensed,
)
from .twoscale import (
    LocalBoundaryData,
    Substructure,
    TwoScaleJob,
    assemble_superelements,
    extract_boundary_data,
    local_stress_analysis,
    pointwise_error,
    run_job,
)

__all__ = [
    "__version__", "Material", "CrossSection", "FrameModel", "GlobalSolution",
    "assemble_and_solve", "element_rotation", "euler_buckling_check", "internal_actions",
    "local_stiffness_timoshenko", "section_circular", "section_hollow_circular",
    "CondensedStiffness", "FcmParameters", "SubstructureSpec", "compute_change_of_basis",
    "condense", "unit_deformation_bc", "validate_condensed",
    "LocalBoundaryData", "Substructure", "TwoScaleJob", "assemble_superelements",
    "extract_boundary_data", "local_stress_analysis", "pointwise_error", "run_job",
]
