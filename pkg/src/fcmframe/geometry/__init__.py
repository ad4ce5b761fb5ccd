from .stl import (
    GeometryError,
    NonWatertightWarning,
    StlParseError,
    TriangleSurface,
    load_triangle_surface,
    write_stl_binary,
    write_stl_text,
)
from .implicit import (
    Box,
    Cylinder,
    Difference,
    HalfSpace,
    HollowCylinder,
    ImplicitShape,
    Intersection,
    Sphere,
    Union,
    shape_from_dict,
)
from .domain import (
    DOF_ORDER,
    Domain,
    InterfaceSection,
    Membership,
    classify_point,
    classify_points,
    disk_triangles,
    indicator,
    indicator_values,
    section_frame,
)
