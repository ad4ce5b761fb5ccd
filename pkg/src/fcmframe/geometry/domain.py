"""Physical domain, indicator function and beam-to-node interface sections."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..material import Material
from .implicit import ImplicitShape
from .stl import GeometryError, TriangleSurface

__all__ = [
    "Membership",
    "Domain",
    "InterfaceSection",
    "DOF_ORDER",
    "classify_point",
    "classify_points",
    "indicator",
    "indicator_values",
    "section_frame",
    "disk_triangles",
]

DOF_ORDER = ("ux", "uy", "uz", "rx", "ry", "rz")


class Membership(enum.Enum):
    INSIDE = "inside"
    OUTSIDE = "outside"


@dataclass(frozen=True, eq=False)
class Domain:
    """Node geometry plus the indicator exponent and material.

    ``alpha_exponent`` is the k in alpha = 10**-k for points outside the body.
    ``box`` optionally overrides the geometry bounding box (required for
    unbounded implicit shapes).
    """

    geometry: object
    material: Material
    alpha_exponent: int = 10
    box: tuple | None = None

    def __post_init__(self):
        if not isinstance(self.geometry, (TriangleSurface, ImplicitShape)):
            raise GeometryError("geometry must be a TriangleSurface or ImplicitShape")
        k = int(self.alpha_exponent)
        if k <= 0:
            raise GeometryError("alpha exponent must be a positive integer")
        if not 5 <= k <= 10:
            warnings.warn(f"alpha exponent {k} outside the usual range [5, 10]", stacklevel=2)
        object.__setattr__(self, "alpha_exponent", k)

    @property
    def alpha(self):
        return 10.0 ** (-self.alpha_exponent)

    def bounds(self):
        if self.box is not None:
            lo, hi = self.box
            return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        lo, hi = self.geometry.bounds()
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise GeometryError("unbounded geometry: supply an explicit box")
        return lo, hi

    def contains(self, points):
        return self.geometry.contains(np.atleast_2d(points))

    def describe(self):
        return {
            "geometry": self.geometry.describe(),
            "alpha_exponent": self.alpha_exponent,
            "material": {"E_MPa": self.material.E, "nu": self.material.nu},
            "box_mm": None if self.box is None else [list(map(float, self.box[0])),
                                                     list(map(float, self.box[1]))],
        }


def classify_points(domain, points):
    """Vectorized membership; boundary points are inside."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if not np.all(np.isfinite(pts)):
        raise GeometryError("non-finite query point")
    return domain.contains(pts)


def classify_point(domain, p):
    inside = classify_points(domain, np.asarray(p, dtype=float)[None, :])[0]
    return Membership.INSIDE if inside else Membership.OUTSIDE


def indicator_values(domain, points):
    return np.where(classify_points(domain, points), 1.0, domain.alpha)


def indicator(domain, p):
    return float(indicator_values(domain, np.asarray(p, dtype=float)[None, :])[0])


@dataclass(frozen=True, eq=False)
class InterfaceSection:
    """A planar beam-to-node interface.

    The default shape is a disk (optionally an annulus through ``inner_radius``)
    centred at ``centroid`` with unit ``normal``. Passing ``triangles`` replaces
    the disk with an explicit patch on the node boundary.
    """

    centroid: np.ndarray
    normal: np.ndarray
    node_id: str
    radius: float | None = None
    inner_radius: float = 0.0
    triangles: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        c = np.asarray(self.centroid, dtype=float).reshape(3)
        n = np.asarray(self.normal, dtype=float).reshape(3)
        norm = np.linalg.norm(n)
        if not np.isfinite(norm) or norm < 1e-12:
            raise GeometryError("degenerate interface normal")
        n = n / norm
        object.__setattr__(self, "centroid", c)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "node_id", str(self.node_id))
        if self.triangles is None:
            if self.radius is None or self.radius <= 0:
                raise GeometryError("disk interface needs a positive radius")
            if not 0 <= self.inner_radius < self.radius:
                raise GeometryError("inner radius must lie in [0, radius)")
        else:
            tri = np.asarray(self.triangles, dtype=float)
            if tri.ndim != 3 or tri.shape[1:] != (3, 3) or len(tri) == 0:
                raise GeometryError("interface patch needs (T, 3, 3) triangles")
            object.__setattr__(self, "triangles", tri)

    dof_order = DOF_ORDER

    def patch(self, n_radial=4, n_theta=48):
        """Triangulated surface of the interface, shape (T, 3, 3)."""
        if self.triangles is not None:
            return self.triangles
        return disk_triangles(self.centroid, self.normal, self.radius,
                              self.inner_radius, n_radial, n_theta)

    def describe(self):
        d = {"node": self.node_id, "centroid_mm": self.centroid.tolist(),
             "normal": self.normal.tolist()}
        if self.triangles is None:
            d["radius_mm"] = float(self.radius)
            d["inner_radius_mm"] = float(self.inner_radius)
        else:
            d["triangles_mm"] = self.triangles.tolist()
        return d


def section_frame(section):
    """Origin and right-handed triad (normal, t1, t2) as rows of a 3x3 array.

    ``t1`` is the normalised projection of the global axis least aligned with
    the normal (first such axis on ties).
    """
    n = np.asarray(section.normal if hasattr(section, "normal") else section, dtype=float)
    norm = np.linalg.norm(n)
    if not np.isfinite(norm) or norm < 1e-12:
        raise GeometryError("degenerate normal")
    n = n / norm
    axis = int(np.argmin(np.abs(n)))
    e = np.zeros(3)
    e[axis] = 1.0
    t1 = e - (e @ n) * n
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    origin = np.asarray(getattr(section, "centroid", np.zeros(3)), dtype=float)
    return origin, np.array([n, t1, t2])


def disk_triangles(center, normal, radius, inner_radius=0.0, n_radial=4, n_theta=48):
    """Polar triangulation of a disk or annulus in the plane through ``center``.

    The outer polygon is inscribed in the outer circle and the inner polygon
    circumscribes the bore, so the patch lies entirely in the material.
    """
    center = np.asarray(center, dtype=float)
    _, (n, t1, t2) = section_frame(np.asarray(normal, dtype=float))
    theta = np.linspace(0.0, 2 * np.pi, n_theta + 1)[:-1]
    dirs = np.cos(theta)[:, None] * t1 + np.sin(theta)[:, None] * t2
    r_in = inner_radius / np.cos(np.pi / n_theta)
    if inner_radius > 0 and r_in >= radius:
        raise ValueError("annulus too thin for the angular resolution")
    radii = np.linspace(r_in, radius, n_radial + 1)
    tris = []
    j = np.arange(n_theta)
    jn = (j + 1) % n_theta
    for r0, r1 in zip(radii[:-1], radii[1:]):
        outer = center + r1 * dirs
        if r0 == 0.0:
            c = np.broadcast_to(center, (n_theta, 3))
            tris.append(np.stack([c, outer[j], outer[jn]], axis=1))
            continue
        inner = center + r0 * dirs
        tris.append(np.stack([inner[j], outer[j], outer[jn]], axis=1))
        tris.append(np.stack([inner[j], outer[jn], inner[jn]], axis=1))
    return np.concatenate(tris)
