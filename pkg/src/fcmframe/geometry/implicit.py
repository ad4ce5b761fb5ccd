"""Constructive implicit shapes used for analytic verification geometries.

Every shape answers ``contains(points, tol)`` for an (N, 3) array. ``tol`` inflates
(positive) or deflates (negative) the shape, which lets differences keep the
boundary of the subtracted body on the inside.
"""

from __future__ import annotations

import numpy as np

from .stl import GeometryError

__all__ = [
    "ImplicitShape",
    "Sphere",
    "Cylinder",
    "HollowCylinder",
    "Box",
    "HalfSpace",
    "Union",
    "Intersection",
    "Difference",
    "shape_from_dict",
]

BOUNDARY_TOL = 1e-9  # mm


def _vec(v):
    a = np.asarray(v, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(a)):
        raise GeometryError(f"non-finite vector {v!r}")
    return a


def _pts(points):
    return np.atleast_2d(np.asarray(points, dtype=np.float64))


class ImplicitShape:
    """Base class; combine shapes with ``|`` (union), ``&`` and ``-``."""

    def contains(self, points, tol=BOUNDARY_TOL):
        raise NotImplementedError

    def bounds(self):
        raise NotImplementedError

    def describe(self):
        raise NotImplementedError

    def __or__(self, other):
        return Union(self, other)

    def __and__(self, other):
        return Intersection(self, other)

    def __sub__(self, other):
        return Difference(self, other)

    def __repr__(self):
        return f"{type(self).__name__}({self.describe()})"


class Sphere(ImplicitShape):
    def __init__(self, center, radius):
        self.center = _vec(center)
        self.radius = float(radius)
        if self.radius <= 0:
            raise GeometryError("sphere radius must be positive")

    def contains(self, points, tol=BOUNDARY_TOL):
        d = np.linalg.norm(_pts(points) - self.center, axis=1)
        return d <= self.radius + tol

    def bounds(self):
        return self.center - self.radius, self.center + self.radius

    def describe(self):
        return {"sphere": {"center_mm": self.center.tolist(), "radius_mm": self.radius}}


class Cylinder(ImplicitShape):
    """Solid finite cylinder between two end-cap centres."""

    def __init__(self, start, end, radius):
        self.start = _vec(start)
        self.end = _vec(end)
        self.radius = float(radius)
        axis = self.end - self.start
        self.length = float(np.linalg.norm(axis))
        if self.length <= 0 or self.radius <= 0:
            raise GeometryError("cylinder needs positive length and radius")
        self.axis = axis / self.length

    def _axial_radial(self, points):
        rel = _pts(points) - self.start
        t = rel @ self.axis
        radial = np.linalg.norm(rel - np.outer(t, self.axis), axis=1)
        return t, radial

    def contains(self, points, tol=BOUNDARY_TOL):
        t, r = self._axial_radial(points)
        return (t >= -tol) & (t <= self.length + tol) & (r <= self.radius + tol)

    def bounds(self):
        # exact box of a cylinder: cap discs contribute r * sqrt(1 - a_i^2) per axis
        ext = self.radius * np.sqrt(np.clip(1.0 - self.axis ** 2, 0.0, None))
        lo = np.minimum(self.start, self.end) - ext
        hi = np.maximum(self.start, self.end) + ext
        return lo, hi

    def describe(self):
        return {"cylinder": {"start_mm": self.start.tolist(), "end_mm": self.end.tolist(),
                             "radius_mm": self.radius}}


class HollowCylinder(Cylinder):
    """Tube with inner radius ``r_in`` and outer radius ``r_out``."""

    def __init__(self, start, end, r_in, r_out):
        if not 0 < float(r_in) < float(r_out):
            raise GeometryError("hollow cylinder needs 0 < r_in < r_out")
        super().__init__(start, end, r_out)
        self.r_in = float(r_in)

    def contains(self, points, tol=BOUNDARY_TOL):
        t, r = self._axial_radial(points)
        return ((t >= -tol) & (t <= self.length + tol)
                & (r <= self.radius + tol) & (r >= self.r_in - tol))

    def describe(self):
        return {"hollow_cylinder": {"start_mm": self.start.tolist(), "end_mm": self.end.tolist(),
                                    "r_in_mm": self.r_in, "r_out_mm": self.radius}}


class Box(ImplicitShape):
    def __init__(self, lo, hi):
        self.lo = _vec(lo)
        self.hi = _vec(hi)
        if np.any(self.hi <= self.lo):
            raise GeometryError("box needs hi > lo on every axis")

    def contains(self, points, tol=BOUNDARY_TOL):
        p = _pts(points)
        return np.all((p >= self.lo - tol) & (p <= self.hi + tol), axis=1)

    def bounds(self):
        return self.lo.copy(), self.hi.copy()

    def describe(self):
        return {"box": {"min_mm": self.lo.tolist(), "max_mm": self.hi.tolist()}}


class HalfSpace(ImplicitShape):
    """Points with ``(x - point) . normal <= 0``. Unbounded."""

    def __init__(self, point, normal):
        self.point = _vec(point)
        n = _vec(normal)
        norm = np.linalg.norm(n)
        if norm == 0:
            raise GeometryError("half-space normal must be nonzero")
        self.normal = n / norm

    def contains(self, points, tol=BOUNDARY_TOL):
        return (_pts(points) - self.point) @ self.normal <= tol

    def bounds(self):
        return np.full(3, -np.inf), np.full(3, np.inf)

    def describe(self):
        return {"half_space": {"point_mm": self.point.tolist(), "normal": self.normal.tolist()}}


class Union(ImplicitShape):
    def __init__(self, *parts):
        if not parts:
            raise GeometryError("union of nothing")
        self.parts = parts

    def contains(self, points, tol=BOUNDARY_TOL):
        out = self.parts[0].contains(points, tol)
        for s in self.parts[1:]:
            out |= s.contains(points, tol)
        return out

    def bounds(self):
        boxes = [s.bounds() for s in self.parts]
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)

    def describe(self):
        return {"union": [s.describe() for s in self.parts]}


class Intersection(ImplicitShape):
    def __init__(self, *parts):
        if not parts:
            raise GeometryError("intersection of nothing")
        self.parts = parts

    def contains(self, points, tol=BOUNDARY_TOL):
        out = self.parts[0].contains(points, tol)
        for s in self.parts[1:]:
            out &= s.contains(points, tol)
        return out

    def bounds(self):
        boxes = [s.bounds() for s in self.parts]
        return np.max([b[0] for b in boxes], axis=0), np.min([b[1] for b in boxes], axis=0)

    def describe(self):
        return {"intersection": [s.describe() for s in self.parts]}


class Difference(ImplicitShape):
    """``base`` minus the interior of ``cut``; the cut boundary stays inside."""

    def __init__(self, base, cut):
        self.base = base
        self.cut = cut

    def contains(self, points, tol=BOUNDARY_TOL):
        return self.base.contains(points, tol) & ~self.cut.contains(points, -tol)

    def bounds(self):
        return self.base.bounds()

    def describe(self):
        return {"difference": [self.base.describe(), self.cut.describe()]}


def shape_from_dict(d):
    """Inverse of ``describe()`` for implicit shapes."""
    if len(d) != 1:
        raise GeometryError(f"shape description needs exactly one key, got {sorted(d)}")
    (kind, arg), = d.items()
    if kind == "sphere":
        return Sphere(arg["center_mm"], arg["radius_mm"])
    if kind == "cylinder":
        return Cylinder(arg["start_mm"], arg["end_mm"], arg["radius_mm"])
    if kind == "hollow_cylinder":
        return HollowCylinder(arg["start_mm"], arg["end_mm"], arg["r_in_mm"], arg["r_out_mm"])
    if kind == "box":
        return Box(arg["min_mm"], arg["max_mm"])
    if kind == "half_space":
        return HalfSpace(arg["point_mm"], arg["normal"])
    if kind == "union":
        return Union(*[shape_from_dict(s) for s in arg])
    if kind == "intersection":
        return Intersection(*[shape_from_dict(s) for s in arg])
    if kind == "difference":
        if len(arg) != 2:
            raise GeometryError("difference takes exactly two shapes")
        return Difference(shape_from_dict(arg[0]), shape_from_dict(arg[1]))
    raise GeometryError(f"unknown shape kind {kind!r}")
