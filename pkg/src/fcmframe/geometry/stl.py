"""Triangle surfaces: STL ingestion and point membership by ray casting."""

from __future__ import annotations

import re
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GeometryError",
    "StlParseError",
    "NonWatertightWarning",
    "TriangleSurface",
    "load_triangle_surface",
    "write_stl_binary",
    "write_stl_text",
]

MIN_TRIANGLE_AREA = 1e-12  # mm^2


class GeometryError(ValueError):
    """Raised for invalid or empty geometry."""


class StlParseError(GeometryError):
    """Malformed STL content. ``offset`` is the byte offset of the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class NonWatertightWarning(UserWarning):
    """Membership of a point was decided on an open surface."""


@dataclass(frozen=True, eq=False)
class TriangleSurface:
    """Immutable triangle soup with derived normals and bounding box.

    Parameters
    ----------
    triangles : ndarray, shape (T, 3, 3)
        Vertex coordinates in mm.
    """

    triangles: np.ndarray
    normals: np.ndarray = field(init=False, repr=False)
    bbox: tuple = field(init=False)
    watertight: bool = field(init=False)

    def __post_init__(self):
        tri = np.array(self.triangles, dtype=np.float64)
        if tri.ndim != 3 or tri.shape[1:] != (3, 3):
            raise GeometryError("triangles must have shape (T, 3, 3)")
        if len(tri) == 0:
            raise GeometryError("empty geometry: zero triangles")
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        twice_area = np.linalg.norm(cross, axis=1)
        if np.any(0.5 * twice_area <= MIN_TRIANGLE_AREA):
            bad = int(np.argmax(0.5 * twice_area <= MIN_TRIANGLE_AREA))
            raise GeometryError(f"triangle {bad} has zero area")
        tri.setflags(write=False)
        normals = cross / twice_area[:, None]
        normals.setflags(write=False)
        object.__setattr__(self, "triangles", tri)
        object.__setattr__(self, "normals", normals)
        flat = tri.reshape(-1, 3)
        object.__setattr__(self, "bbox", (flat.min(axis=0), flat.max(axis=0)))
        object.__setattr__(self, "watertight", _is_watertight(tri))
        object.__setattr__(self, "_accel", None)

    def __len__(self):
        return len(self.triangles)

    @property
    def areas(self):
        tri = self.triangles
        return 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    def bounds(self):
        lo, hi = self.bbox
        return lo.copy(), hi.copy()

    def describe(self):
        import hashlib

        digest = hashlib.sha256(self.triangles.tobytes()).hexdigest()
        return {"stl_sha256": digest, "triangles": len(self)}

    def contains(self, points, tol=0.0):
        """Boolean membership for an (N, 3) array of points.

        Points within ``1e-9`` mm of a triangle count as inside.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if not self.watertight:
            warnings.warn(
                "surface is not watertight; membership uses ray-cast parity "
                "and may be unreliable", NonWatertightWarning, stacklevel=2)
        return _ray_parity(self, pts)

    def _grid(self):
        # yz bucket grid for the +x rays, built lazily once
        if self._accel is None:
            object.__setattr__(self, "_accel", _BucketGrid(self.triangles))
        return self._accel


def _is_watertight(tri):
    verts, inverse = np.unique(tri.reshape(-1, 3), axis=0, return_inverse=True)
    ids = inverse.reshape(-1, 3)
    edges = np.concatenate([ids[:, [0, 1]], ids[:, [1, 2]], ids[:, [2, 0]]])
    edges.sort(axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    return bool(np.all(counts == 2))


# --------------------------------------------------------------------------
# STL reading / writing

_FLOAT = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_VERTEX_RE = re.compile(rb"vertex\s+(" + _FLOAT.encode() + rb")\s+(" + _FLOAT.encode()
                        + rb")\s+(" + _FLOAT.encode() + rb")")


def load_triangle_surface(content: bytes) -> TriangleSurface:
    """Parse binary or text STL content (format sniffed from the bytes)."""
    if isinstance(content, str):
        content = content.encode()
    if len(content) >= 84:
        (count,) = struct.unpack_from("<I", content, 80)
        if len(content) == 84 + 50 * count:
            return _parse_binary(content, count)
    if content.lstrip()[:5].lower() == b"solid":
        return _parse_text(content)
    if len(content) < 84:
        raise StlParseError("truncated binary STL header", len(content))
    (count,) = struct.unpack_from("<I", content, 80)
    expected = 84 + 50 * count
    raise StlParseError(
        f"binary STL declares {count} triangles ({expected} bytes) but payload has "
        f"{len(content)} bytes", min(len(content), expected))


def _parse_binary(content, count):
    if count == 0:
        raise GeometryError("empty geometry: zero triangles")
    dtype = np.dtype([("normal", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    records = np.frombuffer(content, dtype=dtype, count=count, offset=84)
    return TriangleSurface(records["v"].astype(np.float64))


def _parse_text(content):
    start = content.find(b"solid")
    body = content[start:]
    verts = []
    pos = 0
    for facet in re.finditer(rb"facet(.*?)endfacet", body, flags=re.S):
        block = facet.group(1)
        found = _VERTEX_RE.findall(block)
        if len(found) != 3:
            raise StlParseError(f"facet with {len(found)} vertices", start + facet.start())
        verts.append([[float(c) for c in v] for v in found])
        pos = facet.end()
    tail = body[pos:]
    if b"facet" in tail:
        raise StlParseError("unterminated facet", start + pos + tail.find(b"facet"))
    if not verts:
        if b"endsolid" not in body:
            raise StlParseError("text STL without endsolid", len(content))
        raise GeometryError("empty geometry: zero triangles")
    return TriangleSurface(np.array(verts, dtype=np.float64))


def write_stl_binary(triangles, header=b"fcmframe") -> bytes:
    tri = np.asarray(triangles, dtype=np.float64)
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    dtype = np.dtype([("normal", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    rec = np.zeros(len(tri), dtype=dtype)
    rec["normal"] = n
    rec["v"] = tri
    return header.ljust(80, b" ")[:80] + struct.pack("<I", len(tri)) + rec.tobytes()


def write_stl_text(triangles, name="fcmframe") -> bytes:
    tri = np.asarray(triangles, dtype=np.float64)
    lines = [f"solid {name}"]
    for t in tri:
        n = np.cross(t[1] - t[0], t[2] - t[0])
        n = n / np.linalg.norm(n)
        lines.append("  facet normal " + " ".join(repr(float(c)) for c in n))
        lines.append("    outer loop")
        for v in t:
            lines.append("      vertex " + " ".join(repr(float(c)) for c in v))
        lines.append("    endloop")
        lines.append("  endfacet")
    lines.append(f"endsolid {name}")
    return ("\n".join(lines) + "\n").encode()


# --------------------------------------------------------------------------
# ray casting

_ON_SURFACE = 1e-9     # mm
_EDGE_EPS = 1e-10      # relative barycentric tolerance for degenerate hits


class _BucketGrid:
    """Triangles bucketed by their yz-projection for rays along +x."""

    def __init__(self, tri):
        self.tri = tri
        lo = tri.reshape(-1, 3).min(axis=0)
        hi = tri.reshape(-1, 3).max(axis=0)
        self.lo = lo
        span = np.maximum(hi - lo, 1e-9)
        g = int(np.clip(np.sqrt(len(tri) / 4.0), 1, 256))
        self.g = g
        self.h = span[1:] / g
        tlo = ((tri[:, :, 1:].min(axis=1) - lo[1:]) / self.h).astype(int)
        thi = ((tri[:, :, 1:].max(axis=1) - lo[1:]) / self.h).astype(int)
        tlo = np.clip(tlo, 0, g - 1)
        thi = np.clip(thi, 0, g - 1)
        buckets = [[] for _ in range(g * g)]
        for t in range(len(tri)):
            for i in range(tlo[t, 0], thi[t, 0] + 1):
                for j in range(tlo[t, 1], thi[t, 1] + 1):
                    buckets[i * g + j].append(t)
        self.buckets = [np.array(b, dtype=np.int64) for b in buckets]

    def bucket_of(self, pts):
        rel = pts[:, 1:] - self.lo[1:]
        ij = np.floor(rel / self.h).astype(int)
        # points on the upper bounding faces belong to the last bucket
        outside = np.any((rel < -_ON_SURFACE) | (rel > self.h * self.g + _ON_SURFACE), axis=1)
        ij = np.clip(ij, 0, self.g - 1)
        return ij[:, 0] * self.g + ij[:, 1], outside


def _ray_parity(surface, pts):
    grid = surface._grid()
    tri = surface.triangles
    inside = np.zeros(len(pts), dtype=bool)
    ambiguous = np.zeros(len(pts), dtype=bool)
    bucket, off_grid = grid.bucket_of(pts)
    lo, hi = surface.bbox
    in_box = np.all((pts >= lo - _ON_SURFACE) & (pts <= hi + _ON_SURFACE), axis=1)
    candidates = np.nonzero(in_box & ~off_grid)[0]
    order = candidates[np.argsort(bucket[candidates], kind="stable")]
    bsorted = bucket[order]
    splits = np.nonzero(np.diff(bsorted))[0] + 1
    for group in np.split(order, splits):
        if len(group) == 0:
            continue
        tids = grid.buckets[bucket[group[0]]]
        if len(tids) == 0:
            continue
        hits, on_surf, amb = _x_ray_hits(pts[group], tri[tids])
        inside[group] = (hits % 2 == 1) | on_surf
        ambiguous[group] = amb & ~on_surf
    if ambiguous.any():
        idx = np.nonzero(ambiguous)[0]
        inside[idx] = _general_rays(tri, pts[idx])
    return inside


def _x_ray_hits(p, t):
    """Count crossings of +x rays from points ``p`` with triangles ``t``."""
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    # barycentric coordinates of the yz-projection
    ay, az = a[:, 1], a[:, 2]
    v0y, v0z = b[:, 1] - ay, b[:, 2] - az
    v1y, v1z = c[:, 1] - ay, c[:, 2] - az
    det = v0y * v1z - v0z * v1y
    scale = np.abs(v0y * v1z) + np.abs(v0z * v1y) + 1e-300
    degenerate_tri = np.abs(det) <= 1e-12 * scale
    det_safe = np.where(degenerate_tri, 1.0, det)
    py = p[:, 1][:, None] - ay[None, :]
    pz = p[:, 2][:, None] - az[None, :]
    s = (py * v1z[None, :] - pz * v1y[None, :]) / det_safe[None, :]
    r = (v0y[None, :] * pz - v0z[None, :] * py) / det_safe[None, :]
    w = 1.0 - s - r
    inside_proj = (s >= -_EDGE_EPS) & (r >= -_EDGE_EPS) & (w >= -_EDGE_EPS) & ~degenerate_tri[None, :]
    x_hit = a[:, 0][None, :] + s * (b[:, 0] - a[:, 0])[None, :] + r * (c[:, 0] - a[:, 0])[None, :]
    dx = x_hit - p[:, 0][:, None]
    on_surf = np.any(inside_proj & (np.abs(dx) <= _ON_SURFACE), axis=1)
    near_edge = inside_proj & ((s <= _EDGE_EPS) | (r <= _EDGE_EPS) | (w <= _EDGE_EPS)) & (dx > 0)
    # a ray grazing a triangle that is parallel to it is also ambiguous
    in_bbox_yz = ((p[:, 1][:, None] >= np.minimum.reduce([a[:, 1], b[:, 1], c[:, 1]])[None, :])
                  & (p[:, 1][:, None] <= np.maximum.reduce([a[:, 1], b[:, 1], c[:, 1]])[None, :])
                  & (p[:, 2][:, None] >= np.minimum.reduce([a[:, 2], b[:, 2], c[:, 2]])[None, :])
                  & (p[:, 2][:, None] <= np.maximum.reduce([a[:, 2], b[:, 2], c[:, 2]])[None, :]))
    grazing = degenerate_tri[None, :] & in_bbox_yz
    ambiguous = np.any(near_edge | grazing, axis=1)
    hits = np.sum(inside_proj & (dx > _ON_SURFACE), axis=1)
    return hits, on_surf, ambiguous


_PERTURBED_DIRS = np.array([
    [0.5773502691896258, 0.5773502691896257, 0.5773502691896259],
    [0.2672612419124244, -0.5345224838248488, 0.8017837257372732],
    [-0.7071067811865476, 0.4082482904638631, 0.5773502691896258],
])


def _general_rays(tri, pts):
    """Moller-Trumbore parity along perturbed directions; majority vote."""
    votes = np.zeros(len(pts), dtype=int)
    a, e1, e2 = tri[:, 0], tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]
    on_surf = np.array([_on_any_triangle(a, e1, e2, p) for p in pts], dtype=bool)
    for d in _PERTURBED_DIRS:
        pvec = np.cross(d, e2)
        det = np.einsum("ij,ij->i", e1, pvec)
        ok = np.abs(det) > 1e-14
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        for k, p in enumerate(pts):
            tvec = p - a
            u = np.einsum("ij,ij->i", tvec, pvec) * inv
            qvec = np.cross(tvec, e1)
            v = (qvec @ d) * inv
            t = np.einsum("ij,ij->i", e2, qvec) * inv
            hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > _ON_SURFACE)
            votes[k] += int(np.count_nonzero(hit) % 2 == 1)
    return (votes >= 2) | on_surf


def _on_any_triangle(a, e1, e2, p):
    n = np.cross(e1, e2)
    nn = np.linalg.norm(n, axis=1)
    dist = np.abs(np.einsum("ij,ij->i", p - a, n)) / nn
    near = dist <= _ON_SURFACE
    if not near.any():
        return False
    a, e1, e2 = a[near], e1[near], e2[near]
    w = p - a
    d00 = np.einsum("ij,ij->i", e1, e1)
    d01 = np.einsum("ij,ij->i", e1, e2)
    d11 = np.einsum("ij,ij->i", e2, e2)
    d20 = np.einsum("ij,ij->i", w, e1)
    d21 = np.einsum("ij,ij->i", w, e2)
    den = d00 * d11 - d01 * d01
    v = (d11 * d20 - d01 * d21) / den
    u = (d00 * d21 - d01 * d20) / den
    tol = 1e-9
    return bool(np.any((v >= -tol) & (u >= -tol) & (u + v <= 1 + tol)))
