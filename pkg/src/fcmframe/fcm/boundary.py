"""Surface quadrature on triangle patches, penalty Dirichlet and Neumann terms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..geometry.domain import classify_points
from ..geometry.stl import GeometryError
from .basis import tensor_basis

__all__ = [
    "SurfaceQuadrature",
    "triangle_rule",
    "clip_polygon_to_box",
    "surface_quadrature",
    "penalty_matrix",
    "penalty_vector",
    "penalty_dirichlet",
    "neumann_load",
]


def triangle_rule():
    """Seven-point degree-5 rule on the reference triangle (area 1/2).

    Returns barycentric coordinates (7, 3) and weights summing to 1.
    """
    a1, b1 = 0.059715871789770, 0.470142064105115
    a2, b2 = 0.797426985353087, 0.101286507323456
    w0 = 0.225
    w1 = 0.132394152788506
    w2 = 0.125939180544827
    bary = np.array([
        [1 / 3, 1 / 3, 1 / 3],
        [a1, b1, b1], [b1, a1, b1], [b1, b1, a1],
        [a2, b2, b2], [b2, a2, b2], [b2, b2, a2],
    ])
    w = np.array([w0, w1, w1, w1, w2, w2, w2])
    return bary, w


def clip_polygon_to_box(poly, lo, hi):
    """Sutherland-Hodgman clipping of a planar polygon (V, 3) to a box."""
    out = np.asarray(poly, dtype=float)
    for axis in range(3):
        for bound, sign in ((lo[axis], 1.0), (hi[axis], -1.0)):
            if len(out) == 0:
                return out
            d = sign * (out[:, axis] - bound)  # >= 0 keeps
            nxt = []
            for i in range(len(out)):
                a, b = out[i], out[(i + 1) % len(out)]
                da, db = d[i], d[(i + 1) % len(out)]
                if da >= 0:
                    nxt.append(a)
                if (da >= 0) != (db >= 0):
                    t = da / (da - db)
                    nxt.append(a + t * (b - a))
            out = np.array(nxt).reshape(-1, 3)
    return out


@dataclass
class SurfaceQuadrature:
    """Quadrature points of a surface patch mapped onto the grid.

    ``S`` is a sparse (P, n_nodes) matrix of scalar basis values, so that a
    field with nodal coefficients ``U`` (n_nodes, 3) evaluates to ``S @ U``.
    """

    points: np.ndarray
    weights: np.ndarray
    cells: np.ndarray
    S: sp.csr_matrix
    dropped_area: float

    @property
    def area(self):
        return float(self.weights.sum())

    def evaluate(self, coefficients):
        U = np.asarray(coefficients).reshape(-1, 3)
        return self.S @ U


def _cells_overlapping(grid, lo, hi):
    shape = np.asarray(grid.shape)
    a = np.floor((lo - grid.origin) / grid.h - 1e-9).astype(int)
    b = np.floor((hi - grid.origin) / grid.h + 1e-9).astype(int)
    a = np.clip(a, 0, shape - 1)
    b = np.clip(b, 0, shape - 1)
    return [(i, j, k) for i in range(a[0], b[0] + 1)
            for j in range(a[1], b[1] + 1) for k in range(a[2], b[2] + 1)]


def surface_quadrature(grid, triangles, domain=None, physical_only=True):
    """Clip triangles to grid cells and place a 7-point rule on each piece.

    Points that fall outside the physical domain (when ``domain`` is given and
    ``physical_only``) or outside every active cell are discarded; their area
    is reported in ``dropped_area``.
    """
    tris = np.asarray(triangles, dtype=float).reshape(-1, 3, 3)
    bary, bw = triangle_rule()
    pts, wts, cells = [], [], []
    dropped = 0.0
    for tri in tris:
        lo_t, hi_t = tri.min(axis=0), tri.max(axis=0)
        for ijk in _cells_overlapping(grid, lo_t, hi_t):
            clo = grid.origin + np.asarray(ijk) * grid.h
            poly = clip_polygon_to_box(tri, clo, clo + grid.h)
            if len(poly) < 3:
                continue
            flat = np.ravel_multi_index(ijk, grid.shape)
            cell = grid.lookup[flat]
            for v in range(1, len(poly) - 1):
                a, b, c = poly[0], poly[v], poly[v + 1]
                area = 0.5 * np.linalg.norm(np.cross(b - a, c - a))
                if area <= 1e-14:
                    continue
                if cell < 0:
                    dropped += area
                    continue
                pts.append(bary @ np.stack([a, b, c]))
                wts.append(bw * area)
                cells.append(np.full(len(bw), cell))
    if not pts:
        raise GeometryError("surface patch lies outside every active cell")
    pts = np.concatenate(pts)
    wts = np.concatenate(wts)
    cells = np.concatenate(cells)
    if domain is not None and physical_only:
        keep = classify_points(domain, pts)
        dropped += float(wts[~keep].sum())
        pts, wts, cells = pts[keep], wts[keep], cells[keep]
        if len(pts) == 0:
            raise GeometryError("surface patch has no quadrature points in the physical domain")
    lo = grid.origin + np.stack(np.unravel_index(grid.active[cells], grid.shape), axis=1) * grid.h
    xi = np.clip(2.0 * (pts - lo) / grid.h - 1.0, -1.0, 1.0)
    N, _ = tensor_basis(grid.p, xi[:, 0], xi[:, 1], xi[:, 2])
    m3 = N.shape[1]
    rows = np.repeat(np.arange(len(pts)), m3)
    S = sp.csr_matrix((N.reshape(-1), (rows, grid.cell_nodes[cells].reshape(-1))),
                      shape=(len(pts), grid.n_nodes))
    return SurfaceQuadrature(pts, wts, cells, S, dropped)


def penalty_matrix(quad, beta):
    """``beta * int N^T N dG`` expanded to interleaved displacement DOFs."""
    scalar = (quad.S.T @ sp.diags(quad.weights) @ quad.S).tocsr()
    scalar = 0.5 * (scalar + scalar.T)
    return beta * sp.kron(scalar, sp.identity(3), format="csr")


def _prescribed_values(quad, prescribed):
    if callable(prescribed):
        g = np.asarray(prescribed(quad.points), dtype=float)
    else:
        g = np.broadcast_to(np.asarray(prescribed, dtype=float), quad.points.shape)
    if g.shape != quad.points.shape:
        raise ValueError("prescribed field must return (P, 3) values")
    return g


def penalty_vector(quad, prescribed, beta):
    """``beta * int N^T u_p dG`` as an interleaved vector."""
    g = _prescribed_values(quad, prescribed)
    return beta * (quad.S.T @ (quad.weights[:, None] * g)).reshape(-1)


def penalty_dirichlet(grid, region, prescribed, beta=1e14, domain=None):
    """Penalty matrix and load increments for a Dirichlet patch.

    ``region`` is a (T, 3, 3) triangle array or a ready ``SurfaceQuadrature``.
    """
    quad = region if isinstance(region, SurfaceQuadrature) else \
        surface_quadrature(grid, region, domain)
    return penalty_matrix(quad, beta), penalty_vector(quad, prescribed, beta)


def neumann_load(grid, patch, traction, domain=None):
    """Consistent nodal load ``int N^T t dG`` for a traction on a patch."""
    quad = patch if isinstance(patch, SurfaceQuadrature) else \
        surface_quadrature(grid, patch, domain)
    t = _prescribed_values(quad, traction)
    return (quad.S.T @ (quad.weights[:, None] * t)).reshape(-1)
