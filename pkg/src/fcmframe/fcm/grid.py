"""Cartesian cell grid over a domain with a conforming tensor-product DOF map."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry.domain import classify_points
from ..geometry.stl import GeometryError

__all__ = ["CellGrid", "build_grid", "OUTSIDE", "CUT", "INSIDE", "sample_status"]

OUTSIDE, CUT, INSIDE = 0, 1, 2


@dataclass(eq=False)
class CellGrid:
    """Uniform grid of hexahedral cells with degree-``p`` tensor basis.

    Global 1D mode numbering along an axis with ``n`` cells uses ``n * p + 1``
    indices: the vertex mode of grid line ``i`` is ``i * p`` and internal mode
    ``j >= 2`` of cell ``c`` is ``c * p + j - 1``. The 3D raw lattice index is
    the row-major combination; only nodes touched by active cells get DOFs.
    Each node carries three displacement DOFs, interleaved as ``3 * node + d``.
    """

    origin: np.ndarray
    h: np.ndarray
    shape: tuple
    p: int
    status: np.ndarray            # (nx, ny, nz) int8: OUTSIDE / CUT / INSIDE
    active: np.ndarray            # (C,) flat cell indices (row-major)
    cell_nodes: np.ndarray        # (C, (p+1)**3) compressed node ids
    node_raw: np.ndarray          # (n_nodes,) raw lattice index per node
    lookup: np.ndarray = field(repr=False)  # flat cell index -> active index or -1

    @property
    def n_cells(self):
        return len(self.active)

    @property
    def n_nodes(self):
        return len(self.node_raw)

    @property
    def n_dofs(self):
        return 3 * self.n_nodes

    @property
    def lattice_shape(self):
        return tuple(int(n) * self.p + 1 for n in self.shape)

    @property
    def active_ijk(self):
        return np.stack(np.unravel_index(self.active, self.shape), axis=1)

    @property
    def active_status(self):
        return self.status.reshape(-1)[self.active]

    @property
    def box(self):
        return self.origin.copy(), self.origin + self.h * np.asarray(self.shape)

    def cell_bounds(self, cell):
        ijk = np.array(np.unravel_index(self.active[cell], self.shape))
        lo = self.origin + ijk * self.h
        return lo, lo + self.h

    def dofs_of_cell(self, cell):
        nodes = self.cell_nodes[cell]
        return (3 * nodes[:, None] + np.arange(3)).reshape(-1)

    def locate(self, points):
        """Active cell index and reference coordinates for each point.

        Points on shared faces go to an adjacent active cell when possible.
        Returns ``(cells, xi)``; ``cells`` is -1 where no active cell contains
        the point.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rel = (pts - self.origin) / self.h
        shape = np.asarray(self.shape)
        base = np.clip(np.floor(rel).astype(np.int64), 0, shape - 1)
        cells = np.full(len(pts), -1, dtype=np.int64)
        best = base.copy()
        inside_box = np.all((rel >= -1e-9) & (rel <= shape + 1e-9), axis=1)
        frac = rel - base
        # candidate shifts towards neighbours when a point sits on a cell face
        for shift in _SHIFTS:
            cand = base + shift
            ok = np.all((cand >= 0) & (cand < shape), axis=1) & inside_box
            near = np.ones(len(pts), dtype=bool)
            for d in range(3):
                if shift[d] == -1:
                    near &= frac[:, d] <= 1e-9
                elif shift[d] == 1:
                    near &= frac[:, d] >= 1.0 - 1e-9
            ok &= near & (cells < 0)
            if not ok.any():
                continue
            flat = np.ravel_multi_index(tuple(cand[ok].T), self.shape)
            act = self.lookup[flat]
            hit = np.nonzero(ok)[0][act >= 0]
            cells[hit] = act[act >= 0]
            best[hit] = cand[hit]
        xi = 2.0 * (rel - best) - 1.0
        xi = np.clip(xi, -1.0, 1.0)
        return cells, xi


_SHIFTS = [np.array(s) for s in
           [(0, 0, 0)] + [(i, j, k) for i in (-1, 0, 1) for j in (-1, 0, 1) for k in (-1, 0, 1)
                          if (i, j, k) != (0, 0, 0)]]


def sample_status(domain, lo, hi, samples=3):
    """Classify boxes ``[lo, hi]`` (arrays (B, 3)) by a samples**3 lattice.

    Returns int8 codes OUTSIDE / CUT / INSIDE.
    """
    t = np.linspace(0.0, 1.0, samples)
    g = np.stack(np.meshgrid(t, t, t, indexing="ij"), axis=-1).reshape(-1, 3)
    pts = lo[:, None, :] + g[None, :, :] * (hi - lo)[:, None, :]
    inside = classify_points(domain, pts.reshape(-1, 3)).reshape(len(lo), -1)
    n_in = inside.sum(axis=1)
    status = np.full(len(lo), CUT, dtype=np.int8)
    status[n_in == 0] = OUTSIDE
    status[n_in == inside.shape[1]] = INSIDE
    return status


def _lattice_status(domain, origin, h, shape, samples):
    """Cell status from a shared sample lattice (s - 1 sub-steps per cell)."""
    s = samples - 1
    axes = [origin[d] + h[d] * np.arange(shape[d] * s + 1) / s for d in range(3)]
    out = np.empty(shape, dtype=np.int8)
    # slab-wise along x to bound memory
    for i in range(shape[0]):
        xs = axes[0][i * s:(i + 1) * s + 1]
        P = np.stack(np.meshgrid(xs, axes[1], axes[2], indexing="ij"), axis=-1)
        inside = classify_points(domain, P.reshape(-1, 3)).reshape(P.shape[:3])
        cnt = np.zeros((shape[1], shape[2]), dtype=np.int64)
        for a in range(s + 1):
            for b in range(s + 1):
                for c in range(s + 1):
                    cnt += inside[a, b:b + shape[1] * s:s, c:c + shape[2] * s:s]
        total = (s + 1) ** 3
        st = np.full(cnt.shape, CUT, dtype=np.int8)
        st[cnt == 0] = OUTSIDE
        st[cnt == total] = INSIDE
        out[i] = st
    return out


def build_grid(domain, resolution, p=3, margin=0.0, box=None, samples=3):
    """Grid over the domain bounding box (plus ``margin`` mm per side).

    Cells whose samples all classify outside are dropped from the DOF map.
    """
    res = np.broadcast_to(np.asarray(resolution, dtype=int), (3,)).copy()
    if np.any(res < 1):
        raise ValueError("resolution must be >= 1 per axis")
    if not 1 <= int(p) <= 8:
        raise ValueError("polynomial degree must lie in [1, 8]")
    p = int(p)
    if box is None:
        lo, hi = domain.bounds()
    else:
        lo, hi = (np.asarray(b, dtype=float) for b in box)
    lo = np.asarray(lo, dtype=float) - margin
    hi = np.asarray(hi, dtype=float) + margin
    if np.any(hi <= lo):
        raise GeometryError("grid box has zero extent")
    h = (hi - lo) / res
    shape = tuple(int(r) for r in res)
    status = _lattice_status(domain, lo, h, shape, samples)
    active = np.flatnonzero(status.reshape(-1) != OUTSIDE)
    if len(active) == 0:
        raise GeometryError("no active cells: grid does not intersect the domain")
    lookup = np.full(status.size, -1, dtype=np.int64)
    lookup[active] = np.arange(len(active))

    ijk = np.stack(np.unravel_index(active, shape), axis=1)
    m = p + 1
    local = np.arange(m)
    offs = np.where(local == 0, 0, np.where(local == 1, p, local - 1))
    lat = [n * p + 1 for n in shape]
    gx = ijk[:, 0:1] * p + offs
    gy = ijk[:, 1:2] * p + offs
    gz = ijk[:, 2:3] * p + offs
    raw = ((gx[:, :, None, None] * lat[1] + gy[:, None, :, None]) * lat[2]
           + gz[:, None, None, :]).reshape(len(active), m ** 3)
    node_raw, inverse = np.unique(raw, return_inverse=True)
    cell_nodes = inverse.reshape(raw.shape).astype(np.int64)
    return CellGrid(origin=lo, h=h, shape=shape, p=p, status=status, active=active,
                    cell_nodes=cell_nodes, node_raw=node_raw, lookup=lookup)
