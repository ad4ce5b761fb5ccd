"""Legacy VTK (ASCII unstructured grid) export of frame and FCM fields."""

from __future__ import annotations

import os

import numpy as np

from ..fcm.field import evaluate
from ..geometry.domain import classify_points

__all__ = ["frame_vtk", "field_vtk", "write_text"]

VTK_LINE = 3
VTK_HEXAHEDRON = 12


def _rows(a, fmt="%.10g"):
    return "\n".join(" ".join(fmt % v for v in row) for row in np.atleast_2d(a))


def _document(title, points, cells, cell_type, point_data):
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {len(points)} double", _rows(points)]
    size = sum(len(c) + 1 for c in cells)
    out.append(f"CELLS {len(cells)} {size}")
    out.append("\n".join(" ".join(str(v) for v in [len(c), *c]) for c in cells))
    out.append(f"CELL_TYPES {len(cells)}")
    out.append("\n".join(str(cell_type) for _ in cells))
    out.append(f"POINT_DATA {len(points)}")
    for name, arr in point_data.items():
        arr = np.asarray(arr, dtype=float)
        if arr.ndim == 2:
            out.append(f"VECTORS {name} double")
            out.append(_rows(arr))
        else:
            out.append(f"SCALARS {name} double 1")
            out.append("LOOKUP_TABLE default")
            out.append("\n".join("%.10g" % v for v in arr))
    return "\n".join(out) + "\n"


def frame_vtk(solution):
    """Frame nodes and members as lines with displacement/rotation vectors.

    Superelements are drawn as lines from their first attached node to the
    others.
    """
    model = solution.model
    ids = list(solution.node_ids)
    index = {n: i for i, n in enumerate(ids)}
    pts = np.array([model.nodes[n] for n in ids])
    cells = [[index[e.a], index[e.b]] for e in model.elements]
    for se in model.superelements:
        first = index[se.nodes[0]]
        cells += [[first, index[n]] for n in se.nodes[1:]]
    data = {"u": solution.displacements[:, :3], "theta": solution.displacements[:, 3:]}
    return _document("fcmframe global solution (mm, rad)", pts, cells, VTK_LINE, data)


def field_vtk(field, subdivisions=1, domain=None):
    """Active cells split into ``subdivisions**3`` hexahedra with u and von Mises."""
    grid = field.grid
    s = int(subdivisions)
    t = np.linspace(0.0, 1.0, s + 1)
    ijk = grid.active_ijk
    lat = np.stack(np.meshgrid(t, t, t, indexing="ij"), -1).reshape(-1, 3)
    # global sub-lattice coordinates, deduplicated across cells
    sub = (ijk[:, None, :] * s + np.rint(lat * s).astype(np.int64)[None]).reshape(-1, 3)
    uniq, inv = np.unique(sub, axis=0, return_inverse=True)
    inv = inv.reshape(len(ijk), s + 1, s + 1, s + 1)
    pts = grid.origin + uniq * grid.h / s
    ev = evaluate(field, pts)
    hexes = []
    corner = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)]
    for c in range(len(ijk)):
        for a in range(s):
            for b in range(s):
                for d in range(s):
                    hexes.append([int(inv[c, a + i, b + j, d + k]) for i, j, k in corner])
    data = {"u": ev.u, "vonMises": ev.von_mises}
    if domain is not None:
        data["inside"] = classify_points(domain, pts).astype(float)
    return _document("fcmframe local field (mm, MPa)", pts, hexes, VTK_HEXAHEDRON, data)


def write_text(text, path):
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return path
