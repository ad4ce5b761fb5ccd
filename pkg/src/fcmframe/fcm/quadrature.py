"""Octree (spacetree) partition of cut cells for quadrature."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import CUT, INSIDE, OUTSIDE, sample_status

__all__ = ["QuadratureScheme", "OctreePartition", "partition_cells"]


@dataclass(frozen=True)
class QuadratureScheme:
    """Octree depth for cut cells and Gauss points per direction per leaf.

    ``order=None`` means ``p + 1`` points per direction.
    """

    depth: int = 4
    order: int | None = None
    samples: int = 3

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("octree depth must be >= 0")

    def points_per_direction(self, p):
        return self.order if self.order is not None else p + 1


@dataclass
class OctreePartition:
    """Sub-boxes of a batch of cells in reference coordinates [-1, 1]^3.

    ``inside_*`` are sub-boxes fully in the physical domain, ``leaf_*`` are
    cut sub-boxes at maximum depth that need point-wise indicator evaluation.
    ``*_cell`` indexes into the batch.
    """

    inside_cell: np.ndarray
    inside_lo: np.ndarray
    inside_hi: np.ndarray
    leaf_cell: np.ndarray
    leaf_lo: np.ndarray
    leaf_hi: np.ndarray


_CHILD = np.array([[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)], dtype=float)


def partition_cells(domain, cell_lo, cell_hi, depth, samples=3):
    """Recursively bisect cut cells up to ``depth`` levels.

    Sub-boxes whose samples agree become uniform (inside kept, outside
    dropped); disagreeing boxes are split until the maximum depth.
    """
    cell_lo = np.atleast_2d(cell_lo)
    cell_hi = np.atleast_2d(cell_hi)
    n = len(cell_lo)
    owner = np.arange(n)
    lo = -np.ones((n, 3))
    hi = np.ones((n, 3))
    in_c, in_lo, in_hi = [], [], []
    scale = (cell_hi - cell_lo) / 2.0
    for level in range(depth + 1):
        if len(owner) == 0:
            break
        plo = cell_lo[owner] + (lo + 1.0) * scale[owner]
        phi = cell_lo[owner] + (hi + 1.0) * scale[owner]
        status = sample_status(domain, plo, phi, samples)
        if level == 0:
            # level 0 boxes were already classified as cut by the grid
            status[:] = CUT
        inside = status == INSIDE
        in_c.append(owner[inside])
        in_lo.append(lo[inside])
        in_hi.append(hi[inside])
        cut = status == CUT
        if level == depth:
            break
        owner, lo, hi = owner[cut], lo[cut], hi[cut]
        half = (hi - lo) / 2.0
        owner = np.repeat(owner, 8)
        lo = (lo[:, None, :] + _CHILD[None, :, :] * half[:, None, :]).reshape(-1, 3)
        hi = lo + np.repeat(half, 8, axis=0)
    else:
        cut = np.zeros(0, dtype=bool)
    if len(owner) and level == depth:
        leaf_c, leaf_lo, leaf_hi = owner[cut], lo[cut], hi[cut]
    else:
        leaf_c, leaf_lo, leaf_hi = (np.zeros(0, dtype=int), np.zeros((0, 3)), np.zeros((0, 3)))
    return OctreePartition(
        np.concatenate(in_c) if in_c else np.zeros(0, dtype=int),
        np.concatenate(in_lo) if in_lo else np.zeros((0, 3)),
        np.concatenate(in_hi) if in_hi else np.zeros((0, 3)),
        leaf_c, leaf_lo, leaf_hi)
