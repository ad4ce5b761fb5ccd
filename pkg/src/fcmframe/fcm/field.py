"""Displacement, strain and stress evaluation of a solved FCM field."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import tensor_basis

__all__ = ["ElasticField", "evaluate", "von_mises", "FieldEvaluation"]


def von_mises(sigma):
    """Von Mises stress of (..., 3, 3) tensors."""
    s = np.asarray(sigma)
    dev = s - np.trace(s, axis1=-2, axis2=-1)[..., None, None] * np.eye(3) / 3.0
    return np.sqrt(1.5 * np.sum(dev * dev, axis=(-2, -1)))


@dataclass
class FieldEvaluation:
    u: np.ndarray        # (P, 3) mm
    strain: np.ndarray   # (P, 3, 3)
    stress: np.ndarray   # (P, 3, 3) MPa
    von_mises: np.ndarray  # (P,) MPa


@dataclass(eq=False)
class ElasticField:
    """Coefficient vector on a grid together with the (physical) material."""

    grid: object
    coefficients: np.ndarray
    material: object

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float).reshape(-1)
        if len(c) != self.grid.n_dofs:
            raise ValueError("coefficient vector does not match the grid DOF count")
        self.coefficients = c

    @property
    def nodal(self):
        return self.coefficients.reshape(-1, 3)

    def evaluate(self, points):
        return evaluate(self, points)

    def displacement(self, points):
        return evaluate(self, points, gradients=False).u

    def strain_energy(self, K):
        c = self.coefficients
        return 0.5 * float(c @ (K @ c))


def evaluate(field, points, gradients=True):
    """Evaluate ``u``, strain, stress and von Mises at points in active cells.

    Raises
    ------
    ValueError
        If any point lies outside every active cell.
    """
    grid = field.grid
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    cells, xi = grid.locate(pts)
    if np.any(cells < 0):
        bad = pts[np.argmax(cells < 0)]
        raise ValueError(f"point {bad.tolist()} lies outside the active grid")
    N, dN = tensor_basis(grid.p, xi[:, 0], xi[:, 1], xi[:, 2])
    U = field.nodal[grid.cell_nodes[cells]]        # (P, m3, 3)
    u = np.einsum("pa,pad->pd", N, U)
    if not gradients:
        return FieldEvaluation(u, None, None, None)
    grad = np.einsum("pka,pad->pdk", dN, U) * (2.0 / grid.h)[None, None, :]  # du_d/dx_k
    eps = 0.5 * (grad + np.swapaxes(grad, 1, 2))
    lam, mu = field.material.lame
    tr = np.trace(eps, axis1=1, axis2=2)
    sig = 2.0 * mu * eps + lam * tr[:, None, None] * np.eye(3)
    return FieldEvaluation(u, eps, sig, von_mises(sig))
