"""Integrated Legendre shape functions on the reference cell [-1, 1]^3.

One-dimensional ordering per direction: the two nodal (hat) modes
``(1 - xi) / 2`` and ``(1 + xi) / 2`` followed by the internal modes
``phi_j = (L_j - L_{j-2}) / sqrt(2 (2 j - 1))`` for ``j = 2..p``. The 3D basis is
the full tensor product, flattened with the x index slowest.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

__all__ = ["legendre", "integrated_legendre", "tensor_basis", "shape_functions",
           "gauss_legendre", "nodal_mask"]


def legendre(n, x):
    """Legendre polynomials L_0..L_n evaluated at ``x``; shape (len(x), n + 1)."""
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (n + 1,))
    out[..., 0] = 1.0
    if n >= 1:
        out[..., 1] = x
    for k in range(1, n):
        out[..., k + 1] = ((2 * k + 1) * x * out[..., k] - k * out[..., k - 1]) / (k + 1)
    return out


def integrated_legendre(p, xi):
    """Values and first derivatives of the p + 1 one-dimensional modes."""
    xi = np.asarray(xi, dtype=float)
    L = legendre(max(p, 1), xi)
    N = np.empty(xi.shape + (p + 1,))
    dN = np.empty_like(N)
    N[..., 0] = 0.5 * (1.0 - xi)
    N[..., 1] = 0.5 * (1.0 + xi)
    dN[..., 0] = -0.5
    dN[..., 1] = 0.5
    for j in range(2, p + 1):
        s = np.sqrt(2.0 * (2 * j - 1))
        N[..., j] = (L[..., j] - L[..., j - 2]) / s
        dN[..., j] = (2 * j - 1) * L[..., j - 1] / s
    return N, dN


@lru_cache(maxsize=None)
def gauss_legendre(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def tensor_basis(p, xi, eta, zeta):
    """Tensor-product values and reference gradients at points (xi, eta, zeta).

    Returns
    -------
    N : ndarray, shape (P, (p+1)**3)
    dN : ndarray, shape (P, 3, (p+1)**3)
    """
    nx, dx = integrated_legendre(p, xi)
    ny, dy = integrated_legendre(p, eta)
    nz, dz = integrated_legendre(p, zeta)
    P = nx.shape[0]
    m = p + 1
    N = np.einsum("pa,pb,pc->pabc", nx, ny, nz).reshape(P, m ** 3)
    dN = np.empty((P, 3, m ** 3))
    dN[:, 0] = np.einsum("pa,pb,pc->pabc", dx, ny, nz).reshape(P, -1)
    dN[:, 1] = np.einsum("pa,pb,pc->pabc", nx, dy, nz).reshape(P, -1)
    dN[:, 2] = np.einsum("pa,pb,pc->pabc", nx, ny, dz).reshape(P, -1)
    return N, dN


def shape_functions(p, local_coord):
    """Basis values and reference gradients at one or more points in [-1, 1]^3."""
    pts = np.atleast_2d(np.asarray(local_coord, dtype=float))
    if np.any(np.abs(pts) > 1.0 + 1e-12):
        raise ValueError("local coordinates must lie in [-1, 1]^3")
    return tensor_basis(p, pts[:, 0], pts[:, 1], pts[:, 2])


def nodal_mask(p):
    """Boolean mask of the eight vertex (trilinear) functions."""
    m = p + 1
    one = np.zeros(m, dtype=bool)
    one[:2] = True
    return np.einsum("a,b,c->abc", one, one, one).reshape(-1)
