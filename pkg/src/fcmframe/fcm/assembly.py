"""Cell stiffness integration and unconstrained global assembly.

The weak form is integrated as ``alpha * K_full + (1 - alpha) * K_phys`` per cut
cell, where ``K_full`` is the matrix of the whole cell (shared by every cell of
the uniform grid) and ``K_phys`` integrates over the physical part only. Uniform
octree boxes use exact 1D-factorized integrals; cut leaves use Gauss points with
point-wise membership.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..geometry.domain import classify_points
from .basis import gauss_legendre, integrated_legendre
from .grid import CUT, INSIDE
from .quadrature import QuadratureScheme, partition_cells

__all__ = [
    "box_moments",
    "point_moments",
    "elasticity_from_moments",
    "full_cell_stiffness",
    "cell_stiffness",
    "cut_cell_stiffnesses",
    "block_pattern",
    "assemble_cells",
    "assemble_unconstrained",
]


def _axis_tables(p, lo, hi, q):
    """1D integrals of mode products over intervals [lo, hi] (arrays (B,))."""
    g, w = gauss_legendre(q)
    half = (hi - lo) / 2.0
    x = lo[:, None] + (g[None, :] + 1.0) * half[:, None]
    N, dN = integrated_legendre(p, x)
    wb = w[None, :] * half[:, None]
    A0 = np.einsum("bq,bqa,bqc->bac", wb, N, N)
    A1 = np.einsum("bq,bqa,bqc->bac", wb, dN, N)
    A2 = np.einsum("bq,bqa,bqc->bac", wb, dN, dN)
    return A0, A1, A2


def _kron_sum(A, B, C):
    """``sum_n kron(A[n], B[n], C[n])`` for stacks of (m, m) matrices."""
    n, m, _ = A.shape
    AB = (A[:, :, None, :, None] * B[:, None, :, None, :]).reshape(n, m * m * m * m)
    R = (AB.T @ C.reshape(n, m * m)).reshape(m, m, m, m, m, m)  # a b d e c f
    return R.transpose(0, 1, 4, 2, 3, 5).reshape(m ** 3, m ** 3)


def box_moments(p, h, lo, hi):
    """Sum over boxes of ``M_ij[a, b] = int d_i N_a d_j N_b dV``.

    ``lo``/``hi`` are (B, 3) reference-coordinate boxes of one cell of physical
    size ``h``. Returns an array of shape (3, 3, m**3, m**3).
    """
    m = p + 1
    lo = np.atleast_2d(lo)
    hi = np.atleast_2d(hi)
    M = np.zeros((3, 3, m ** 3, m ** 3))
    if len(lo) == 0:
        return M
    tabs = [_axis_tables(p, lo[:, k], hi[:, k], p + 1) for k in range(3)]
    s = 2.0 / np.asarray(h, dtype=float)
    jac = float(np.prod(h)) / 8.0
    for i in range(3):
        for j in range(i, 3):
            F = []
            for k in range(3):
                A0, A1, A2 = tabs[k]
                if k == i == j:
                    F.append(A2)
                elif k == i:
                    F.append(A1)
                elif k == j:
                    F.append(np.swapaxes(A1, 1, 2))
                else:
                    F.append(A0)
            Mij = _kron_sum(*F)
            M[i, j] = s[i] * s[j] * jac * Mij
            if i != j:
                M[j, i] = M[i, j].T
    return M


def _leaf_points(p, q, leaf_lo, leaf_hi):
    """Reference points, weights and 1D tables for Gauss rules on leaves."""
    g, w = gauss_legendre(q)
    half = (leaf_hi - leaf_lo) / 2.0                              # (L, 3)
    x = leaf_lo[:, None, :] + (g[None, :, None] + 1.0) * half[:, None, :]  # (L, q, 3)
    tabs = [integrated_legendre(p, x[:, :, k]) for k in range(3)]  # each (L, q, m)
    wl = np.prod(half, axis=1)                                      # (L,)
    W = wl[:, None, None, None] * np.einsum("a,b,c->abc", w, w, w)[None]
    pts = np.stack(np.meshgrid(np.arange(q), np.arange(q), np.arange(q), indexing="ij"), -1)
    ref = np.stack([x[:, pts[..., k], k] for k in range(3)], axis=-1)  # (L, q, q, q, 3)
    return ref.reshape(len(leaf_lo), -1, 3), W.reshape(len(leaf_lo), -1), tabs


def point_moments(p, h, tabs, weights, mask):
    """Moment matrices from leaf Gauss points where ``mask`` is true."""
    m = p + 1
    (Nx, dx), (Ny, dy), (Nz, dz) = tabs
    L, q, _ = Nx.shape
    l, i, j, k = np.nonzero(mask.reshape(L, q, q, q))
    s = 2.0 / np.asarray(h, dtype=float)
    X, DX = Nx[l, i], dx[l, i]
    Y, DY = Ny[l, j], dy[l, j]
    Z, DZ = Nz[l, k], dz[l, k]
    G = np.empty((len(l), 3, m, m, m))
    G[:, 0] = s[0] * DX[:, :, None, None] * (Y[:, :, None] * Z[:, None, :])[:, None]
    G[:, 1] = s[1] * X[:, :, None, None] * (DY[:, :, None] * Z[:, None, :])[:, None]
    G[:, 2] = s[2] * X[:, :, None, None] * (Y[:, :, None] * DZ[:, None, :])[:, None]
    G = G.reshape(len(l), 3 * m ** 3)
    ws = weights.reshape(L, q, q, q)[l, i, j, k] * float(np.prod(h)) / 8.0
    M = G.T @ (ws[:, None] * G)
    return M.reshape(3, m ** 3, 3, m ** 3).transpose(0, 2, 1, 3)


def elasticity_from_moments(M, material):
    """Interleaved (3 m^3) x (3 m^3) stiffness from scalar moment matrices."""
    lam, mu = material.lame
    n = M.shape[-1]
    trace = M[0, 0] + M[1, 1] + M[2, 2]
    K = np.empty((n, 3, n, 3))
    for i in range(3):
        for j in range(3):
            blk = lam * M[i, j] + mu * M[j, i]
            if i == j:
                blk = blk + mu * trace
            K[:, i, :, j] = blk
    K = K.reshape(3 * n, 3 * n)
    return 0.5 * (K + K.T)


def full_cell_stiffness(p, h, material):
    M = box_moments(p, h, -np.ones((1, 3)), np.ones((1, 3)))
    return elasticity_from_moments(M, material)


def cut_cell_stiffnesses(grid, domain, quad, cells, K_full=None):
    """Yield ``(cell, K_cell)`` for the given active cut cells."""
    p, h = grid.p, grid.h
    if K_full is None:
        K_full = full_cell_stiffness(p, h, domain.material)
    alpha = domain.alpha
    q = quad.points_per_direction(p)
    cells = np.asarray(cells, dtype=np.int64)
    for start in range(0, len(cells), 64):
        batch = cells[start:start + 64]
        ijk = np.stack(np.unravel_index(grid.active[batch], grid.shape), axis=1)
        clo = grid.origin + ijk * h
        part = partition_cells(domain, clo, clo + h, quad.depth, quad.samples)
        in_order = np.argsort(part.inside_cell, kind="stable")
        in_split = np.searchsorted(part.inside_cell[in_order], np.arange(len(batch) + 1))
        lf_order = np.argsort(part.leaf_cell, kind="stable")
        lf_split = np.searchsorted(part.leaf_cell[lf_order], np.arange(len(batch) + 1))
        for b, cell in enumerate(batch):
            sel = in_order[in_split[b]:in_split[b + 1]]
            M = box_moments(p, h, part.inside_lo[sel], part.inside_hi[sel])
            lsel = lf_order[lf_split[b]:lf_split[b + 1]]
            if len(lsel):
                llo, lhi = part.leaf_lo[lsel], part.leaf_hi[lsel]
                ref, W, tabs = _leaf_points(p, q, llo, lhi)
                phys = clo[b] + (ref + 1.0) * (h / 2.0)
                mask = classify_points(domain, phys.reshape(-1, 3)).reshape(W.shape)
                if mask.any():
                    M += point_moments(p, h, tabs, W, mask)
            K_phys = elasticity_from_moments(M, domain.material)
            yield int(cell), alpha * K_full + (1.0 - alpha) * K_phys


def cell_stiffness(grid, cell, domain, quad=None):
    """Dense cell matrix for one active cell (interleaved DOFs)."""
    quad = quad or QuadratureScheme()
    K_full = full_cell_stiffness(grid.p, grid.h, domain.material)
    if grid.active_status[cell] == INSIDE:
        return K_full
    (_, K), = cut_cell_stiffnesses(grid, domain, quad, [cell], K_full)
    return K


def block_pattern(grid):
    """Sorted unique node-pair keys and the inverse map of every cell entry."""
    cn = grid.cell_nodes
    n = grid.n_nodes
    keys = (cn[:, :, None] * n + cn[:, None, :]).reshape(len(cn), -1)
    uniq, inv = np.unique(keys, return_inverse=True)
    return uniq, inv.reshape(keys.shape)


def assemble_cells(grid, cell_matrices, pattern=None):
    """Sum interleaved cell matrices into a sparse CSR matrix.

    ``cell_matrices`` yields ``(cell, K_cell)`` pairs; cells not yielded are
    skipped.
    """
    uniq, inv = pattern if pattern is not None else block_pattern(grid)
    m3 = grid.cell_nodes.shape[1]
    U = len(uniq)
    data = np.zeros((9, U))
    buf_idx, buf_val = [], []

    def flush():
        if not buf_idx:
            return
        idx = np.concatenate(buf_idx)
        vals = np.concatenate(buf_val)
        for comp in range(9):
            data[comp] += np.bincount(idx, weights=vals[:, comp], minlength=U)
        buf_idx.clear()
        buf_val.clear()

    for cell, Kc in cell_matrices:
        blocks = Kc.reshape(m3, 3, m3, 3).transpose(0, 2, 1, 3).reshape(m3 * m3, 9)
        buf_idx.append(inv[cell])
        buf_val.append(blocks)
        if len(buf_idx) >= 128:
            flush()
    flush()
    n = grid.n_nodes
    rows = uniq // n
    cols = uniq % n
    indptr = np.searchsorted(rows, np.arange(n + 1)).astype(np.int64)
    bsr = sp.bsr_matrix((data.T.reshape(U, 3, 3), cols, indptr), shape=(3 * n, 3 * n))
    return bsr.tocsr()


def assemble_unconstrained(grid, domain, quad=None, pattern=None):
    """Global stiffness over all active cells (no constraints applied)."""
    quad = quad or QuadratureScheme()
    K_full = full_cell_stiffness(grid.p, grid.h, domain.material)
    status = grid.active_status
    inside = np.flatnonzero(status == INSIDE)
    cut = np.flatnonzero(status == CUT)

    def gen():
        for c in inside:
            yield int(c), K_full
        yield from cut_cell_stiffnesses(grid, domain, quad, cut, K_full)

    return assemble_cells(grid, gen(), pattern)
