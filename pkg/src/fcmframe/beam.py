"""3D Timoshenko space-frame solver.

Units are mm, N and MPa throughout; rotations in rad. Every node carries six
DOFs ordered (ux, uy, uz, rx, ry, rz) in global axes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .material import Material

__all__ = [
    "Material",
    "CrossSection",
    "section_circular",
    "section_hollow_circular",
    "local_stiffness_timoshenko",
    "element_rotation",
    "Element",
    "Superelement",
    "FrameModel",
    "GlobalSolution",
    "SingularSystemError",
    "AssemblyError",
    "assemble_and_solve",
    "internal_actions",
    "euler_buckling_check",
    "BucklingCheck",
    "rigid_body_modes",
]


class SingularSystemError(RuntimeError):
    """The reduced frame system has zero-energy modes."""

    def __init__(self, n_modes, detail=""):
        msg = f"singular frame system: {n_modes} zero-energy mode(s)"
        super().__init__(msg + (f"; {detail}" if detail else ""))
        self.n_modes = n_modes


class AssemblyError(ValueError):
    pass


@dataclass(frozen=True)
class CrossSection:
    """Section constants. ``kappa`` is the shear correction factor."""

    A: float
    Iy: float
    Iz: float
    J: float
    kappa: float

    def __post_init__(self):
        for name in ("A", "Iy", "Iz", "J", "kappa"):
            if not getattr(self, name) > 0:
                raise ValueError(f"section constant {name} must be positive")
        if self.kappa > 1.0:
            raise ValueError("kappa must lie in (0, 1]")


def section_circular(r, nu):
    """Solid circle; kappa from Cowper's circular-section formula."""
    if not r > 0:
        raise ValueError("radius must be positive")
    I = np.pi * r ** 4 / 4.0
    kappa = 6.0 * (1.0 + nu) / (7.0 + 6.0 * nu)
    return CrossSection(A=np.pi * r ** 2, Iy=I, Iz=I, J=2.0 * I, kappa=kappa)


def section_hollow_circular(r_in, r_out, nu):
    """Annulus; kappa from Cowper's hollow-circle formula with m = r_in / r_out."""
    if not 0 < r_in < r_out:
        raise ValueError("hollow section needs 0 < r_in < r_out")
    I = np.pi * (r_out ** 4 - r_in ** 4) / 4.0
    m2 = (r_in / r_out) ** 2
    q = (1.0 + m2) ** 2
    kappa = 6.0 * (1.0 + nu) * q / ((7.0 + 6.0 * nu) * q + (20.0 + 12.0 * nu) * m2)
    return CrossSection(A=np.pi * (r_out ** 2 - r_in ** 2), Iy=I, Iz=I, J=2.0 * I, kappa=kappa)


def local_stiffness_timoshenko(mat, sec, L):
    """12x12 element stiffness in local axes.

    DOFs: (u, v, w, rx, ry, rz) at node 1 then node 2, local x along the member.
    """
    if not L > 0:
        raise ValueError("element length must be positive")
    E, G = mat.E, mat.G
    A, Iy, Iz, J, kappa = sec.A, sec.Iy, sec.Iz, sec.J, sec.kappa
    phi_z = 12.0 * E * Iz / (kappa * G * A * L ** 2)
    phi_y = 12.0 * E * Iy / (kappa * G * A * L ** 2)
    hz = 1.0 + phi_z
    hy = 1.0 + phi_y

    K = np.zeros((12, 12))
    ea = E * A / L
    gj = G * J / L
    K[0, 0] = K[6, 6] = ea
    K[6, 0] = -ea
    K[3, 3] = K[9, 9] = gj
    K[9, 3] = -gj

    # bending in the local x-y plane (v, rz)
    a = 12.0 * E * Iz / (hz * L ** 3)
    b = 6.0 * E * Iz / (hz * L ** 2)
    c = (4.0 + phi_z) * E * Iz / (hz * L)
    d = (2.0 - phi_z) * E * Iz / (hz * L)
    K[1, 1] = K[7, 7] = a
    K[7, 1] = -a
    K[5, 1] = b
    K[11, 1] = b
    K[7, 5] = -b
    K[11, 7] = -b
    K[5, 5] = K[11, 11] = c
    K[11, 5] = d

    # bending in the local x-z plane (w, ry)
    a = 12.0 * E * Iy / (hy * L ** 3)
    b = 6.0 * E * Iy / (hy * L ** 2)
    c = (4.0 + phi_y) * E * Iy / (hy * L)
    d = (2.0 - phi_y) * E * Iy / (hy * L)
    K[2, 2] = K[8, 8] = a
    K[8, 2] = -a
    K[4, 2] = -b
    K[10, 2] = -b
    K[8, 4] = b
    K[10, 8] = b
    K[4, 4] = K[10, 10] = c
    K[10, 4] = d

    return np.tril(K) + np.tril(K, -1).T


def _local_axes(a, b, ref):
    x = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    length = np.linalg.norm(x)
    if length == 0:
        raise ValueError("element end points coincide")
    x /= length
    ref = np.asarray(ref, dtype=float)
    y = np.cross(ref, x)
    if np.linalg.norm(y) < 1e-8 * max(np.linalg.norm(ref), 1e-300):
        fallback = np.array([0.0, 0.0, 1.0])
        if np.linalg.norm(np.cross(fallback, x)) < 1e-8:
            fallback = np.array([1.0, 0.0, 0.0])
        warnings.warn("reference vector parallel to element axis; using fallback "
                      f"{fallback.tolist()}", stacklevel=3)
        y = np.cross(fallback, x)
    y /= np.linalg.norm(y)
    z = np.cross(x, y)
    return np.array([x, y, z]), length


def element_rotation(a, b, ref):
    """Block-diagonal 12x12 transform T (local = T @ global).

    Local x runs from ``a`` to ``b``; local z is the part of ``ref``
    orthogonal to x, local y completes the right-handed triad.
    """
    R, _ = _local_axes(a, b, ref)
    return scipy.linalg.block_diag(R, R, R, R)


@dataclass(frozen=True)
class Element:
    id: str
    a: str
    b: str
    material: Material
    section: CrossSection
    ref: tuple = (0.0, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class Superelement:
    """A condensed stiffness block scattered onto the 6 DOFs of each node."""

    matrix: np.ndarray
    nodes: tuple
    name: str = ""

    def __post_init__(self):
        K = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", K)
        object.__setattr__(self, "nodes", tuple(str(n) for n in self.nodes))
        if K.shape != (6 * len(self.nodes),) * 2:
            raise AssemblyError(
                f"superelement {self.name!r}: k={K.shape} does not match 6 x "
                f"{len(self.nodes)} attached nodes")
        if len(set(self.nodes)) != len(self.nodes):
            raise AssemblyError(f"superelement {self.name!r} attaches a node twice")


@dataclass
class FrameModel:
    nodes: dict = field(default_factory=dict)
    elements: list = field(default_factory=list)
    supports: dict = field(default_factory=dict)
    loads: dict = field(default_factory=dict)
    superelements: list = field(default_factory=list)
    prescribed: dict = field(default_factory=dict)

    def add_node(self, nid, xyz):
        self.nodes[str(nid)] = np.asarray(xyz, dtype=float)
        return str(nid)

    def add_element(self, eid, a, b, material, section, ref=(0.0, 0.0, 1.0)):
        el = Element(str(eid), str(a), str(b), material, section, tuple(map(float, ref)))
        self.elements.append(el)
        return el

    def fix(self, nid, dofs=(True,) * 6, values=None):
        self.supports[str(nid)] = tuple(bool(d) for d in dofs)
        if values is not None:
            self.prescribed[str(nid)] = np.asarray(values, dtype=float)

    def add_load(self, nid, vector):
        nid = str(nid)
        self.loads[nid] = self.loads.get(nid, np.zeros(6)) + np.asarray(vector, dtype=float)

    def node_index(self):
        return {nid: i for i, nid in enumerate(self.nodes)}

    def validate(self):
        idx = self.node_index()
        for el in self.elements:
            for n in (el.a, el.b):
                if n not in idx:
                    raise AssemblyError(f"element {el.id} references missing node {n!r}")
            if np.linalg.norm(self.nodes[el.b] - self.nodes[el.a]) <= 0:
                raise AssemblyError(f"element {el.id} has zero length")
        for kind, table in (("support", self.supports), ("load", self.loads),
                            ("prescribed value", self.prescribed)):
            for n in table:
                if n not in idx:
                    raise AssemblyError(f"{kind} references missing node {n!r}")
        for se in self.superelements:
            for n in se.nodes:
                if n not in idx:
                    raise AssemblyError(
                        f"superelement {se.name!r} attached to missing node {n!r}")

    def rotated(self, R):
        """Copy of the model with geometry, loads and references rotated by R."""
        R = np.asarray(R, dtype=float)
        T6 = scipy.linalg.block_diag(R, R)
        m = FrameModel()
        for nid, x in self.nodes.items():
            m.nodes[nid] = R @ x
        for el in self.elements:
            m.elements.append(Element(el.id, el.a, el.b, el.material, el.section,
                                      tuple(R @ np.asarray(el.ref))))
        m.supports = dict(self.supports)
        m.loads = {n: T6 @ f for n, f in self.loads.items()}
        m.prescribed = {n: T6 @ v for n, v in self.prescribed.items()}
        for se in self.superelements:
            Tk = scipy.linalg.block_diag(*([T6] * len(se.nodes)))
            m.superelements.append(Superelement(Tk @ se.matrix @ Tk.T, se.nodes, se.name))
        return m


@dataclass(frozen=True, eq=False)
class GlobalSolution:
    """Nodal displacements/rotations and support reactions."""

    node_ids: tuple
    displacements: np.ndarray   # (n_nodes, 6): mm, rad
    reactions: np.ndarray       # (n_nodes, 6): N, N*mm; zero on free DOFs
    fixed: np.ndarray           # (n_nodes, 6) bool
    residual: float
    model: FrameModel = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.node_ids)})

    def at(self, nid):
        return self.displacements[self._index[str(nid)]].copy()

    def reaction(self, nid):
        return self.reactions[self._index[str(nid)]].copy()


def _element_matrices(model, idx):
    """Global-axes 12x12 element matrices and their DOF indices."""
    n_el = len(model.elements)
    Ks = np.empty((n_el, 12, 12))
    dofs = np.empty((n_el, 12), dtype=np.int64)
    for e, el in enumerate(model.elements):
        R, L = _local_axes(model.nodes[el.a], model.nodes[el.b], el.ref)
        T = scipy.linalg.block_diag(R, R, R, R)
        Ks[e] = T.T @ local_stiffness_timoshenko(el.material, el.section, L) @ T
        ia, ib = idx[el.a], idx[el.b]
        dofs[e, :6] = 6 * ia + np.arange(6)
        dofs[e, 6:] = 6 * ib + np.arange(6)
    return Ks, dofs


def assemble_global_stiffness(model):
    """Sparse symmetric global stiffness over beams and superelements."""
    model.validate()
    idx = model.node_index()
    n = 6 * len(idx)
    rows, cols, vals = [], [], []
    if model.elements:
        Ks, dofs = _element_matrices(model, idx)
        rows.append(np.repeat(dofs, 12, axis=1).ravel())
        cols.append(np.tile(dofs, (1, 12)).ravel())
        vals.append(Ks.ravel())
    for se in model.superelements:
        d = np.concatenate([6 * idx[nid] + np.arange(6) for nid in se.nodes])
        k = len(d)
        rows.append(np.repeat(d, k))
        cols.append(np.tile(d, k))
        vals.append(se.matrix.ravel())
    if not rows:
        return sp.csr_matrix((n, n))
    K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n, n)).tocsr()
    K.sum_duplicates()
    return K


def _count_zero_modes(Kff, tol=1e-10):
    if Kff.shape[0] == 0:
        return 0
    if Kff.shape[0] <= 3000:
        w = np.linalg.eigvalsh(Kff.toarray())
        scale = max(np.abs(w).max(), 1e-300)
        return int(np.sum(w < tol * scale))
    return -1


def assemble_and_solve(model: FrameModel) -> GlobalSolution:
    """Assemble beams plus superelements, eliminate supports and solve K u = f."""
    K = assemble_global_stiffness(model)
    idx = model.node_index()
    n_nodes = len(idx)
    n = 6 * n_nodes
    f = np.zeros(n)
    for nid, load in model.loads.items():
        f[6 * idx[nid]:6 * idx[nid] + 6] += load
    fixed = np.zeros((n_nodes, 6), dtype=bool)
    u = np.zeros(n)
    for nid, flags in model.supports.items():
        fixed[idx[nid]] = flags
    for nid, vals in model.prescribed.items():
        u[6 * idx[nid]:6 * idx[nid] + 6] = np.where(fixed[idx[nid]], vals, 0.0)
    fixed_flat = fixed.ravel()
    free = np.nonzero(~fixed_flat)[0]
    Kff = K[free][:, free].tocsc()
    rhs = f[free] - K[free] @ u
    if len(free):
        try:
            lu = spla.splu(Kff, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                           options={"SymmetricMode": True})
        except RuntimeError as exc:
            raise SingularSystemError(max(_count_zero_modes(Kff), 1), str(exc)) from None
        diag = np.abs(lu.U.diagonal())
        if diag.min() <= 1e-10 * diag.max():
            count = _count_zero_modes(Kff)
            if count != 0:
                raise SingularSystemError(count if count > 0 else int(np.sum(diag <= 1e-10 * diag.max())))
        u[free] = lu.solve(rhs)
    Ku = K @ u
    reactions = np.where(fixed_flat, Ku - f, 0.0)
    free_res = Ku[free] - f[free]
    # |K||u| keeps the scale meaningful when only support motion loads the model
    fnorm = max(np.linalg.norm(f), np.linalg.norm(reactions),
                np.linalg.norm(abs(K) @ np.abs(u)), 1e-300)
    residual = float(np.linalg.norm(free_res) / fnorm) if len(free) else 0.0
    if not np.all(np.isfinite(u)) or residual > 1e-10:
        count = _count_zero_modes(Kff)
        raise SingularSystemError(count if count > 0 else 1,
                                  f"relative residual {residual:.3e}")
    return GlobalSolution(tuple(idx), u.reshape(n_nodes, 6), reactions.reshape(n_nodes, 6),
                          fixed, residual, model)


def internal_actions(element: Element, solution: GlobalSolution):
    """Element end forces ``K_e u_e`` in local axes.

    Entries follow the local DOF order at node a then node b. Axial force
    (tension positive) is entry 6; entry 0 equals its negative.
    """
    model = solution.model
    R, L = _local_axes(model.nodes[element.a], model.nodes[element.b], element.ref)
    T = scipy.linalg.block_diag(R, R, R, R)
    ue = np.concatenate([solution.at(element.a), solution.at(element.b)])
    return local_stiffness_timoshenko(element.material, element.section, L) @ (T @ ue)


@dataclass(frozen=True)
class BucklingCheck:
    passed: bool
    ratio: float
    critical_load: float

    def __bool__(self):
        return self.passed


def euler_buckling_check(element: Element, axial_force: float, length: float,
                         k_eff: float = 1.0) -> BucklingCheck:
    """Compare a compressive force (positive = compression) with the Euler load."""
    I = min(element.section.Iy, element.section.Iz)
    p_cr = np.pi ** 2 * element.material.E * I / (k_eff * length) ** 2
    ratio = max(float(axial_force), 0.0) / p_cr
    return BucklingCheck(ratio < 1.0, ratio, p_cr)


def rigid_body_modes(points, center=None):
    """Six rigid motions sampled at ``points`` as a (6, N*6) array of DOF vectors.

    Each row carries (u, theta) per point: three unit translations followed by
    three linearised unit rotations about ``center``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    c = np.zeros(3) if center is None else np.asarray(center, dtype=float)
    modes = np.zeros((6, len(pts), 6))
    for a in range(3):
        modes[a, :, a] = 1.0
        e = np.zeros(3)
        e[a] = 1.0
        modes[3 + a, :, :3] = np.cross(e, pts - c)
        modes[3 + a, :, 3 + a] = 1.0
    return modes.reshape(6, -1)
