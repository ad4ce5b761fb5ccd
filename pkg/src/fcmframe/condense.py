"""Static condensation of a resolved 3D node model to a superelement.

Each of the ``k = 6 * n_interfaces`` boundary DOFs gets a unit-deformation
case: its interface moves as a rigid plane section (unit translation or
linearised unit rotation about the interface centroid) while every other
interface is held fixed. The FCM responses form the change-of-basis matrix
``N`` and the superelement is ``N^T K N``.
"""

from __future__ import annotations

import hashlib
import json
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .beam import rigid_body_modes
from .geometry.domain import DOF_ORDER, InterfaceSection
from .fcm.system import FcmSystem, build_system

__all__ = [
    "FcmParameters",
    "SubstructureSpec",
    "ChangeOfBasis",
    "CondensedStiffness",
    "ValidationReport",
    "TraceDeviationWarning",
    "plane_section_field",
    "unit_deformation_bc",
    "build_substructure_system",
    "compute_change_of_basis",
    "condense",
    "validate_condensed",
    "condensed_rigid_modes",
]


class TraceDeviationWarning(UserWarning):
    """A solved column does not reproduce its prescribed interface motion."""


@dataclass(frozen=True)
class FcmParameters:
    """Discretization settings of one node model.

    ``beta`` is the requested penalty; the node system lowers it when the
    penalized matrix is not numerically positive definite (see ``FcmSystem``).
    """

    resolution: tuple = (20, 8, 8)
    p: int = 3
    depth: int = 4
    beta: float = 1e14
    margin: float = 0.0
    samples: int = 3
    n_radial: int = 4
    n_theta: int = 48

    def __post_init__(self):
        res = tuple(int(r) for r in np.broadcast_to(np.asarray(self.resolution), (3,)))
        object.__setattr__(self, "resolution", res)

    def describe(self):
        return {"resolution": list(self.resolution), "p": self.p, "depth": self.depth,
                "beta": self.beta, "margin_mm": self.margin, "samples": self.samples,
                "n_radial": self.n_radial, "n_theta": self.n_theta}


@dataclass(frozen=True, eq=False)
class SubstructureSpec:
    """A node domain, its ordered interfaces and FCM parameters."""

    domain: object
    interfaces: tuple
    params: FcmParameters = field(default_factory=FcmParameters)
    name: str = "node"

    def __post_init__(self):
        ifaces = tuple(self.interfaces)
        if not ifaces:
            raise ValueError("a substructure needs at least one interface")
        if not all(isinstance(s, InterfaceSection) for s in ifaces):
            raise TypeError("interfaces must be InterfaceSection instances")
        object.__setattr__(self, "interfaces", ifaces)

    @property
    def k(self):
        return 6 * len(self.interfaces)

    @property
    def dof_order(self):
        return [(s.node_id, d) for s in self.interfaces for d in DOF_ORDER]

    def describe(self):
        return {"name": self.name, "domain": self.domain.describe(),
                "interfaces": [s.describe() for s in self.interfaces],
                "fcm": self.params.describe()}

    def digest(self):
        """SHA-256 of the canonical JSON description."""
        text = json.dumps(self.describe(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def plane_section_field(center, u, theta):
    """Rigid plane-section motion ``u + theta x (x - c)`` as a callable."""
    c = np.asarray(center, dtype=float)
    u = np.asarray(u, dtype=float)
    th = np.asarray(theta, dtype=float)

    def fieldfn(x):
        x = np.atleast_2d(x)
        return u + np.cross(th, x - c)

    return fieldfn


def _unit_vector(j):
    e = np.zeros(3)
    e[j] = 1.0
    return e


def unit_deformation_bc(spec, i, centroids=None):
    """Prescribed interface fields of unit-deformation case ``i``.

    Returns a list of ``(InterfaceSection, callable)`` covering every interface;
    only the interface owning DOF ``i`` moves.
    """
    if not 0 <= int(i) < spec.k:
        raise IndexError(f"DOF index {i} outside [0, {spec.k})")
    owner, local = divmod(int(i), 6)
    out = []
    for j, s in enumerate(spec.interfaces):
        c = s.centroid if centroids is None else centroids[j]
        if j != owner:
            out.append((s, plane_section_field(c, np.zeros(3), np.zeros(3))))
        elif local < 3:
            out.append((s, plane_section_field(c, _unit_vector(local), np.zeros(3))))
        else:
            out.append((s, plane_section_field(c, np.zeros(3), _unit_vector(local - 3))))
    return out


def build_substructure_system(spec) -> FcmSystem:
    """Assemble the node model and register every interface as a penalty region."""
    prm = spec.params
    system = build_system(spec.domain, prm.resolution, p=prm.p, depth=prm.depth,
                          beta=prm.beta, margin=prm.margin, samples=prm.samples)
    for j, s in enumerate(spec.interfaces):
        system.add_region(j, s.patch(prm.n_radial, prm.n_theta))
    return system


def _region_centroid(quad):
    return (quad.weights[:, None] * quad.points).sum(axis=0) / quad.weights.sum()


@dataclass(eq=False)
class ChangeOfBasis:
    """Full-field responses of the k unit-deformation cases, ``N`` is (n, k)."""

    N: np.ndarray
    system: FcmSystem
    centroids: np.ndarray
    trace_deviation: np.ndarray
    timings: dict
    residual: float = 0.0

    @property
    def k(self):
        return self.N.shape[1]


def _interface_basis(quad, centroid):
    """Rigid unit fields (P, 3, 6) of an interface at its quadrature points."""
    d = quad.points - centroid
    G = np.zeros((len(d), 3, 6))
    for a in range(3):
        G[:, a, a] = 1.0
        G[:, :, 3 + a] = np.cross(_unit_vector(a), d)
    return G


def compute_change_of_basis(spec, system=None, warn_tol=1e-3) -> ChangeOfBasis:
    """Solve the k unit-deformation cases with one factorization."""
    if system is None:
        system = build_substructure_system(spec)
    n = system.n_dofs
    k = spec.k
    t0 = time.perf_counter()
    # the factorization may lower beta, so it precedes the penalty loads
    handle = system.factorize()
    t1 = time.perf_counter()
    beta = system.beta
    quads = [system.regions[j] for j in range(len(spec.interfaces))]
    centroids = np.array([_region_centroid(q) for q in quads])
    R = np.zeros((n, k))
    bases = []
    for j, q in enumerate(quads):
        G = _interface_basis(q, centroids[j])
        bases.append(G)
        # beta * S^T (w * g) for all six unit fields at once
        R[:, 6 * j:6 * j + 6] = beta * (q.S.T @ (q.weights[:, None] * G.reshape(len(G), 18))) \
            .reshape(-1, 3, 6).reshape(n, 6)
    t2 = time.perf_counter()
    N = handle.solve(R)
    t3 = time.perf_counter()

    dev = np.zeros(k)
    for j, (q, G) in enumerate(zip(quads, bases)):
        U = q.S @ N.reshape(-1, 3, k).reshape(system.grid.n_nodes, 3 * k)
        U = U.reshape(len(q.points), 3, k)
        for i in range(k):
            target = G[:, :, i - 6 * j] if i // 6 == j else np.zeros((len(q.points), 3))
            err = U[:, :, i] - target
            ref = np.sqrt((bases[i // 6][:, :, i % 6] ** 2).sum(axis=1)
                          @ quads[i // 6].weights / quads[i // 6].weights.sum())
            e = np.sqrt((err ** 2).sum(axis=1) @ q.weights / q.weights.sum()) / ref
            dev[i] = max(dev[i], e)
    bad = np.flatnonzero(dev > warn_tol)
    for i in bad:
        nid, dof = spec.dof_order[i]
        warnings.warn(f"unit case {i} ({nid}:{dof}) interface trace deviates by "
                      f"{dev[i]:.2e} relative", TraceDeviationWarning, stacklevel=2)
    timings = dict(system.timings, factorize_s=t1 - t0, rhs_s=t2 - t1,
                   solve_s=t3 - t2)
    return ChangeOfBasis(N, system, centroids, dev, timings,
                         float(getattr(handle, "last_residual", 0.0)))


@dataclass(eq=False)
class CondensedStiffness:
    """Dense k x k superelement in interface DOF order.

    ``asymmetry`` is the relative asymmetry of the raw product before it was
    symmetrised.
    """

    matrix: np.ndarray
    dof_order: list
    provenance: str = ""
    asymmetry: float = 0.0
    centroids: np.ndarray | None = None

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("condensed stiffness must be square")
        if len(self.dof_order) != M.shape[0]:
            raise ValueError("dof order length does not match the matrix size")
        self.matrix = M

    @property
    def k(self):
        return self.matrix.shape[0]

    @property
    def nodes(self):
        seen = []
        for nid, _ in self.dof_order:
            if nid not in seen:
                seen.append(nid)
        return seen

    def scaled(self, c):
        return CondensedStiffness(c * self.matrix, list(self.dof_order), self.provenance,
                                  self.asymmetry, self.centroids)


def condense(K_n, N, dof_order=None, provenance="", centroids=None) -> CondensedStiffness:
    """``K_k = N^T K_n N`` symmetrised, with the raw asymmetry recorded."""
    N = np.asarray(N, dtype=float)
    if N.ndim != 2 or K_n.shape[1] != N.shape[0] or K_n.shape[0] != K_n.shape[1]:
        raise ValueError(f"dimension mismatch: K {K_n.shape} vs N {N.shape}")
    M = N.T @ (K_n @ N)
    M = np.asarray(M)
    scale = np.abs(M).max()
    asym = float(np.abs(M - M.T).max() / scale) if scale > 0 else 0.0
    M = 0.5 * (M + M.T)
    if dof_order is None:
        dof_order = [(str(i // 6), DOF_ORDER[i % 6]) for i in range(M.shape[0])]
    return CondensedStiffness(M, list(dof_order), provenance, asym, centroids)


def condensed_rigid_modes(centroids):
    """Six rigid motions on interface DOFs (rows), rotations about the origin."""
    return rigid_body_modes(np.asarray(centroids, dtype=float))


@dataclass
class ValidationReport:
    symmetry_error: float
    eigenvalues: np.ndarray
    nullity: int
    negative: int
    rigid_energy: float | None
    raw_asymmetry: float
    passed: bool
    messages: list

    def to_dict(self):
        return {"symmetry_error": self.symmetry_error,
                "eigenvalues": [float(v) for v in self.eigenvalues],
                "nullity": self.nullity, "negative_eigenvalues": self.negative,
                "rigid_energy_ratio": self.rigid_energy, "raw_asymmetry": self.raw_asymmetry,
                "passed": self.passed, "messages": list(self.messages)}


def validate_condensed(K_k, centroids=None, null_tol=1e-6, sym_tol=1e-8, asym_tol=1e-6,
                       expected_nullity=6):
    """Symmetry, spectrum, rigid-body nullity and rigid-motion energy checks.

    ``K_k`` may be a ``CondensedStiffness`` or a plain array; with centroids
    (from the object or the argument) the quadratic form of the six rigid
    motions is also checked.
    """
    raw_asym = 0.0
    if isinstance(K_k, CondensedStiffness):
        raw_asym = K_k.asymmetry
        if centroids is None:
            centroids = K_k.centroids
        M = K_k.matrix
    else:
        M = np.asarray(K_k, dtype=float)
    msgs = []
    scale = np.abs(M).max() if M.size else 0.0
    sym = float(np.abs(M - M.T).max() / scale) if scale > 0 else 0.0
    ev = np.linalg.eigvalsh(0.5 * (M + M.T))
    lam_max = float(np.abs(ev).max()) if ev.size else 0.0
    small = np.abs(ev) < null_tol * lam_max
    nullity = int(small.sum())
    negative = int(np.sum((ev < 0) & ~small))
    ok = True
    if sym > sym_tol:
        ok = False
        msgs.append(f"symmetry error {sym:.2e} exceeds {sym_tol:.0e}")
    if raw_asym > asym_tol:
        ok = False
        msgs.append(f"raw asymmetry {raw_asym:.2e} exceeds {asym_tol:.0e}")
    if negative:
        ok = False
        msgs.append(f"{negative} negative eigenvalue(s)")
    if expected_nullity is not None and nullity != expected_nullity:
        ok = False
        msgs.append(f"rigid-body nullity {nullity}, expected {expected_nullity}")
    energy = None
    if centroids is not None:
        r = condensed_rigid_modes(centroids)
        r = r / np.linalg.norm(r, axis=1, keepdims=True)
        energy = float(np.abs(np.einsum("ri,ij,rj->r", r, M, r)).max() / lam_max) \
            if lam_max > 0 else 0.0
        if energy > null_tol:
            ok = False
            msgs.append(f"rigid-motion energy ratio {energy:.2e} exceeds {null_tol:.0e}")
    return ValidationReport(sym, ev, nullity, negative, energy, raw_asym, ok, msgs)
