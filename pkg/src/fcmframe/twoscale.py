"""Local-to-global and global-to-local coupling of condensed nodes and frames."""

from __future__ import annotations

import copy
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .beam import AssemblyError, FrameModel, GlobalSolution, Superelement, assemble_and_solve
from .condense import (
    CondensedStiffness,
    SubstructureSpec,
    build_substructure_system,
    compute_change_of_basis,
    condense,
    validate_condensed,
)
from .fcm.basis import gauss_legendre
from .fcm.field import ElasticField, evaluate
from .fcm.grid import CUT
from .geometry.domain import DOF_ORDER, classify_points
from .geometry.stl import TriangleSurface

__all__ = [
    "Substructure",
    "TwoScaleJob",
    "LocalBoundaryData",
    "LocalResult",
    "StageError",
    "CentroidMismatchWarning",
    "assemble_superelements",
    "extract_boundary_data",
    "boundary_rhs",
    "local_stress_analysis",
    "boundary_samples",
    "pointwise_error",
    "strain_energy",
    "run_job",
    "JobReport",
]


class StageError(RuntimeError):
    """Pipeline failure tagged with the stage that raised it."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


class CentroidMismatchWarning(UserWarning):
    """Interface centroid and attached frame node position disagree."""


@dataclass(eq=False)
class Substructure:
    """A node model attached to frame nodes.

    Either ``spec`` (condensed on demand) or ``condensed`` must be given. The
    attached frame nodes are the interface ``node_id`` values, in interface
    order.
    """

    name: str
    spec: SubstructureSpec | None = None
    condensed: CondensedStiffness | None = None
    system: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.spec is None and self.condensed is None:
            raise ValueError(f"substructure {self.name!r} needs a spec or a condensed matrix")

    @property
    def nodes(self):
        if self.spec is not None:
            return [s.node_id for s in self.spec.interfaces]
        return self.condensed.nodes


@dataclass(eq=False)
class TwoScaleJob:
    frame: FrameModel
    substructures: list = field(default_factory=list)
    local_stress: list = field(default_factory=list)   # substructure names
    name: str = "job"

    def validate(self):
        self.frame.validate()
        names = set()
        for sub in self.substructures:
            if sub.name in names:
                raise ValueError(f"duplicate substructure name {sub.name!r}")
            names.add(sub.name)
            nodes = sub.nodes
            if len(set(nodes)) != len(nodes):
                raise AssemblyError(f"substructure {sub.name!r} maps two interfaces to one node")
            for n in nodes:
                if n not in self.frame.nodes:
                    raise AssemblyError(f"substructure {sub.name!r} attached to missing node {n!r}")
        for n in self.local_stress:
            if n not in names:
                raise ValueError(f"local stress requested for unknown substructure {n!r}")


@dataclass
class LocalBoundaryData:
    """Per-interface (u, theta) from the global solution, rows in interface order."""

    node_ids: list
    values: np.ndarray   # (n_interfaces, 6)

    @property
    def vector(self):
        return self.values.reshape(-1)


def assemble_superelements(frame, condensed, nodes=None):
    """Copy of ``frame`` with each condensed matrix attached as a superelement.

    ``condensed`` is a list of ``CondensedStiffness``; their DOF order gives
    the attached nodes unless ``nodes`` lists them explicitly.
    """
    model = copy.copy(frame)
    model.superelements = list(frame.superelements)
    for i, K in enumerate(condensed):
        attach = K.nodes if nodes is None else nodes[i]
        for n in attach:
            if str(n) not in frame.nodes:
                raise AssemblyError(f"superelement attached to missing node {n!r}")
        expected = [(str(n), d) for n in attach for d in DOF_ORDER]
        if [(str(a), b) for a, b in K.dof_order] != expected:
            raise AssemblyError("condensed DOF order does not match the attached nodes")
        model.superelements.append(Superelement(K.matrix, tuple(attach), K.provenance[:12]))
    model.validate()
    return model


def extract_boundary_data(solution, nodes):
    """Copy the 6-vectors of the attached nodes from a solved global model."""
    if not isinstance(solution, GlobalSolution):
        raise ValueError("no solved global model supplied")
    if isinstance(nodes, (Substructure,)):
        nodes = nodes.nodes
    elif isinstance(nodes, (SubstructureSpec,)):
        nodes = [s.node_id for s in nodes.interfaces]
    elif isinstance(nodes, CondensedStiffness):
        nodes = nodes.nodes
    ids = [str(n) for n in nodes]
    return LocalBoundaryData(ids, np.array([solution.at(n) for n in ids]))


def boundary_rhs(system, centroids, data):
    """Penalty load for plane-section motions ``u_j + theta_j x (x - c_j)``."""
    vals = np.asarray(data.values if isinstance(data, LocalBoundaryData) else data, dtype=float)
    vals = vals.reshape(-1, 6)
    rhs = np.zeros(system.n_dofs)
    for j, (u, th) in enumerate(zip(vals[:, :3], vals[:, 3:])):
        c = centroids[j]
        rhs += system.penalty_load(j, lambda x, u=u, th=th, c=c: u + np.cross(th, x - c))
    return rhs


def _region_centroids(system, n):
    out = []
    for j in range(n):
        q = system.regions[j]
        out.append((q.weights[:, None] * q.points).sum(axis=0) / q.weights.sum())
    return np.array(out)


def boundary_samples(system):
    """Deterministic sample set near the node surface.

    Gauss points (p + 1 per direction) of cut cells that lie in the physical
    domain, plus the vertices of a triangle-surface geometry.
    """
    grid, domain = system.grid, system.domain
    cut = np.flatnonzero(grid.active_status == CUT)
    g, _ = gauss_legendre(grid.p + 1)
    ref = np.stack(np.meshgrid(g, g, g, indexing="ij"), -1).reshape(-1, 3)
    lo = grid.origin + np.stack(np.unravel_index(grid.active[cut], grid.shape), 1) * grid.h
    pts = (lo[:, None, :] + (ref[None] + 1.0) * grid.h / 2.0).reshape(-1, 3)
    if isinstance(domain.geometry, TriangleSurface):
        pts = np.concatenate([pts, np.unique(domain.geometry.triangles.reshape(-1, 3), axis=0)])
    pts = pts[classify_points(domain, pts)]
    cells, _ = grid.locate(pts)
    return pts[cells >= 0]


@dataclass(eq=False)
class LocalResult:
    field: ElasticField
    max_von_mises: float
    location: np.ndarray
    samples: np.ndarray
    von_mises: np.ndarray
    residual: float

    def summary(self):
        return {"max_von_mises_MPa": float(self.max_von_mises),
                "location_mm": [float(v) for v in self.location],
                "n_samples": int(len(self.samples)),
                "solve_residual": float(self.residual)}


def local_stress_analysis(spec, data, system=None, centroids=None, basis=None):
    """Local field of a node model driven by its interface motions.

    Parameters
    ----------
    spec : SubstructureSpec
    data : LocalBoundaryData or array_like
        Six values per interface in ``spec.dof_order``.
    system : FcmSystem, optional
        Reused, including its factorization, for the direct solve.
    centroids : array_like, optional
        Interface centroids the rotations refer to.
    basis : ChangeOfBasis, optional
        When given, the field is ``basis.N @ b``. This is the same solution
        as the direct solve, and it is exactly linear in ``b`` and
        consistent with the condensed matrix built from ``N``. Direct solves
        of strongly cut models carry round-off in the fictitious modes that
        breaks superposition well above machine precision.
    """
    n_if = len(spec.interfaces)
    vals = np.asarray(data.values if isinstance(data, LocalBoundaryData) else data, dtype=float)
    if vals.size != 6 * n_if:
        raise ValueError(f"boundary data has {vals.size} values, expected {6 * n_if}")
    if basis is not None:
        system = basis.system
        x = basis.N @ vals.reshape(-1)
        residual = basis.residual
    else:
        if system is None:
            system = build_substructure_system(spec)
        if centroids is None:
            centroids = _region_centroids(system, n_if)
        rhs = boundary_rhs(system, centroids, vals)
        handle = system.factorize()
        x = handle.solve(rhs)
        residual = getattr(handle, "last_residual", 0.0)
    fld = ElasticField(system.grid, x, spec.domain.material)
    pts = boundary_samples(system)
    vm = evaluate(fld, pts).von_mises if len(pts) else np.zeros(0)
    i = int(np.argmax(vm)) if len(vm) else 0
    loc = pts[i] if len(pts) else np.full(3, np.nan)
    return LocalResult(fld, float(vm[i]) if len(vm) else 0.0, loc, pts, vm, float(residual))


def strain_energy(field, K):
    """``0.5 * u^T K u`` of a local field."""
    return field.strain_energy(K)


def pointwise_error(u_ref, u_ts, samples=None, eps=1e-12):
    """Relative pointwise error ``|u_ref - u_ts| / |u_ref|``.

    ``u_ref``/``u_ts`` are arrays (P, d) or callables evaluated at ``samples``.
    Entries with ``|u_ref| < eps`` are NaN (undefined).
    """
    a = np.asarray(u_ref(samples) if callable(u_ref) else u_ref, dtype=float)
    b = np.asarray(u_ts(samples) if callable(u_ts) else u_ts, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"mismatched sample sets: {a.shape} vs {b.shape}")
    a = a.reshape(len(a), -1)
    b = b.reshape(len(b), -1)
    nr = np.linalg.norm(a, axis=1)
    e = np.full(len(a), np.nan)
    ok = nr >= eps
    e[ok] = np.linalg.norm(a[ok] - b[ok], axis=1) / nr[ok]
    return e


@dataclass(eq=False)
class JobReport:
    condensed: dict
    validation: dict
    model: FrameModel
    solution: GlobalSolution
    local: dict
    timings: dict
    changes_of_basis: dict = field(default_factory=dict, repr=False)

    def summary(self):
        disp = self.solution.displacements[:, :3]
        mags = np.linalg.norm(disp, axis=1)
        i = int(np.argmax(mags)) if len(mags) else 0
        return {
            "max_displacement_mm": float(mags[i]) if len(mags) else 0.0,
            "max_displacement_node": self.solution.node_ids[i] if len(mags) else None,
            "substructures": {name: {"k": int(K.k), "provenance": K.provenance,
                                     "asymmetry": K.asymmetry,
                                     "validation_passed": self.validation[name].passed}
                              for name, K in self.condensed.items()},
            "local_stress": {name: dict(r.summary(), units="MPa")
                             for name, r in self.local.items()},
        }


def _check_centroids(sub, frame, centroids, tol=1e-6):
    for c, s in zip(centroids, sub.spec.interfaces):
        d = float(np.linalg.norm(c - frame.nodes[s.node_id]))
        if d > tol:
            warnings.warn(f"{sub.name}: interface centroid for node {s.node_id} is {d:.3e} mm "
                          "from the frame node", CentroidMismatchWarning, stacklevel=3)


def run_job(job, cache=None, keep_systems=True):
    """Condense (unless precomputed), assemble, solve, then recover local stress.

    ``cache`` is an optional object with ``load(digest)`` / ``store(K)`` for
    condensed matrices.
    """
    timings = {}
    try:
        job.validate()
    except Exception as exc:
        raise StageError("validate", exc) from exc

    condensed, reports, cobs = {}, {}, {}
    for sub in job.substructures:
        t0 = time.perf_counter()
        try:
            K = sub.condensed
            if K is None:
                digest = sub.spec.digest()
                K = cache.load(digest) if cache is not None else None
                if K is None or (sub.name in job.local_stress and keep_systems):
                    cob = compute_change_of_basis(sub.spec)
                    cobs[sub.name] = cob
                    sub.system = cob.system
                    K = condense(cob.system.K, cob.N, sub.spec.dof_order, digest, cob.centroids)
                    if cache is not None:
                        cache.store(K)
                _check_centroids(sub, job.frame, K.centroids if K.centroids is not None
                                 else [s.centroid for s in sub.spec.interfaces])
            condensed[sub.name] = K
            reports[sub.name] = validate_condensed(K)
        except Exception as exc:
            raise StageError(f"condense:{sub.name}", exc) from exc
        timings[f"condense:{sub.name}_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    try:
        model = assemble_superelements(job.frame, [condensed[s.name] for s in job.substructures])
        sol = assemble_and_solve(model)
    except Exception as exc:
        raise StageError("solve-global", exc) from exc
    timings["solve_global_s"] = time.perf_counter() - t0

    local = {}
    for name in job.local_stress:
        sub = next(s for s in job.substructures if s.name == name)
        t0 = time.perf_counter()
        try:
            if sub.spec is None:
                raise ValueError("local stress needs the substructure geometry, not only a matrix")
            data = extract_boundary_data(sol, sub)
            cents = condensed[name].centroids
            local[name] = local_stress_analysis(sub.spec, data, sub.system, cents,
                                                basis=cobs.get(name))
        except Exception as exc:
            raise StageError(f"local-stress:{name}", exc) from exc
        timings[f"local:{name}_s"] = time.perf_counter() - t0
    return JobReport(condensed, reports, model, sol, local, timings, cobs)
