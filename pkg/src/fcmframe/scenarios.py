"""Built-in scenarios: the two-scale cantilever check and a synthetic 5-arm node."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .beam import FrameModel, assemble_and_solve, section_circular, section_hollow_circular
from .condense import FcmParameters, SubstructureSpec
from .fcm.field import evaluate
from .geometry.domain import Domain, InterfaceSection
from .geometry.implicit import HollowCylinder, Sphere
from .material import Material
from .twoscale import Substructure, TwoScaleJob, pointwise_error, run_job

__all__ = [
    "CantileverOptions",
    "CantileverResult",
    "cantilever_job",
    "cantilever_reference",
    "verify_cantilever",
    "NodeVariant",
    "THICK_NODE",
    "THIN_NODE",
    "five_arm_node",
    "canopy_job",
    "connection_peak",
]


@dataclass(frozen=True)
class CantileverOptions:
    """Cantilever A-B-C-D clamped at A and loaded at D; BC is condensed.

    Lengths in mm, forces in N, moments in N*mm. ``refined`` switches to the
    finer grid and octree depth.
    """

    ab: float = 400.0
    bc: float = 200.0
    cd: float = 400.0
    element: float = 100.0
    r_solid: float = 30.0
    r_in: float = 20.0
    r_out: float = 30.0
    E: float = 2.0e5
    nu: float = 0.3
    force_N: tuple = (0.0, 0.0, 1.0)
    moment_Nmm: tuple = (0.0, 0.0, 100.0)
    resolution: tuple = (20, 8, 8)
    depth: int = 3
    p: int = 3
    refined_resolution: tuple = (26, 10, 10)
    refined_depth: int = 4
    refined: bool = False

    @property
    def fcm(self):
        if self.refined:
            return FcmParameters(resolution=self.refined_resolution, p=self.p,
                                 depth=self.refined_depth)
        return FcmParameters(resolution=self.resolution, p=self.p, depth=self.depth)

    @property
    def default_threshold(self):
        return 1e-3 if self.refined else 5e-3


def _stations(opts):
    total = opts.ab + opts.bc + opts.cd
    n = int(round(total / opts.element))
    xs = np.linspace(0.0, total, n + 1)
    for x in (opts.ab, opts.ab + opts.bc):
        if not np.any(np.isclose(xs, x)):
            raise ValueError("segment ends must fall on element boundaries")
    return xs


def _cantilever_frame(opts, condensed_bc):
    mat = Material(opts.E, opts.nu)
    solid = section_circular(opts.r_solid, opts.nu)
    hollow = section_hollow_circular(opts.r_in, opts.r_out, opts.nu)
    xB, xC = opts.ab, opts.ab + opts.bc
    xs = _stations(opts)
    m = FrameModel()
    names = {}
    for x in xs:
        inner = xB + 1e-9 < x < xC - 1e-9
        if condensed_bc and inner:
            continue
        name = "A" if x == 0 else "B" if np.isclose(x, xB) else "C" if np.isclose(x, xC) \
            else "D" if np.isclose(x, xs[-1]) else f"x{x:g}"
        names[float(x)] = m.add_node(name, [x, 0.0, 0.0])
    keys = sorted(names)
    for a, b in zip(keys[:-1], keys[1:]):
        in_bc = a >= xB - 1e-9 and b <= xC + 1e-9
        if condensed_bc and in_bc:
            continue
        m.add_element(f"{names[a]}-{names[b]}", names[a], names[b], mat,
                      hollow if in_bc else solid)
    m.fix("A")
    m.add_load("D", list(opts.force_N) + list(opts.moment_Nmm))
    return m, names


def cantilever_reference(opts=CantileverOptions()):
    """All-beam Timoshenko reference model and its solution."""
    m, names = _cantilever_frame(opts, condensed_bc=False)
    return m, assemble_and_solve(m), names


def cantilever_job(opts=CantileverOptions()):
    m, _ = _cantilever_frame(opts, condensed_bc=True)
    xB, xC = opts.ab, opts.ab + opts.bc
    mat = Material(opts.E, opts.nu)
    dom = Domain(HollowCylinder([xB, 0, 0], [xC, 0, 0], opts.r_in, opts.r_out), mat)
    ifaces = [InterfaceSection([xB, 0, 0], [-1, 0, 0], "B", radius=opts.r_out,
                               inner_radius=opts.r_in),
              InterfaceSection([xC, 0, 0], [1, 0, 0], "C", radius=opts.r_out,
                               inner_radius=opts.r_in)]
    spec = SubstructureSpec(dom, ifaces, opts.fcm, "BC")
    return TwoScaleJob(m, [Substructure("BC", spec)], ["BC"], "cantilever")


@dataclass(eq=False)
class CantileverResult:
    stations: np.ndarray          # x positions (mm) of reference beam nodes
    u_ref: np.ndarray             # (S, 3)
    u_ts: np.ndarray              # (S, 3), NaN inside the condensed segment
    error: np.ndarray             # (S,), NaN where undefined
    local_x: np.ndarray
    local_u: np.ndarray
    local_error: np.ndarray
    threshold: float
    report: object = field(repr=False)
    timings: dict = field(default_factory=dict)

    @property
    def max_error(self):
        vals = np.concatenate([self.error, self.local_error])
        vals = vals[np.isfinite(vals)]
        return float(vals.max()) if len(vals) else 0.0

    @property
    def worst(self):
        xs = np.concatenate([self.stations, self.local_x])
        vals = np.concatenate([self.error, self.local_error])
        vals = np.where(np.isfinite(vals), vals, -np.inf)
        i = int(np.argmax(vals))
        return float(xs[i]), float(vals[i])

    @property
    def passed(self):
        return self.max_error < self.threshold

    def table(self):
        """Rows of the error profile (global scale then local scale)."""
        rows = []
        for x, ur, ut, e in zip(self.stations, self.u_ref, self.u_ts, self.error):
            rows.append({"scale": "global", "x_mm": float(x),
                         "u_ref_mm": [float(v) for v in ur],
                         "u_ts_mm": None if np.isnan(ut).any() else [float(v) for v in ut],
                         "error": None if np.isnan(e) else float(e)})
        for x, ut, e in zip(self.local_x, self.local_u, self.local_error):
            rows.append({"scale": "local", "x_mm": float(x),
                         "u_ts_mm": [float(v) for v in ut],
                         "error": None if np.isnan(e) else float(e)})
        return rows


def _ring_average(field, x, radius, n=16):
    """Mean displacement over a ring of material points in the plane x = const."""
    t = 2 * np.pi * (np.arange(n) + 0.5) / n
    pts = np.stack([np.full(n, x), radius * np.cos(t), radius * np.sin(t)], axis=1)
    return evaluate(field, pts, gradients=False).u.mean(axis=0)


def verify_cantilever(opts=CantileverOptions(), threshold=None, cache=None):
    """Two-scale cantilever against the all-beam reference.

    Global-scale errors are taken at every reference beam node outside the
    condensed segment; local-scale errors compare the ring-averaged FCM
    displacement with the reference at beam nodes on [B, C].
    """
    threshold = opts.default_threshold if threshold is None else float(threshold)
    t0 = time.perf_counter()
    _, ref, names = cantilever_reference(opts)
    job = cantilever_job(opts)
    report = run_job(job, cache=cache)
    xs = np.array(sorted(names))
    u_ref = np.array([ref.at(names[x])[:3] for x in xs])
    u_ts = np.full_like(u_ref, np.nan)
    for i, x in enumerate(xs):
        nid = names[x]
        if nid in report.solution.node_ids:
            u_ts[i] = report.solution.at(nid)[:3]
    glob = ~np.isnan(u_ts).any(axis=1)
    err = np.full(len(xs), np.nan)
    err[glob] = pointwise_error(u_ref[glob], u_ts[glob])
    xB, xC = opts.ab, opts.ab + opts.bc
    on_bc = (xs >= xB - 1e-9) & (xs <= xC + 1e-9)
    local = report.local["BC"]
    ring_r = 0.5 * (opts.r_in + opts.r_out)
    lx = xs[on_bc]
    lu = np.array([_ring_average(local.field, x, ring_r) for x in lx])
    lerr = pointwise_error(u_ref[on_bc], lu)
    timings = dict(report.timings, total_s=time.perf_counter() - t0)
    return CantileverResult(xs, u_ref, u_ts, err, lx, lu, lerr, threshold, report, timings)


# synthetic five-arm node -------------------------------------------------

@dataclass(frozen=True)
class NodeVariant:
    """Spherical hub shell with five hollow arms (mm)."""

    name: str
    hub_radius: float = 40.0
    hub_inner: float = 28.0
    arm_length: float = 90.0
    arm_r_out: float = 20.0
    arm_r_in: float = 12.0


THICK_NODE = NodeVariant("thick", hub_inner=26.0)
THIN_NODE = NodeVariant("thin", hub_inner=36.0)

# one arm pointing down to the column, four branches rising at 35 degrees
_ELEV = np.deg2rad(35.0)
ARM_DIRECTIONS = np.array(
    [[0.0, 0.0, -1.0]]
    + [[np.cos(_ELEV) * np.cos(a), np.cos(_ELEV) * np.sin(a), np.sin(_ELEV)]
       for a in np.deg2rad([10.0, 100.0, 190.0, 280.0])])


def five_arm_node(variant, material, params=None, center=(0.0, 0.0, 0.0), alpha_exponent=10):
    """Node spec with interfaces at the arm ends (frame nodes ``<name>:armI``)."""
    c = np.asarray(center, dtype=float)
    hub = Sphere(c, variant.hub_radius) - Sphere(c, variant.hub_inner)
    shape = hub
    ifaces = []
    for i, d in enumerate(ARM_DIRECTIONS):
        start = c + d * variant.hub_inner
        end = c + d * variant.arm_length
        shape = shape | HollowCylinder(start, end, variant.arm_r_in, variant.arm_r_out)
        shape = shape - Sphere(c, variant.hub_inner)
        ifaces.append(InterfaceSection(end, d, f"arm{i}", radius=variant.arm_r_out,
                                       inner_radius=variant.arm_r_in))
    dom = Domain(shape, material, alpha_exponent)
    params = params or FcmParameters(resolution=(12, 12, 12), p=3, depth=3)
    return SubstructureSpec(dom, ifaces, params, f"node-{variant.name}")


def canopy_job(variant, params=None, branch_length=600.0, column_length=1000.0,
               tip_load=(0.0, 50.0, -3750.0)):
    """Column plus four branches meeting at one synthetic node.

    The column foot is clamped; every branch tip carries ``tip_load`` (N). The
    default totals 15 kN of compression and 0.2 kN of shear.
    """
    mat = Material(2.0e5, 0.3)
    spec = five_arm_node(variant, mat, params)
    sec = section_hollow_circular(variant.arm_r_in, variant.arm_r_out, mat.nu)
    m = FrameModel()
    for s in spec.interfaces:
        m.add_node(s.node_id, s.centroid)
    down = spec.interfaces[0]
    m.add_node("foot", down.centroid + down.normal * column_length)
    m.add_element("column", "foot", down.node_id, mat, sec, ref=(1.0, 0.0, 0.0))
    m.fix("foot")
    for i, s in enumerate(spec.interfaces[1:], start=1):
        tip = m.add_node(f"tip{i}", s.centroid + s.normal * branch_length)
        m.add_element(f"branch{i}", s.node_id, tip, mat, sec)
        m.add_load(tip, list(tip_load) + [0.0, 0.0, 0.0])
    return TwoScaleJob(m, [Substructure(spec.name, spec)], [spec.name], f"canopy-{variant.name}")


def connection_peak(result, variant, center=(0.0, 0.0, 0.0), tol=1.0):
    """Peak von Mises (MPa) and its location among samples in the hub region.

    The connection region is the ball of radius ``hub_radius + tol`` around
    the node center, which excludes the arm ends where the interface
    conditions are applied.
    """
    c = np.asarray(center, dtype=float)
    near = np.linalg.norm(result.samples - c, axis=1) <= variant.hub_radius + tol
    if not near.any():
        return 0.0, np.full(3, np.nan)
    i = np.flatnonzero(near)[np.argmax(result.von_mises[near])]
    return float(result.von_mises[i]), result.samples[i].copy()

