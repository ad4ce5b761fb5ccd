"""Shared fixtures and independent oracles for the test suite."""

import gc
import warnings

import numpy as np
import pytest

from fcmframe.material import Material

STEEL = Material(2.0e5, 0.3)


def cube_triangles(lo=(0.0, 0.0, 0.0), hi=(1.0, 1.0, 1.0)):
    """Closed, outward-oriented 12-triangle box."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    c = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float)
    v = lo + c * (hi - lo)
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    tris = []
    for a, b, cc, d in quads:
        tris.append([v[a], v[b], v[cc]])
        tris.append([v[a], v[cc], v[d]])
    return np.array(tris)


def tetra_triangles():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    return np.array([[v[0], v[2], v[1]], [v[0], v[1], v[3]], [v[0], v[3], v[2]],
                     [v[1], v[2], v[3]]])


def icosphere_triangles(radius=1.0, center=(0.0, 0.0, 0.0), subdivisions=2):
    t = (1.0 + 5 ** 0.5) / 2.0
    v = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t],
         [0, -1, -t], [0, 1, -t], [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    v = [np.array(p, float) / np.linalg.norm(p) for p in v]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    for _ in range(subdivisions):
        cache, nf = {}, []

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = v[a] + v[b]
                v.append(m / np.linalg.norm(m))
                cache[key] = len(v) - 1
            return cache[key]

        for a, b, c in f:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        f = nf
    V = np.asarray(center) + radius * np.array(v)
    return V[np.array(f)]


def ray_parity_oracle(triangles, points, direction):
    """Brute-force Moller-Trumbore crossing parity along one direction."""
    d = np.asarray(direction, float)
    d = d / np.linalg.norm(d)
    a, b, c = triangles[:, 0], triangles[:, 1], triangles[:, 2]
    e1, e2 = b - a, c - a
    pvec = np.cross(d, e2)
    det = np.einsum("ij,ij->i", e1, pvec)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    out = np.empty(len(points), dtype=bool)
    for i, p in enumerate(points):
        s = p - a
        u = np.einsum("ij,ij->i", s, pvec) * inv
        q = np.cross(s, e1)
        w = (q @ d) * inv
        t = np.einsum("ij,ij->i", e2, q) * inv
        hit = ok & (u >= 0) & (w >= 0) & (u + w <= 1) & (t > 0)
        out[i] = hit.sum() % 2 == 1
    return out


def uniform_block_displacement(grid, affine):
    """Coefficient vector of an affine field ``u = A x + c`` on a grid.

    Vertex modes carry nodal values; higher modes vanish for affine fields.
    """
    A, c = affine
    p = grid.p
    lat = [n * p + 1 for n in grid.shape]
    idx = np.stack(np.unravel_index(grid.node_raw, lat), axis=1)
    vertex = np.all(idx % p == 0, axis=1)
    X = grid.origin + (idx // p) * grid.h
    U = np.zeros((grid.n_nodes, 3))
    U[vertex] = X[vertex] @ np.asarray(A).T + np.asarray(c)
    return U.reshape(-1)


@pytest.fixture
def steel():
    return STEEL


@pytest.fixture(autouse=True)
def _collect():
    yield
    gc.collect()


def quiet(fn, *args, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fn(*args, **kwargs)


def tube_spec(L=400.0, resolution=(20, 8, 8), p=3, depth=3, E=2.0e5, beta=1e14, name="tube"):
    """Hollow 20/30 mm segment along x with interfaces at both ends."""
    from fcmframe.condense import FcmParameters, SubstructureSpec
    from fcmframe.geometry import Domain, HollowCylinder, InterfaceSection

    dom = Domain(HollowCylinder([0, 0, 0], [L, 0, 0], 20.0, 30.0), Material(E, 0.3))
    ifaces = [InterfaceSection([0, 0, 0], [-1, 0, 0], "a", radius=30.0, inner_radius=20.0),
              InterfaceSection([L, 0, 0], [1, 0, 0], "b", radius=30.0, inner_radius=20.0)]
    return SubstructureSpec(dom, ifaces, FcmParameters(resolution=resolution, p=p, depth=depth,
                                                       beta=beta), name)


def condensed_tube(**kw):
    from fcmframe.condense import compute_change_of_basis, condense

    spec = tube_spec(**kw)
    cob = quiet(compute_change_of_basis, spec)
    K = condense(cob.system.K, cob.N, spec.dof_order, spec.digest(), cob.centroids)
    return spec, cob, K


@pytest.fixture(scope="session")
def tube_condensed():
    """Desk-resolution condensation of the 400 mm hollow segment (about 25 s)."""
    spec, cob, K = condensed_tube()
    cob.system.release()
    return spec, cob, K


@pytest.fixture(scope="session")
def small_tube():
    """Coarse 100 mm segment for cheap structural checks."""
    return condensed_tube(L=100.0, resolution=(4, 3, 3), p=2, depth=2)


SMALL_JOB = """
name: small-tube
materials:
  steel: {{E_MPa: 2.0e5, nu: 0.3}}
sections:
  solid: {{circular: {{radius_mm: 30.0}}}}
nodes_mm:
  A: [-300.0, 0.0, 0.0]
  B: [0.0, 0.0, 0.0]
  C: [100.0, 0.0, 0.0]
  D: [400.0, 0.0, 0.0]
elements:
  - {{id: AB, a: A, b: B, material: steel, section: solid, divisions: 3}}
  - {{id: CD, a: C, b: D, material: steel, section: solid, divisions: 3}}
supports:
  A: [ux, uy, uz, rx, ry, rz]
loads:
  D: {{force_N: {force}}}
substructures:
  - name: tube
    material: steel
    geometry:
      hollow_cylinder: {{start_mm: [0.0, 0.0, 0.0], end_mm: [100.0, 0.0, 0.0],
                        r_in_mm: 20.0, r_out_mm: 30.0}}
    interfaces:
      - {{node: B, centroid_mm: [0.0, 0.0, 0.0], normal: [-1.0, 0.0, 0.0],
         radius_mm: 30.0, inner_radius_mm: 20.0}}
      - {{node: C, centroid_mm: [100.0, 0.0, 0.0], normal: [1.0, 0.0, 0.0],
         radius_mm: 30.0, inner_radius_mm: 20.0}}
    fcm: {{resolution: [4, 3, 3], p: 2, depth: 2}}
outputs:
  local_stress: [tube]
"""


def write_small_job(tmp_path, force="[0.0, 200.0, -15000.0]", name="job.yaml"):
    """Coarse tube job between two solid beams; default tip load 15 kN (-z) and 0.2 kN (+y)."""
    p = tmp_path / name
    p.write_text(SMALL_JOB.format(force=force))
    return p


def run_cli_pipeline(job, out, cache=None):
    """condense, solve-global and local-stress on the tube; returns the exit codes."""
    from fcmframe.cli import main

    extra = ["--cache", str(cache)] if cache else []
    return [main(["condense", "--job", str(job), "--node", "tube", "--out", str(out), *extra]),
            main(["solve-global", "--job", str(job), "--out", str(out), *extra]),
            main(["local-stress", "--job", str(job), "--node", "tube", "--out", str(out),
                  *extra])]
