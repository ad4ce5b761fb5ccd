"""Finite cell kernel: basis, grid, quadrature, assembly, boundary terms, solver, fields."""

import time
import warnings

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

import fcmframe.fcm.system as fcm_system
from conftest import STEEL, cube_triangles, quiet, uniform_block_displacement
from fcmframe.fcm import (
    CUT,
    INSIDE,
    OUTSIDE,
    ElasticField,
    Factorization,
    FactorizationError,
    FcmSystem,
    NotPositiveDefiniteError,
    PenaltyReducedWarning,
    QuadratureScheme,
    assemble_unconstrained,
    box_moments,
    build_grid,
    build_system,
    cell_stiffness,
    elasticity_from_moments,
    evaluate,
    factorize,
    full_cell_stiffness,
    gauss_legendre,
    neumann_load,
    nodal_mask,
    pardiso_available,
    penalty_dirichlet,
    shape_functions,
    solve,
    surface_quadrature,
    triangle_rule,
    von_mises,
)
from fcmframe.fcm.assembly import assemble_cells, full_cell_stiffness as _kfull
from fcmframe.geometry import Box, Domain, GeometryError, HalfSpace, Sphere

coords = st.floats(-1.0, 1.0, allow_nan=False)


def reference_cell_stiffness(p, h, material):
    """Plain Gauss-point B-matrix integration, independent of the moment path."""
    q = p + 1
    g, w = gauss_legendre(q)
    lam, mu = material.lame
    D = np.zeros((6, 6))
    D[:3, :3] = lam
    D[np.arange(3), np.arange(3)] += 2 * mu
    D[np.arange(3, 6), np.arange(3, 6)] = mu
    m3 = (p + 1) ** 3
    K = np.zeros((3 * m3, 3 * m3))
    for a, wa in zip(g, w):
        for b, wb in zip(g, w):
            for c, wc in zip(g, w):
                _, dN = shape_functions(p, [a, b, c])
                grad = dN[0] * (2.0 / np.asarray(h))[:, None]
                B = np.zeros((6, 3 * m3))
                for i in range(3):
                    B[i, i::3] = grad[i]
                for r, (i, j) in enumerate([(1, 2), (0, 2), (0, 1)]):
                    B[3 + r, i::3] = grad[j]
                    B[3 + r, j::3] = grad[i]
                K += wa * wb * wc * np.prod(h) / 8.0 * B.T @ D @ B
    return K


class TestBasis:
    def test_trilinear_center(self):
        N, _ = shape_functions(1, [0, 0, 0])
        np.testing.assert_allclose(N[0], np.full(8, 0.125), rtol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(coords, coords, coords, st.integers(1, 6))
    def test_nodal_partition_of_unity(self, x, y, z, p):
        N, dN = shape_functions(p, [x, y, z])
        mask = nodal_mask(p)
        assert mask.sum() == 8
        assert abs(N[0, mask].sum() - 1.0) < 1e-14
        np.testing.assert_allclose(dN[0][:, mask].sum(axis=1), 0.0, atol=1e-14)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-0.99, 0.99), st.floats(-0.99, 0.99), st.floats(-0.99, 0.99))
    def test_gradients_match_central_differences(self, x, y, z):
        p, h = 3, 1e-6
        _, dN = shape_functions(p, [x, y, z])
        scale = np.abs(dN).max()
        for d in range(3):
            e = np.zeros(3)
            e[d] = h
            fd = (shape_functions(p, np.array([x, y, z]) + e)[0]
                  - shape_functions(p, np.array([x, y, z]) - e)[0])[0] / (2 * h)
            assert np.abs(fd - dN[0, d]).max() < 1e-6 * scale

    def test_internal_modes_vanish_at_ends(self):
        N, _ = shape_functions(3, [[1, 1, 1], [-1, -1, -1], [1, -1, 1]])
        np.testing.assert_allclose(N[:, ~nodal_mask(3)], 0.0, atol=1e-15)

    def test_outside_reference_cell(self):
        with pytest.raises(ValueError):
            shape_functions(3, [1.5, 0, 0])

    def test_full_tensor_space_size(self):
        N, dN = shape_functions(3, [0.1, 0.2, 0.3])
        assert N.shape == (1, 64) and dN.shape == (1, 3, 64)


class TestGrid:
    def test_cube_fills_grid(self):
        g = build_grid(Domain(Box([0, 0, 0], [2, 2, 2]), STEEL), 2, p=3)
        assert g.n_cells == 8
        assert np.all(g.active_status == INSIDE)
        assert g.n_nodes == 7 ** 3

    def test_sphere_corners_inactive(self):
        r, margin = 1.0, 0.25
        dom = Domain(Sphere([0, 0, 0], r), STEEL)
        g = build_grid(dom, 4, p=2, margin=margin)
        # independent oracle: 3x3x3 sample lattice per cell, direct distance test
        h = 2 * (r + margin) / 4
        t = np.linspace(0, 1, 3)
        expected = np.empty((4, 4, 4), dtype=int)
        for idx in np.ndindex(4, 4, 4):
            lo = -(r + margin) + np.array(idx) * h
            pts = lo + h * np.stack(np.meshgrid(t, t, t, indexing="ij"), -1).reshape(-1, 3)
            n_in = int(np.sum(np.linalg.norm(pts, axis=1) <= r))
            expected[idx] = OUTSIDE if n_in == 0 else INSIDE if n_in == 27 else CUT
        np.testing.assert_array_equal(g.status, expected)
        for corner in np.ndindex(2, 2, 2):
            assert g.status[tuple(3 * np.array(corner))] == OUTSIDE
        assert g.n_cells == int(np.sum(expected != OUTSIDE))

    def test_dof_map_is_conforming(self):
        g = build_grid(Domain(Box([0, 0, 0], [2, 1, 1]), STEEL), (2, 1, 1), p=3)
        # two cells share one face: 4x4 face modes
        shared = np.intersect1d(g.cell_nodes[0], g.cell_nodes[1])
        assert len(shared) == 16
        assert len(np.unique(g.cell_nodes)) == g.n_nodes == 2 * 64 - 16

    def test_dof_count_full_box(self):
        g = build_grid(Domain(Box([0, 0, 0], [3, 2, 4]), STEEL), (3, 2, 4), p=3)
        assert g.n_dofs == 3 * (10 * 7 * 13)

    def test_empty_active_set(self):
        dom = Domain(Sphere([0, 0, 0], 1.0), STEEL)
        with pytest.raises(GeometryError, match="no active cells"):
            build_grid(dom, 2, box=([5, 5, 5], [6, 6, 6]))

    @pytest.mark.parametrize("kw", [{"resolution": 0}, {"resolution": 2, "p": 9}, {"resolution": 2, "p": 0}])
    def test_invalid_parameters(self, kw):
        with pytest.raises(ValueError):
            build_grid(Domain(Sphere([0, 0, 0], 1.0), STEEL), **kw)

    def test_locate_face_points(self):
        g = build_grid(Domain(Box([0, 0, 0], [2, 2, 2]), STEEL), 2, p=1)
        cells, xi = g.locate([[1.0, 1.0, 1.0], [2.0, 2.0, 2.0], [5, 5, 5]])
        assert cells[0] >= 0 and cells[1] >= 0 and cells[2] == -1
        lo, hi = g.cell_bounds(cells[1])
        np.testing.assert_allclose(lo + (xi[1] + 1) / 2 * (hi - lo), [2, 2, 2])


def planar_cut_cell(frac=1.0 / 3.0, depth=3):
    # the cell [0, 3]^3 keeps x <= 3 * frac
    dom = Domain(Box([0, 0, 0], [3, 3, 3]) & HalfSpace([3 * frac, 0, 0], [1, 0, 0]), STEEL)
    g = build_grid(dom, 1, p=3, box=([0, 0, 0], [3, 3, 3]))
    return dom, g


class TestCellStiffness:
    def test_full_cell_matches_independent_integration(self):
        h = np.array([2.0, 3.0, 1.5])
        np.testing.assert_allclose(full_cell_stiffness(3, h, STEEL),
                                   reference_cell_stiffness(3, h, STEEL),
                                   rtol=0, atol=1e-12 * np.abs(full_cell_stiffness(3, h, STEEL)).max())

    def test_symmetric_psd_with_rigid_nullspace(self):
        K = full_cell_stiffness(2, np.ones(3), STEEL)
        np.testing.assert_array_equal(K, K.T)
        w = np.linalg.eigvalsh(K)
        assert np.sum(w < 1e-10 * w.max()) == 6

    def test_fully_fictitious_points_scale_by_alpha(self):
        # domain touches the cell only on its x=0 face: cut by sampling, no
        # quadrature point in the body
        dom = Domain(Box([-1, 0, 0], [0, 1, 1]), STEEL)
        g = build_grid(dom, 1, p=2, box=([0, 0, 0], [1, 1, 1]))
        assert g.active_status[0] == CUT
        K = cell_stiffness(g, 0, dom, QuadratureScheme(depth=2))
        np.testing.assert_allclose(K, 1e-10 * full_cell_stiffness(2, g.h, STEEL), rtol=1e-14, atol=0)

    def test_octree_convergence_planar_cut(self):
        dom, g = planar_cut_cell()
        assert g.active_status[0] == CUT
        # body-fitted oracle: the physical part is the box x in [-1, -1/3]
        M = box_moments(3, g.h, [[-1, -1, -1]], [[-1 / 3, 1, 1]])
        ref = dom.alpha * _kfull(3, g.h, STEEL) + (1 - dom.alpha) * elasticity_from_moments(M, STEEL)
        errs = []
        for depth in range(5):
            K = cell_stiffness(g, 0, dom, QuadratureScheme(depth=depth))
            errs.append(np.linalg.norm(K - ref) / np.linalg.norm(ref))
        assert all(b < a for a, b in zip(errs, errs[1:])), errs

    def test_cut_aligned_with_octree_is_exact(self):
        dom, g = planar_cut_cell(frac=0.5)
        M = box_moments(3, g.h, [[-1, -1, -1]], [[0, 1, 1]])
        ref = dom.alpha * _kfull(3, g.h, STEEL) + (1 - dom.alpha) * elasticity_from_moments(M, STEEL)
        K = cell_stiffness(g, 0, dom, QuadratureScheme(depth=1))
        assert np.linalg.norm(K - ref) <= 1e-12 * np.linalg.norm(ref)


@pytest.fixture(scope="module")
def cut_model():
    dom = Domain(Sphere([0, 0, 0], 10.0), STEEL)
    g = build_grid(dom, 4, p=2)
    return dom, g, assemble_unconstrained(g, dom, QuadratureScheme(depth=2))


class TestAssembly:
    def test_one_cell_equals_cell_matrix(self):
        dom = Domain(Box([0, 0, 0], [1, 2, 3]), STEEL)
        g = build_grid(dom, 1, p=3)
        K = assemble_unconstrained(g, dom).toarray()
        Kc = cell_stiffness(g, 0, dom)
        perm = g.dofs_of_cell(0)
        np.testing.assert_allclose(K[np.ix_(perm, perm)], Kc, rtol=0, atol=1e-13 * np.abs(Kc).max())

    def test_symmetric_and_psd(self, cut_model):
        _, g, K = cut_model
        assert abs(K - K.T).max() <= 1e-12 * abs(K).max()
        rng = np.random.default_rng(0)
        for _ in range(10):
            v = rng.normal(size=g.n_dofs)
            assert v @ (K @ v) >= 0

    def test_rigid_modes_in_near_nullspace(self, cut_model):
        dom, g, K = cut_model
        lat = np.stack(np.unravel_index(g.node_raw, g.lattice_shape), axis=1)
        vertex = np.all(lat % g.p == 0, axis=1)
        X = g.origin + (lat // g.p) * g.h
        normK = sp.linalg.norm(K)
        for a in range(6):
            U = np.zeros((g.n_nodes, 3))
            if a < 3:
                U[vertex, a] = 1.0
            else:
                e = np.eye(3)[a - 3]
                U[vertex] = np.cross(e, X[vertex] - [1.0, -2.0, 0.5])
            r = U.reshape(-1)
            assert np.linalg.norm(K @ r) <= max(dom.alpha, 1e-12) * normK * np.linalg.norm(r)

    def test_uncut_cells_independent_of_depth(self, cut_model):
        dom, g, _ = cut_model
        inside = np.flatnonzero(g.active_status == INSIDE)
        assert len(inside)
        c = int(inside[0])
        K1 = cell_stiffness(g, c, dom, QuadratureScheme(depth=1))
        K4 = cell_stiffness(g, c, dom, QuadratureScheme(depth=4))
        np.testing.assert_array_equal(K1, K4)

    def test_assembly_order_independent(self, cut_model):
        dom, g, K = cut_model
        mats = [(c, cell_stiffness(g, c, dom, QuadratureScheme(depth=2))) for c in range(g.n_cells)]
        rng = np.random.default_rng(3)
        K2 = assemble_cells(g, [mats[i] for i in rng.permutation(len(mats))])
        assert abs(K - K2).max() <= 1e-12 * abs(K).max()


def cube_face(axis, value, lo=0.0, hi=1.0):
    tris = cube_triangles([lo] * 3, [hi] * 3)
    keep = np.all(np.isclose(tris[:, :, axis], value), axis=1)
    return tris[keep]


class TestBoundary:
    def test_triangle_rule_degree_five(self):
        bary, w = triangle_rule()
        assert abs(w.sum() - 1) < 1e-14
        # int over the unit reference triangle of x^a y^b = a! b! / (a + b + 2)!
        from math import factorial
        for a in range(6):
            for b in range(6 - a):
                exact = factorial(a) * factorial(b) / factorial(a + b + 2)
                approx = 0.5 * np.sum(w * bary[:, 1] ** a * bary[:, 2] ** b)
                assert abs(approx - exact) < 1e-12

    def test_pressure_resultant(self):
        dom = Domain(Box([0, 0, 0], [2, 2, 2]), STEEL)
        g = build_grid(dom, 3, p=3)
        face = cube_face(0, 2.0, 0.0, 2.0)
        f = neumann_load(g, face, [-7.5, 0, 0], dom)
        # resultant = work against unit rigid translations (internal modes carry 0)
        F = [f @ uniform_block_displacement(g, (np.zeros((3, 3)), np.eye(3)[d])) for d in range(3)]
        np.testing.assert_allclose(F, [-7.5 * 4.0, 0, 0], rtol=1e-10, atol=1e-12)

    def test_zero_traction(self):
        dom = Domain(Box([0, 0, 0], [1, 1, 1]), STEEL)
        g = build_grid(dom, 1, p=2)
        assert not neumann_load(g, cube_face(2, 1.0), [0, 0, 0], dom).any()

    def test_zero_prescribed_field(self):
        dom = Domain(Box([0, 0, 0], [1, 1, 1]), STEEL)
        g = build_grid(dom, 1, p=2)
        P, b = penalty_dirichlet(g, cube_face(0, 0.0), np.zeros(3), domain=dom)
        assert not b.any() and P.nnz > 0
        assert abs(P - P.T).max() == 0

    def test_region_outside_every_cell(self):
        dom = Domain(Box([0, 0, 0], [1, 1, 1]), STEEL)
        g = build_grid(dom, 1, p=2)
        with pytest.raises(GeometryError):
            surface_quadrature(g, cube_triangles([5, 5, 5], [6, 6, 6]))

    def test_surface_area_exact(self):
        dom = Domain(Box([0, 0, 0], [1, 1, 1]), STEEL)
        g = build_grid(dom, 3, p=2)
        q = surface_quadrature(g, cube_triangles(), dom)
        assert abs(q.area - 6.0) < 1e-12 and q.dropped_area == 0.0

    def test_patch_test_affine_field(self):
        t0 = time.perf_counter()
        lo, hi = np.zeros(3), np.array([10.0, 8.0, 6.0])
        dom = Domain(Box(lo, hi), STEEL)
        system = build_system(dom, (2, 2, 2), p=3, depth=1)
        system.add_region("all", cube_triangles(lo, hi))
        A = np.array([[1.0, 0.4, -0.2], [0.3, -0.5, 0.7], [0.1, 0.6, 0.9]]) * 1e-3
        c = np.array([0.02, -0.01, 0.03])
        rhs = quiet(system.penalty_load, "all", lambda x: x @ A.T + c)
        u = system.solve(rhs)
        pts = np.random.default_rng(7).uniform(lo + 0.1, hi - 0.1, size=(1000, 3))
        got = ElasticField(system.grid, u, STEEL).displacement(pts)
        exact = pts @ A.T + c
        err = np.linalg.norm(got - exact, axis=1) / np.linalg.norm(exact, axis=1)
        assert err.max() < 1e-6
        assert time.perf_counter() - t0 < 30.0

    def test_constant_field_on_one_face(self):
        dom = Domain(Box([0, 0, 0], [1, 1, 1]), STEEL)
        system = build_system(dom, 2, p=3, depth=1)
        system.add_region("x0", cube_face(0, 0.0))
        u = system.solve(quiet(system.penalty_load, "x0", [0.1, -0.2, 0.05]))
        f = ElasticField(system.grid, u, STEEL)
        pts = np.random.default_rng(1).uniform(0, 1, size=(200, 3))
        pts[:100, 0] = 0.0
        got = f.displacement(pts)
        np.testing.assert_allclose(got, np.tile([0.1, -0.2, 0.05], (200, 1)), rtol=1e-6, atol=2e-7)


class TestSolver:
    @pytest.fixture
    def spd(self):
        rng = np.random.default_rng(0)
        B = sp.random(300, 300, density=0.02, random_state=1)
        A = (B @ B.T + sp.identity(300) * 0.5).tocsr()
        return A, rng.normal(size=(300, 30))

    @pytest.mark.parametrize("backend", ["splu", "auto"])
    def test_residual_and_zero_rhs(self, spd, backend):
        A, B = spd
        h = factorize(A, backend=backend)
        assert not solve(h, np.zeros(300)).any()
        X = solve(h, B)
        rel = np.linalg.norm(B - A @ X, axis=0) / np.linalg.norm(B, axis=0)
        assert rel.max() < 1e-8
        x0 = solve(h, B[:, 0])
        np.testing.assert_allclose(x0, X[:, 0], rtol=1e-10)

    @pytest.mark.parametrize("backend", ["splu", "auto"])
    def test_released_factor(self, spd, backend):
        A, B = spd
        h = factorize(A, backend=backend)
        h.free()
        h.free()
        with pytest.raises(FactorizationError, match="released"):
            h.solve(B[:, 0])

    @pytest.mark.parametrize("backend", ["splu"] + (["pardiso"] if pardiso_available() else []))
    def test_indefinite_rejected(self, backend):
        A = sp.csr_matrix(np.array([[2.0, 3.0, 0], [3.0, 2.0, 0], [0, 0, 1.0]]))
        with pytest.raises(NotPositiveDefiniteError):
            Factorization(A, backend=backend)

    def test_unconstrained_diagonal(self):
        with pytest.raises(FactorizationError, match="non-positive diagonal"):
            Factorization(sp.diags([1.0, 0.0, 2.0]).tocsr())

    def test_singular(self):
        A = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
        with pytest.raises(FactorizationError):
            Factorization(A, backend="splu")

    def test_wrong_rhs_length(self, spd):
        with pytest.raises(ValueError):
            factorize(spd[0], backend="splu").solve(np.ones(3))


class TestPenaltyBackoff:
    def test_beta_lowered_until_spd(self, monkeypatch):
        dom = Domain(Box([0, 0, 0], [1, 1, 1]), STEEL)
        system = build_system(dom, 1, p=1, beta=1e14)
        system.add_region("x0", cube_face(0, 0.0))
        real = fcm_system.Factorization
        calls = []

        def fake(A, **kw):
            calls.append(A.diagonal().max())
            if A.diagonal().max() > 1e10:
                raise NotPositiveDefiniteError("synthetic")
            return real(A, **kw)

        monkeypatch.setattr(fcm_system, "Factorization", fake)
        with pytest.warns(PenaltyReducedWarning):
            system.factorize()
        assert system.requested_beta == 1e14
        assert system.beta < 1e14 and len(calls) >= 2
        assert system.penalty.diagonal().max() <= 1e10

    def test_floor_raises(self, monkeypatch):
        dom = Domain(Box([0, 0, 0], [1, 1, 1]), STEEL)
        system = build_system(dom, 1, p=1, beta=1e14)
        system.add_region("x0", cube_face(0, 0.0))

        def fake(A, **kw):
            raise NotPositiveDefiniteError("synthetic")

        monkeypatch.setattr(fcm_system, "Factorization", fake)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with pytest.raises(FactorizationError, match="cannot be lowered"):
                system.factorize()

    def test_no_regions(self):
        dom = Domain(Box([0, 0, 0], [1, 1, 1]), STEEL)
        system = build_system(dom, 1, p=1)
        with pytest.raises(ValueError):
            system.factorize()


class TestField:
    @pytest.fixture
    def grid(self):
        return build_grid(Domain(Box([0, 0, 0], [2, 2, 2]), STEEL), 2, p=3)

    def field(self, grid, A, c=np.zeros(3)):
        return ElasticField(grid, uniform_block_displacement(grid, (np.asarray(A), c)), STEEL)

    def test_uniaxial(self, grid):
        e, nu = 1e-3, STEEL.nu
        f = self.field(grid, np.diag([e, -nu * e, -nu * e]))
        r = evaluate(f, np.random.default_rng(0).uniform(0, 2, size=(50, 3)))
        expect = np.zeros((3, 3))
        expect[0, 0] = STEEL.E * e
        np.testing.assert_allclose(r.stress, np.broadcast_to(expect, r.stress.shape),
                                   atol=1e-9 * STEEL.E * e)
        np.testing.assert_allclose(r.von_mises, STEEL.E * e, rtol=1e-9)

    def test_rigid_motion(self, grid):
        W = np.array([[0, -0.3, 0.2], [0.3, 0, -0.1], [-0.2, 0.1, 0]]) * 1e-2
        f = self.field(grid, W, np.array([1.0, 2.0, -1.0]))
        r = evaluate(f, np.random.default_rng(1).uniform(0, 2, size=(50, 3)))
        assert np.abs(r.strain).max() < 1e-15
        assert np.abs(r.stress).max() < 1e-9

    def test_pure_shear(self, grid):
        gamma = 2e-3
        f = self.field(grid, [[0, gamma, 0], [0, 0, 0], [0, 0, 0]])
        r = evaluate(f, [[0.5, 1.5, 0.7]])
        assert r.von_mises[0] == pytest.approx(np.sqrt(3) * STEEL.G * gamma, rel=1e-12)
        assert r.strain[0, 0, 1] == pytest.approx(gamma / 2, rel=1e-12)

    def test_outside(self, grid):
        f = self.field(grid, np.zeros((3, 3)))
        with pytest.raises(ValueError, match="outside"):
            evaluate(f, [[3.0, 0, 0]])

    def test_wrong_length(self, grid):
        with pytest.raises(ValueError):
            ElasticField(grid, np.zeros(5), STEEL)

    def test_continuity_across_faces(self, grid):
        rng = np.random.default_rng(2)
        f = ElasticField(grid, rng.normal(size=grid.n_dofs), STEEL)
        yz = rng.uniform(0, 2, size=(20, 2))
        left = np.column_stack([np.full(20, 1.0 - 1e-13), yz])
        right = np.column_stack([np.full(20, 1.0 + 1e-13), yz])
        np.testing.assert_allclose(f.displacement(left), f.displacement(right), atol=1e-9)

    def test_von_mises_hydrostatic_zero(self):
        assert von_mises(5.0 * np.eye(3)) == pytest.approx(0.0, abs=1e-12)
