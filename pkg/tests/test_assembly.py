"""Operator assembly against hand integrals and dense oracles."""

import numpy as np
import pytest

from qlcsim.assembly import (
    assemble_elliptic,
    assemble_mass,
    assemble_q_system,
    assemble_stiffness,
    q_system_matrix,
)
from qlcsim.mesh import (
    NodalField,
    TriMesh,
    build_rect_mesh,
    interpolate_nodal,
    quadrature,
    values_at_quadrature,
)
from qlcsim.qtensor import MaterialParams, TruncationConfig
from qlcsim.sparse import cg_solve, spmv

PARAMS = MaterialParams(
    a=-0.3, b=-4.0, c=4.0, beta1=8.0, beta2=8.0,
    m=1.0, l=1.0, eps1=2.5, eps2=0.5, eps3=0.01,
)
NO_TRUNC = TruncationConfig(mode="none")
ZERO_BULK = MaterialParams(
    a=0.0, b=0.0, c=0.0, beta1=0.0, beta2=0.0,
    m=1.0, l=1.0, eps1=2.5, eps2=0.0, eps3=0.0,
)


def reference_mesh():
    return TriMesh(
        nodes=np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
        triangles=np.array([[0, 1, 2]]),
        boundary_mask=np.array([True, True, True]),
        x_min=0.0, x_max=1.0, y_min=0.0, y_max=1.0, nx=1, ny=1,
    )


def tensor_field(mesh, fq):
    """NodalField with 4 components from a callable (x, y) -> 2x2 array."""
    vals = np.array([np.asarray(fq(x, y), dtype=float).ravel() for x, y in mesh.nodes])
    return NodalField(mesh, 4, vals)


def cross2(u, v):
    return u[0] * v[1] - u[1] * v[0]


def dense_mass(mesh):
    """Independent O(n^2) mass assembly with the analytic element block."""
    n = mesh.n_nodes
    out = np.zeros((n, n))
    for tri in mesh.triangles:
        p = mesh.nodes[tri]
        area = 0.5 * abs(cross2(p[1] - p[0], p[2] - p[0]))
        for i in range(3):
            for j in range(3):
                out[tri[i], tri[j]] += area / 12.0 * (2.0 if i == j else 1.0)
    return out


def dense_stiffness(mesh):
    n = mesh.n_nodes
    out = np.zeros((n, n))
    for tri in mesh.triangles:
        p = mesh.nodes[tri]
        area = 0.5 * abs(cross2(p[1] - p[0], p[2] - p[0]))
        g = np.zeros((3, 2))
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            g[i] = [p[j][1] - p[k][1], p[k][0] - p[j][0]]
        g /= 2.0 * area
        out[np.ix_(tri, tri)] += area * (g @ g.T)
    return out


class TestMass:
    def test_total_mass_is_domain_area(self):
        mesh = build_rect_mesh(-0.5, 0.5, -0.5, 0.5, 6, 4)
        m = assemble_mass(mesh)
        assert m.to_dense().sum() == pytest.approx(1.0, rel=1e-12)

    def test_reference_block(self):
        m = assemble_mass(reference_mesh()).to_dense()
        expected = np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24.0
        np.testing.assert_allclose(m, expected, atol=1e-15)

    def test_symmetric_and_matches_dense(self):
        mesh = build_rect_mesh(0, 1, 0, 2, 3, 5)
        m = assemble_mass(mesh).to_dense()
        np.testing.assert_array_equal(m, m.T)
        np.testing.assert_allclose(m, dense_mass(mesh), atol=1e-14)


class TestStiffness:
    def test_rows_sum_to_zero(self):
        mesh = build_rect_mesh(-1, 2, 0, 1, 5, 3)
        k = assemble_stiffness(mesh).to_dense()
        np.testing.assert_allclose(k.sum(axis=1), 0.0, atol=1e-12)

    def test_reference_block(self):
        k = assemble_stiffness(reference_mesh()).to_dense()
        expected = 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1.0]])
        np.testing.assert_allclose(k, expected, atol=1e-15)

    def test_energy_of_linear_field(self):
        mesh = build_rect_mesh(-0.5, 0.5, -0.5, 0.5, 8, 8)
        k = assemble_stiffness(mesh)
        x = interpolate_nodal(mesh, lambda t, x, y: x).values[:, 0]
        assert x @ spmv(k, x) == pytest.approx(1.0, rel=1e-12)

    def test_matches_dense(self):
        mesh = build_rect_mesh(0, 1, 0, 1, 4, 4)
        np.testing.assert_allclose(
            assemble_stiffness(mesh).to_dense(), dense_stiffness(mesh), atol=1e-13
        )


class TestElliptic:
    def solve(self, step):
        x, rep = cg_solve(step.matrix, step.rhs[:, 0], tol=1e-13)
        assert rep.converged
        return x

    def test_zero_q_linear_g_exact(self):
        mesh = build_rect_mesh(-0.5, 0.5, -0.5, 0.5, 6, 6)
        q = NodalField.zeros(mesh, 4)
        g = interpolate_nodal(mesh, lambda t, x, y: x)
        step = assemble_elliptic(mesh, q, g, PARAMS, NO_TRUNC)
        u_hat = self.solve(step)
        # u = u_hat + g must equal the interpolant of x, i.e. u_hat = 0
        assert np.max(np.abs(u_hat)) <= 1e-10

    def test_constant_q_linear_g_exact(self):
        mesh = build_rect_mesh(-0.5, 0.5, -0.5, 0.5, 5, 5)
        tcfg = TruncationConfig(mode="smooth_clamp", r=2.0, eps_t=0.0)
        qconst = np.array([[0.3, 0.0], [0.0, -0.3]])
        q = tensor_field(mesh, lambda x, y: qconst)
        g = interpolate_nodal(mesh, lambda t, x, y: 2 * x - y)
        step = assemble_elliptic(mesh, q, g, PARAMS, tcfg)
        u_hat = self.solve(step)
        assert np.max(np.abs(u_hat)) <= 1e-10

    def test_spd_with_experiment_coercivity_margin(self):
        # eps1 - R|eps2| = 2.5 - 2*0.5 = 1.5 > 0
        mesh = build_rect_mesh(-0.5, 0.5, -0.5, 0.5, 8, 8)
        tcfg = TruncationConfig(mode="smooth_clamp", r=2.0, eps_t=None)
        rng = np.random.default_rng(2)
        vals = rng.normal(scale=3.0, size=(mesh.n_nodes, 4))
        vals[:, 2] = vals[:, 1]
        vals[:, 3] = -vals[:, 0]
        q = NodalField(mesh, 4, vals)
        g = interpolate_nodal(mesh, lambda t, x, y: x * y)
        step = assemble_elliptic(mesh, q, g, PARAMS, tcfg)
        x, rep = cg_solve(step.matrix, rng.normal(size=mesh.n_nodes))
        assert rep.converged  # SPD probe: CG ran to tolerance without breakdown

    def test_coercivity_warning(self):
        mesh = build_rect_mesh(0, 1, 0, 1, 2, 2)
        tcfg = TruncationConfig(mode="smooth_clamp", r=10.0, eps_t=0.0)
        q = NodalField.zeros(mesh, 4)
        g = interpolate_nodal(mesh, lambda t, x, y: x)
        with pytest.warns(UserWarning, match="coercivity"):
            assemble_elliptic(mesh, q, g, PARAMS, tcfg)

    def test_matrix_matches_dense_oracle(self):
        # same bilinear form assembled densely with midpoint quadrature
        mesh = build_rect_mesh(-0.5, 0.5, -0.5, 0.5, 3, 3)
        q = tensor_field(mesh, lambda x, y: np.array([[0.2 * x, 0.1 * y], [0.1 * y, -0.2 * x]]))
        g = interpolate_nodal(mesh, lambda t, x, y: x)
        step = assemble_elliptic(mesh, q, g, PARAMS, NO_TRUNC)

        n = mesh.n_nodes
        dense = np.zeros((n, n))
        qt = q.as_tensors()
        for tri in mesh.triangles:
            p = mesh.nodes[tri]
            area = 0.5 * abs(cross2(p[1] - p[0], p[2] - p[0]))
            grads = np.zeros((3, 2))
            for i in range(3):
                j, k = (i + 1) % 3, (i + 2) % 3
                grads[i] = [p[j][1] - p[k][1], p[k][0] - p[j][0]]
            grads /= 2 * area
            mids = [(0, 1), (1, 2), (2, 0)]
            coef = np.zeros((2, 2))
            for ia, ib in mids:
                qmid = 0.5 * (qt[tri[ia]] + qt[tri[ib]])
                coef += (PARAMS.eps1 * np.eye(2) + PARAMS.eps2 * qmid) / 3.0
            for i in range(3):
                for j in range(3):
                    dense[tri[i], tri[j]] += area * grads[i] @ coef @ grads[j]
        # interior block only: assemble_elliptic has boundary rows eliminated
        free = ~mesh.boundary_mask
        got = step.matrix.to_dense()
        np.testing.assert_allclose(got[np.ix_(free, free)], dense[np.ix_(free, free)], atol=1e-12)


class TestQSystem:
    def make_fields(self, mesh):
        q0 = NodalField.zeros(mesh, 4)
        u0 = NodalField.zeros(mesh, 1)
        g0 = NodalField.zeros(mesh, 1)
        return q0, u0, g0

    def test_zero_fixed_point(self):
        mesh = build_rect_mesh(-0.5, 0.5, -0.5, 0.5, 4, 4)
        q0, u0, g0 = self.make_fields(mesh)
        p = MaterialParams(a=-0.3, b=-4, c=4, beta1=8, beta2=8, m=1, l=1,
                           eps1=2.5, eps2=0.0, eps3=0.0)
        step = assemble_q_system(mesh, q0, u0, u0, q0, g0, p, NO_TRUNC, dt=0.01)
        for comp in range(4):
            x, rep = cg_solve(step.matrix, step.rhs[:, comp])
            assert rep.converged
            assert np.max(np.abs(x)) <= 1e-14

    def test_matrix_independent_of_iterate(self):
        mesh = build_rect_mesh(-0.5, 0.5, -0.5, 0.5, 4, 4)
        q0, u0, g0 = self.make_fields(mesh)
        rng = np.random.default_rng(8)
        qa = NodalField(mesh, 4, rng.normal(size=(mesh.n_nodes, 4)))
        qb = NodalField(mesh, 4, rng.normal(size=(mesh.n_nodes, 4)))
        ua = NodalField(mesh, 1, rng.normal(size=(mesh.n_nodes, 1)))
        s1 = assemble_q_system(mesh, q0, u0, ua, qa, g0, PARAMS, NO_TRUNC, dt=0.01)
        s2 = assemble_q_system(mesh, q0, ua, u0, qb, g0, PARAMS, NO_TRUNC, dt=0.01)
        assert s1.matrix.structure_bytes() == s2.matrix.structure_bytes()
        assert np.any(s1.rhs != s2.rhs)

    def test_decoupled_identical_blocks(self):
        # with eps2 = eps3 = 0 the four component systems share the matrix and
        # differ only through their right-hand sides
        mesh = build_rect_mesh(-0.5, 0.5, -0.5, 0.5, 3, 3)
        q0, u0, g0 = self.make_fields(mesh)
        rng = np.random.default_rng(1)
        qn = NodalField(mesh, 4, rng.normal(size=(mesh.n_nodes, 4)))
        p = MaterialParams(a=-0.3, b=-4, c=4, beta1=8, beta2=8, m=1, l=1,
                           eps1=2.5, eps2=0.0, eps3=0.0)
        step = assemble_q_system(mesh, qn, u0, u0, qn, g0, p, NO_TRUNC, dt=0.01)
        assert step.components == 4
        assert step.rhs.shape == (mesh.n_nodes, 4)

    def test_crank_nicolson_heat_oracle(self):
        # eps2 = eps3 = 0 and bulk disabled: one step must match the dense
        # Crank-Nicolson update (Mass/dt + K/2) q1 = (Mass/dt - K/2) q0
        mesh = build_rect_mesh(-0.5, 0.5, -0.5, 0.5, 4, 4)
        u0 = NodalField.zeros(mesh, 1)
        g0 = NodalField.zeros(mesh, 1)
        qf = lambda x, y: np.array([[0.0, x], [x, 0.0]])
        qn = tensor_field(mesh, qf)
        # zero the boundary so the homogeneous Dirichlet data is consistent
        qn.values[mesh.boundary_mask] = 0.0
        dt = 0.05
        step = assemble_q_system(mesh, qn, u0, u0, qn, g0, ZERO_BULK, NO_TRUNC, dt=dt)

        mas = dense_mass(mesh)
        stf = dense_stiffness(mesh)
        free = ~mesh.boundary_mask
        lhs = mas / dt + stf / 2
        rhs = (mas / dt - stf / 2) @ qn.values
        expected = qn.values.copy()
        idx = np.ix_(free, free)
        expected[free] = np.linalg.solve(lhs[idx], rhs[free][:, [0, 1, 2, 3]] )

        for comp in range(4):
            x, rep = cg_solve(step.matrix, step.rhs[:, comp], tol=1e-13)
            assert rep.converged
            np.testing.assert_allclose(x, expected[:, comp], atol=1e-9)

    def test_quadrature_refinement_stability(self):
        # degree-6 rhs within 1e-3 relative of the degree-4 default on
        # experiment-1 style data
        mesh = build_rect_mesh(-0.5, 0.5, -0.5, 0.5, 8, 8)
        poly = lambda x, y: (x + 0.5) * (x - 0.5) * (y + 0.5) * (y - 0.5)
        qn = tensor_field(mesh, lambda x, y: np.array(
            [[0.0, poly(x, y) ** 2], [poly(x, y) ** 2, 0.0]]))
        g = interpolate_nodal(
            mesh, lambda t, x, y: 10 * np.sin(0.2) * (x + 0.5) * np.sin(np.pi * y)
        )
        u = NodalField(mesh, 1, g.values.copy())
        uh = NodalField.zeros(mesh, 1)
        rng = np.random.default_rng(4)
        qi = NodalField(mesh, 4, qn.values + 0.01 * rng.normal(size=qn.values.shape))
        s4 = assemble_q_system(mesh, qn, u, uh, qi, g, PARAMS, NO_TRUNC, dt=0.01,
                               quad_degree=4)
        s6 = assemble_q_system(mesh, qn, u, uh, qi, g, PARAMS, NO_TRUNC, dt=0.01,
                               quad_degree=6)
        denom = np.linalg.norm(s4.rhs)
        assert np.linalg.norm(s6.rhs - s4.rhs) / denom <= 1e-3

    def test_dt_guard(self):
        mesh = build_rect_mesh(0, 1, 0, 1, 2, 2)
        q0, u0, g0 = self.make_fields(mesh)
        with pytest.raises(ValueError):
            assemble_q_system(mesh, q0, u0, u0, q0, g0, PARAMS, NO_TRUNC, dt=0.0)

    def test_matrix_symmetric_positive(self):
        mesh = build_rect_mesh(-0.5, 0.5, -0.5, 0.5, 5, 5)
        a = q_system_matrix(mesh, PARAMS, dt=0.01).to_dense()
        assert np.max(np.abs(a - a.T)) <= 1e-14
        assert np.all(np.linalg.eigvalsh(a) > 0)
