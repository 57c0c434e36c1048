"""Electric solve, fixed-point step, and the outer time loop."""

import numpy as np
import pytest

from conftest import dissipative_config
from qlcsim.config import preset_config
from qlcsim.diagnostics import constraint_residuals
from qlcsim.mesh import NodalField, build_rect_mesh, interpolate_nodal
from qlcsim.qtensor import MaterialParams, TruncationConfig
from qlcsim.stepping import (
    PicardNonConvergence,
    SimConfig,
    SimState,
    Stepper,
    run,
    solve_electric,
)

PARAMS = MaterialParams(
    a=-0.3, b=-4.0, c=4.0, beta1=8.0, beta2=8.0,
    m=1.0, l=1.0, eps1=2.5, eps2=0.5, eps3=0.01,
)
NO_TRUNC = TruncationConfig(mode="none")


def zero_tensor(x, y):
    return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape + (2, 2))


def plain_config(nx=6, dt=0.01, t_final=0.05, material=PARAMS, g=None, q0=None):
    return SimConfig(
        x_min=-0.5, x_max=0.5, y_min=-0.5, y_max=0.5, nx=nx, ny=nx,
        material=material, truncation=NO_TRUNC, dt=dt, t_final=t_final,
        g=g or (lambda t, x, y: np.zeros(np.shape(x))),
        q0=q0 or zero_tensor,
        q_boundary=zero_tensor,
    )


class TestSolveElectric:
    def test_zero_q_linear_g(self):
        mesh = build_rect_mesh(-0.5, 0.5, -0.5, 0.5, 6, 6)
        q = NodalField.zeros(mesh, 4)
        g = interpolate_nodal(mesh, lambda t, x, y: x)
        u, rep = solve_electric(q, g, PARAMS, NO_TRUNC)
        assert rep.converged
        np.testing.assert_allclose(u.values[:, 0], mesh.nodes[:, 0], atol=1e-10)

    def test_zero_everything(self):
        mesh = build_rect_mesh(-0.5, 0.5, -0.5, 0.5, 4, 4)
        q = NodalField.zeros(mesh, 4)
        g = NodalField.zeros(mesh, 1)
        u, _ = solve_electric(q, g, PARAMS, NO_TRUNC)
        assert np.max(np.abs(u.values)) == 0.0

    def test_dense_oracle_experiment1_data(self):
        # independent dense assembly + LU of the same discrete system
        mesh = build_rect_mesh(-0.5, 0.5, -0.5, 0.5, 6, 6)
        poly = lambda x, y: (x + 0.5) * (x - 0.5) * (y + 0.5) * (y - 0.5)
        vals = np.zeros((mesh.n_nodes, 4))
        p2 = np.array([poly(x, y) ** 2 for x, y in mesh.nodes])
        vals[:, 1] = p2
        vals[:, 2] = p2
        q = NodalField(mesh, 4, vals)
        g = interpolate_nodal(
            mesh, lambda t, x, y: 10 * np.sin(0.2) * (x + 0.5) * np.sin(np.pi * y)
        )
        u, _ = solve_electric(q, g, PARAMS, NO_TRUNC)

        n = mesh.n_nodes
        dense = np.zeros((n, n))
        rhs = np.zeros(n)
        qt = q.as_tensors()
        gv = g.values[:, 0]
        for tri in mesh.triangles:
            p = mesh.nodes[tri]
            area = 0.5 * abs(
                (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[1][1] - p[0][1]) * (p[2][0] - p[0][0])
            )
            grads = np.zeros((3, 2))
            for i in range(3):
                j, k = (i + 1) % 3, (i + 2) % 3
                grads[i] = [p[j][1] - p[k][1], p[k][0] - p[j][0]]
            grads /= 2 * area
            coef = np.zeros((2, 2))
            for ia, ib in ((0, 1), (1, 2), (2, 0)):
                qmid = 0.5 * (qt[tri[ia]] + qt[tri[ib]])
                coef += (PARAMS.eps1 * np.eye(2) + PARAMS.eps2 * qmid) / 3.0
            g_grad = gv[tri] @ grads
            div_q = np.zeros(2)
            for a in range(2):
                for b in range(2):
                    div_q[a] += qt[tri][:, a, b] @ grads[:, b]
            flux = coef @ g_grad + PARAMS.eps3 * div_q
            for i in range(3):
                rhs[tri[i]] -= area * grads[i] @ flux
                for j in range(3):
                    dense[tri[i], tri[j]] += area * grads[i] @ coef @ grads[j]
        free = ~mesh.boundary_mask
        u_hat = np.zeros(n)
        idx = np.ix_(free, free)
        u_hat[free] = np.linalg.solve(dense[idx], rhs[free])
        expected = u_hat + gv
        np.testing.assert_allclose(u.values[:, 0], expected, atol=1e-10)


class TestFixedPointStep:
    def test_zero_data_one_iteration(self):
        cfg = plain_config(
            material=MaterialParams(a=-0.3, b=-4, c=4, beta1=8, beta2=8,
                                    m=1, l=1, eps1=2.5, eps2=0.0, eps3=0.0)
        )
        stepper = Stepper(cfg)
        state = stepper.initial_state()
        new_state, report = stepper.fixed_point_step(state, stepper.interpolate_g(cfg.dt))
        assert report.converged
        assert report.picard_iters == 1
        assert np.max(np.abs(new_state.q.values)) == 0.0
        assert np.max(np.abs(new_state.u.values)) == 0.0

    def test_single_productive_iteration_without_bulk(self):
        # with eps2 = eps3 = 0 and the bulk gradient disabled, the rhs does
        # not depend on the iterate, so the second pass only confirms
        material = MaterialParams(a=0.0, b=0.0, c=0.0, beta1=0.0, beta2=0.0,
                                  m=1.0, l=1.0, eps1=2.5, eps2=0.0, eps3=0.0)
        rng = np.random.default_rng(21)

        def q0(x, y):
            x = np.asarray(x)
            out = zero_tensor(x, 0)
            bump = np.cos(np.pi * x) * rng.standard_normal()
            return out

        cfg = plain_config(material=material)
        stepper = Stepper(cfg)
        state = stepper.initial_state()
        vals = rng.normal(size=state.q.values.shape)
        vals[stepper.mesh.boundary_mask] = 0.0
        state = SimState(
            n=0, t=0.0,
            q=NodalField(stepper.mesh, 4, vals),
            u=state.u, g=state.g,
        )
        new_state, report = stepper.fixed_point_step(state, stepper.interpolate_g(cfg.dt))
        assert report.converged
        assert report.picard_iters == 2  # productive pass + confirming pass

    def test_experiment1_first_step_preserves_constraints(self):
        cfg, _ = preset_config("exp1")
        stepper = Stepper(cfg)
        state = stepper.initial_state()
        new_state, report = stepper.fixed_point_step(state, stepper.interpolate_g(cfg.dt))
        assert report.converged
        max_trace, max_asym = constraint_residuals(new_state.q)
        assert max_trace <= 1e-8
        assert max_asym <= 1e-8

    def test_scheme_residuals_after_step(self):
        cfg, _ = preset_config("exp1")
        stepper = Stepper(cfg)
        state = stepper.initial_state()
        new_state, _ = stepper.fixed_point_step(state, stepper.interpolate_g(cfg.dt))
        # state invariant: the elliptic equation holds at the accepted state
        assert stepper.elliptic_residual(new_state) <= 10 * cfg.solver.tol
        # and the Q equation links the two states at the fixed-point tolerance
        assert stepper.q_equation_residual(state, new_state) <= 1e-8

    def test_scheme_residuals_with_nonzero_q_boundary(self):
        # the constraint coupling must enter the residual the same way it
        # enters the solve
        cfg, _ = preset_config("exp3")
        cfg.nx = cfg.ny = 6
        stepper = Stepper(cfg)
        state = stepper.initial_state()
        new_state, _ = stepper.fixed_point_step(state, stepper.interpolate_g(cfg.dt))
        assert stepper.q_equation_residual(state, new_state) <= 1e-8
        assert stepper.elliptic_residual(new_state) <= 10 * cfg.solver.tol

    def test_nonconvergence_raises_with_payload(self):
        cfg = plain_config(dt=0.01, t_final=0.05)
        cfg.picard.max_iter = 1
        cfg.picard.tol = 1e-16

        def q0(x, y):
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            bump = np.cos(np.pi * x) * np.cos(np.pi * y)
            out = np.empty(np.broadcast(x, y).shape + (2, 2))
            out[..., 0, 0] = 0.4 * bump
            out[..., 0, 1] = 0.2 * bump
            out[..., 1, 0] = out[..., 0, 1]
            out[..., 1, 1] = -out[..., 0, 0]
            return out

        cfg.q0 = q0
        stepper = Stepper(cfg)
        state = stepper.initial_state()
        with pytest.raises(PicardNonConvergence) as err:
            stepper.fixed_point_step(state, stepper.interpolate_g(cfg.dt))
        assert err.value.step_index == 1
        assert err.value.state is state
        assert err.value.report.picard_iters == 1


class TestModuleLevelWrappers:
    def test_fixed_point_step_builds_its_own_stepper(self):
        from qlcsim.stepping import fixed_point_step

        cfg = plain_config(
            material=MaterialParams(a=-0.3, b=-4, c=4, beta1=8, beta2=8,
                                    m=1, l=1, eps1=2.5, eps2=0.0, eps3=0.0)
        )
        stepper = Stepper(cfg)
        state = stepper.initial_state()
        g_next = stepper.interpolate_g(cfg.dt)
        new_state, rep = fixed_point_step(state, g_next, cfg)
        assert rep.converged
        assert new_state.n == 1


class TestRun:
    def test_zero_data_constant_zero_trajectory(self):
        material = MaterialParams(a=-0.3, b=-4, c=4, beta1=8, beta2=8,
                                  m=1, l=1, eps1=2.5, eps2=0.5, eps3=0.0, a0=0.7)
        cfg = plain_config(nx=4, dt=0.01, t_final=0.05, material=material)
        from qlcsim.diagnostics import energy_breakdown

        energies = []
        summary = run(cfg, lambda s, r: energies.append(
            energy_breakdown(s, material, cfg.truncation).total))
        assert summary.termination == "completed"
        assert summary.steps_completed == 5
        assert np.max(np.abs(summary.final_state.q.values)) == 0.0
        # total energy is the constant A0 * |Omega|
        np.testing.assert_allclose(energies, 0.7, rtol=1e-12)

    def test_step_count_rounding(self):
        cfg = plain_config(nx=3, dt=0.01, t_final=0.05)
        assert cfg.n_steps == 5

    def test_warnings_for_experiment_presets(self):
        cfg, warnings = preset_config("exp1")
        assert len(warnings) == 1
        assert "truncation disabled" in warnings[0]

    def test_dt_warning_text(self):
        cfg = dissipative_config(nx=4, dt=0.3, t_final=0.9)
        warn = cfg.validate()
        assert any("0.25" in w and "dt" in w for w in warn)

    def test_dissipative_run_monotone_energy(self, dissipative_run):
        trace = dissipative_run["trace"]
        summary = dissipative_run["summary"]
        assert summary.termination == "completed"
        totals = np.array([e.total for e in trace.energies])
        e0 = totals[0]
        slack = 1e-10 * max(1.0, abs(e0))
        assert np.all(np.diff(totals) <= slack)
        # u stays identically zero: g = 0 and eps3 = 0
        assert max(np.max(np.abs(s.u.values)) for s in trace.states) == 0.0

    def test_exp1_completes_200_steps(self, exp1_run):
        assert exp1_run["summary"].termination == "completed"
        assert exp1_run["summary"].steps_completed == 200

    def test_exp2_exponential_halts(self, exp2_exponential_run):
        summary = exp2_exponential_run["summary"]
        assert summary.termination == "nonconvergence"
        assert summary.steps_completed < 200
