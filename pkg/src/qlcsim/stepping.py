"""Time integration: the per-step fixed-point iteration and the outer loop.

Each step solves the implicit scheme by Picard iteration on its solution
map: given an iterate Q, (i) solve the elliptic equation for the potential
lift u_hat with coefficient built from the truncated iterate, (ii) solve the
linear Q system whose right-hand side is evaluated at the iterate, then
(iii) relax.  A fixed point of that map is a solution of the coupled scheme.
Non-convergence is a first-class outcome (it is the blow-up signal of the
exponential-forcing experiment), carrying the last converged state.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .assembly import (
    EllipticAssembler,
    assemble_elliptic,
    assemble_mass,
    assemble_stiffness,
    q_rhs_from_workspace,
    q_rhs_workspace,
    q_system_matrix,
    q_system_rhs,
)
from .mesh import NodalField, build_rect_mesh, interpolate_nodal
from .qtensor import MaterialParams, TruncationConfig, truncate
from .sparse import (
    CSRMatrix,
    NotSPDError,
    SolveReport,
    apply_dirichlet,
    cg_solve,
    cg_solve_block,
    spmv,
)

__all__ = [
    "PicardSettings",
    "SolverSettings",
    "OutputSettings",
    "SimConfig",
    "SimState",
    "StepReport",
    "RunSummary",
    "PicardNonConvergence",
    "EllipticFailure",
    "Stepper",
    "solve_electric",
    "fixed_point_step",
    "run",
]

STALL_WINDOW = 5  # non-decreasing update norms before the relaxation fallback


@dataclass
class PicardSettings:
    tol: float = 1e-10
    max_iter: int = 100
    relaxation: float = 1.0


@dataclass
class SolverSettings:
    tol: float = 1e-12
    max_iter_factor: int = 10


@dataclass
class OutputSettings:
    snapshot_times: tuple[float, ...] = ()
    csv_every: int = 1


@dataclass
class SimConfig:
    """Everything a run needs; expression strings live in ``labels``."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int
    material: MaterialParams
    truncation: TruncationConfig
    dt: float
    t_final: float
    g: Callable  # g(t, x, y), vectorized over x, y
    q0: Callable  # q0(x, y) -> (..., 2, 2), vectorized
    q_boundary: Callable  # q_boundary(x, y) -> (..., 2, 2), vectorized
    picard: PicardSettings = field(default_factory=PicardSettings)
    solver: SolverSettings = field(default_factory=SolverSettings)
    output: OutputSettings = field(default_factory=OutputSettings)
    labels: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    def validate(self) -> list[str]:
        """Hard errors raise; returns WARN lines for violated theorem bounds."""
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_final < self.dt:
            raise ValueError(f"t_final = {self.t_final} is below one step dt = {self.dt}")
        self.material.validate()
        self.truncation.validate(dim=2)
        return self.hypothesis_warnings()

    def hypothesis_warnings(self) -> list[str]:
        """WARN lines for violated stability/existence hypotheses only."""
        warn = []
        p = self.material
        dt_bound = 0.25
        if p.eps3 != 0.0:
            dt_bound = min(dt_bound, p.l / (2 * 2 * abs(p.eps3)))
        if self.dt >= dt_bound:
            warn.append(
                f"WARN dt = {self.dt} >= min(1/4, L/(2 d |eps3|)) = {dt_bound}: "
                "the energy-stability hypothesis on the step size is violated"
            )
        if self.truncation.mode == "smooth_clamp":
            r = self.truncation.r
            bound = 2 * abs(p.eps2) * (r + r * r)
            if p.eps1 <= bound:
                warn.append(
                    f"WARN eps1 = {p.eps1} <= 2|eps2|(R + R^2) = {bound}: "
                    "the energy-stability hypothesis on the dielectric contrast is violated"
                )
        elif p.eps2 != 0.0:
            warn.append(
                "WARN truncation disabled: eps1 > 2|eps2|(R + R^2) cannot hold "
                "for any effective truncation radius, so the energy-stability "
                "hypothesis is unverifiable (runs may still behave well while "
                "the Q-tensor entries stay bounded)"
            )
        if p.eps1 <= 2 * abs(p.eps3):
            warn.append(
                f"WARN eps1 = {p.eps1} <= 2|eps3| = {2 * abs(p.eps3)}: "
                "the existence hypothesis for the scheme is violated"
            )
        return warn


@dataclass
class SimState:
    n: int
    t: float
    q: NodalField  # 4 components
    u: NodalField  # potential, includes the boundary lift
    g: NodalField  # boundary extension at time t


@dataclass
class StepReport:
    picard_iters: int
    update_norm: float
    converged: bool
    elliptic_reports: list = field(default_factory=list)
    q_reports: list = field(default_factory=list)
    relaxation_used: float = 1.0
    failure: str | None = None


@dataclass
class RunSummary:
    steps_completed: int
    termination: str  # "completed" | "nonconvergence"
    final_state: SimState
    warnings: list[str]
    dissipation_sum: float  # dt * sum ||D_t Q||^2 over completed steps
    max_abs_entry: float
    failure_detail: str | None = None


class EllipticFailure(Exception):
    """The electric-potential solve lost positivity or failed to converge."""


class PicardNonConvergence(Exception):
    """The fixed-point iteration exhausted max_iter (or lost solvability).

    Carries the last converged state and the failing iterate for reporting.
    """

    def __init__(self, step_index, time, state, iterate, report):
        super().__init__(
            f"fixed-point iteration did not converge at step {step_index} (t = {time:g})"
        )
        self.step_index = step_index
        self.time = time
        self.state = state
        self.iterate = iterate
        self.report = report


def _coercivity_message(p: MaterialParams, q_scale: float) -> str:
    return (
        "elliptic equation not solvable: to be solvable, we would need "
        f"|eps1| > |eps2| |Q| pointwise, but eps1 = {p.eps1} with "
        f"|eps2| = {abs(p.eps2)} and truncated |Q| entries up to {q_scale:.3g}"
    )


class Stepper:
    """Owns the mesh, the constant matrices, and the per-step iteration."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.warnings = cfg.hypothesis_warnings()
        self.mesh = build_rect_mesh(cfg.x_min, cfg.x_max, cfg.y_min, cfg.y_max, cfg.nx, cfg.ny)
        self.mass = assemble_mass(self.mesh)
        self.stiffness = assemble_stiffness(self.mesh)
        self.q_matrix = q_system_matrix(self.mesh, cfg.material, cfg.dt)
        self.boundary_dofs = np.flatnonzero(self.mesh.boundary_mask)

        xb = self.mesh.nodes[self.boundary_dofs, 0]
        yb = self.mesh.nodes[self.boundary_dofs, 1]
        qb = np.asarray(cfg.q_boundary(xb, yb), dtype=float)
        self.q_boundary_values = np.broadcast_to(
            qb.reshape(qb.shape[0], 4) if qb.ndim == 3 else qb, (xb.size, 4)
        ).copy()

        zero = np.zeros(self.mesh.n_nodes)
        self.q_matrix_bc, _ = apply_dirichlet(
            self.q_matrix, zero, (self.boundary_dofs, np.zeros(self.boundary_dofs.size))
        )
        # constraint coupling moved to the rhs once: the matrix and the
        # boundary values never change within a run
        self.q_rhs_adjust = np.zeros((self.mesh.n_nodes, 4))
        for comp in range(4):
            _, badj = apply_dirichlet(
                self.q_matrix, zero.copy(),
                (self.boundary_dofs, self.q_boundary_values[:, comp]),
            )
            self.q_rhs_adjust[:, comp] = badj
        self.elliptic = EllipticAssembler(self.mesh, cfg.material, cfg.truncation)
        self._u_prev = None  # warm starts for the elliptic CG

    # -- field construction ------------------------------------------------

    def interpolate_g(self, t: float) -> NodalField:
        return interpolate_nodal(self.mesh, self.cfg.g, t)

    def initial_q(self) -> NodalField:
        x = self.mesh.nodes[:, 0]
        y = self.mesh.nodes[:, 1]
        q = np.asarray(self.cfg.q0(x, y), dtype=float)
        vals = q.reshape(self.mesh.n_nodes, 4)
        vals = vals.copy()
        vals[self.boundary_dofs] = self.q_boundary_values
        return NodalField(self.mesh, 4, vals)

    def initial_state(self) -> SimState:
        q0 = self.initial_q()
        g0 = self.interpolate_g(0.0)
        u0, _ = self.solve_electric(q0, g0)
        return SimState(n=0, t=0.0, q=q0, u=u0, g=g0)

    # -- inner solves --------------------------------------------------------

    def solve_electric(self, qf: NodalField, gf: NodalField) -> tuple[NodalField, SolveReport]:
        """Potential u = u_hat + g for the current Q (the elliptic equation)."""
        p = self.cfg.material
        tq = truncate(qf.as_tensors(), self.cfg.truncation)
        q_scale = float(np.max(np.abs(tq))) if tq.size else 0.0
        margin = p.eps1 - abs(p.eps2) * np.sqrt(2.0) * q_scale
        if margin <= 0:
            warnings.warn(
                f"coercivity margin {margin:.3g} <= 0; attempting the solve anyway",
                stacklevel=2,
            )
        u_hat, rep = self._elliptic_lift(qf, gf)
        u = NodalField(self.mesh, 1, (u_hat + gf.values[:, 0]).reshape(-1, 1))
        return u, rep

    def _solve_q(self, rhs: np.ndarray, x0: np.ndarray) -> tuple[np.ndarray, list]:
        b = rhs + self.q_rhs_adjust
        b[self.boundary_dofs, :] = self.q_boundary_values
        out, reports = cg_solve_block(
            self.q_matrix_bc,
            b,
            x0=x0,
            tol=self.cfg.solver.tol,
            max_iter=self.cfg.solver.max_iter_factor * self.mesh.n_nodes,
        )
        for rep in reports:
            if not rep.converged:
                raise NotSPDError(
                    f"Q-component solve stalled at residual {rep.residual:.3e}"
                )
        return out, reports

    # -- the fixed-point map -----------------------------------------------

    def fixed_point_step(
        self,
        state: SimState,
        g_next: NodalField,
        q_predictor: NodalField | None = None,
    ) -> tuple[SimState, StepReport]:
        cfg = self.cfg
        p = cfg.material
        omega = cfg.picard.relaxation
        q_iter = q_predictor.copy() if q_predictor is not None else state.q.copy()
        report = StepReport(picard_iters=0, update_norm=math.inf, converged=False,
                            relaxation_used=omega)
        history: list[float] = []
        q_hat_field = None
        u_hat = None
        workspace = q_rhs_workspace(
            self.mesh, state.q, state.u, g_next,
            p, cfg.truncation, cfg.dt, self.mass, self.stiffness,
        )

        for k in range(1, cfg.picard.max_iter + 1):
            try:
                u_hat_vec, ell_rep = self._elliptic_lift(q_iter, g_next)
            except EllipticFailure as exc:
                if k == 1:
                    if q_predictor is not None:
                        # the extrapolated seed overshot; retry from the state
                        return self.fixed_point_step(state, g_next, None)
                    raise
                report.failure = str(exc)
                break
            u_hat = NodalField(self.mesh, 1, u_hat_vec.reshape(-1, 1))
            rhs = q_rhs_from_workspace(
                workspace, self.mesh, q_iter, u_hat, p, cfg.truncation
            )
            try:
                q_hat, q_reps = self._solve_q(rhs, q_iter.values)
            except NotSPDError as exc:
                if k == 1:
                    if q_predictor is not None:
                        return self.fixed_point_step(state, g_next, None)
                    raise EllipticFailure(str(exc)) from exc
                report.failure = str(exc)
                break

            delta = float(np.max(np.abs(q_hat - q_iter.values)))
            report.picard_iters = k
            report.update_norm = delta
            report.elliptic_reports.append(ell_rep)
            report.q_reports.append(q_reps)
            if not math.isfinite(delta):
                report.failure = "iterate diverged to non-finite values"
                break
            if delta <= cfg.picard.tol:
                report.converged = True
                q_hat_field = NodalField(self.mesh, 4, q_hat)
                break

            history.append(delta)
            if omega == 1.0 and len(history) >= STALL_WINDOW:
                recent = history[-STALL_WINDOW:]
                stalled = any(
                    recent[i] >= recent[i - 1] * (1 - 1e-12)
                    for i in range(1, STALL_WINDOW)
                )
                if stalled:
                    # healthy steps contract strictly in every iteration; a
                    # non-decrease inside the window marks the oscillatory
                    # slow mode, which the damped iteration handles
                    omega = 0.5
                    report.relaxation_used = omega
            q_iter = NodalField(
                self.mesh, 4, (1 - omega) * q_iter.values + omega * q_hat
            )

        if not report.converged:
            raise PicardNonConvergence(
                state.n + 1, state.t + cfg.dt, state, q_iter, report
            )

        # accept: Q^{n+1} = Q_hat, then refresh the potential from the
        # accepted tensor so the state satisfies the elliptic equation exactly
        u_next, final_rep = self.solve_electric(q_hat_field, g_next)
        report.elliptic_reports.append(final_rep)
        new_state = SimState(
            n=state.n + 1,
            t=state.t + cfg.dt,
            q=q_hat_field,
            u=u_next,
            g=g_next,
        )
        return new_state, report

    def _elliptic_lift(self, qf: NodalField, gf: NodalField) -> tuple[np.ndarray, SolveReport]:
        p = self.cfg.material
        matrix, rhs = self.elliptic.assemble(qf, gf)
        x0 = self._u_prev if self._u_prev is not None else None
        try:
            u_hat, rep = cg_solve(
                matrix,
                rhs,
                x0=x0,
                tol=self.cfg.solver.tol,
                max_iter=self.cfg.solver.max_iter_factor * self.mesh.n_nodes,
            )
        except NotSPDError as exc:
            tq = truncate(qf.as_tensors(), self.cfg.truncation)
            raise EllipticFailure(
                _coercivity_message(p, float(np.max(np.abs(tq))))
            ) from exc
        if not rep.converged:
            raise EllipticFailure(
                f"elliptic CG stalled at relative residual {rep.residual:.3e}"
            )
        self._u_prev = u_hat
        return u_hat, rep

    # -- residuals (state invariant checks) ----------------------------------

    def elliptic_residual(self, state: SimState) -> float:
        """Relative residual of the discrete elliptic equation at the state."""
        step = assemble_elliptic(self.mesh, state.q, state.g, self.cfg.material, self.cfg.truncation)
        u_hat = state.u.values[:, 0] - state.g.values[:, 0]
        r = step.rhs[:, 0] - spmv(step.matrix, u_hat)
        nb = np.linalg.norm(step.rhs[:, 0])
        return float(np.linalg.norm(r) / max(nb, 1.0))

    def q_equation_residual(self, old: SimState, new: SimState) -> float:
        """Relative residual of the discrete Q equation linking two states."""
        u_hat = NodalField(
            self.mesh, 1, (new.u.values - new.g.values).reshape(-1, 1)
        )
        rhs = q_system_rhs(
            self.mesh, old.q, old.u, u_hat, new.q, new.g,
            self.cfg.material, self.cfg.truncation, self.cfg.dt,
            self.mass, self.stiffness,
        )
        b = rhs + self.q_rhs_adjust
        b[self.boundary_dofs, :] = self.q_boundary_values
        scale = 0.0
        resid = 0.0
        for comp in range(4):
            r = b[:, comp] - spmv(self.q_matrix_bc, new.q.values[:, comp])
            resid += float(r @ r)
            scale += float(b[:, comp] @ b[:, comp])
        return math.sqrt(resid) / max(math.sqrt(scale), 1.0)

    # -- outer loop ----------------------------------------------------------

    def run(self, observer: Callable | None = None) -> RunSummary:
        cfg = self.cfg
        state = self.initial_state()
        n_steps = cfg.n_steps
        dissipation = 0.0
        max_entry = float(np.max(np.abs(state.q.values)))

        if observer is not None:
            observer(state, None)

        prev_q = None
        for n in range(n_steps):
            t_next = (n + 1) * cfg.dt
            g_next = self.interpolate_g(t_next)
            predictor = None
            if prev_q is not None:
                # linear extrapolation in time to seed the fixed point
                predictor = NodalField(
                    self.mesh, 4, 2.0 * state.q.values - prev_q.values
                )
            try:
                new_state, report = self.fixed_point_step(state, g_next, predictor)
            except PicardNonConvergence as exc:
                return RunSummary(
                    steps_completed=n,
                    termination="nonconvergence",
                    final_state=state,
                    warnings=self.warnings,
                    dissipation_sum=dissipation,
                    max_abs_entry=max_entry,
                    failure_detail=str(exc)
                    + (f"; inner failure: {exc.report.failure}" if exc.report.failure else ""),
                )
            diff = (new_state.q.values - state.q.values) / cfg.dt
            for comp in range(4):
                dissipation += cfg.dt * float(diff[:, comp] @ spmv(self.mass, diff[:, comp]))
            prev_q = state.q
            state = new_state
            max_entry = max(max_entry, float(np.max(np.abs(state.q.values))))
            if observer is not None:
                observer(state, report)

        return RunSummary(
            steps_completed=n_steps,
            termination="completed",
            final_state=state,
            warnings=self.warnings,
            dissipation_sum=dissipation,
            max_abs_entry=max_entry,
        )


# -- module-level operation wrappers ------------------------------------------


def solve_electric(
    qf: NodalField,
    gf: NodalField,
    p: MaterialParams,
    tcfg: TruncationConfig,
    solver: SolverSettings | None = None,
) -> tuple[NodalField, SolveReport]:
    """One-shot electric solve on the fields' own mesh (u = u_hat + g)."""
    solver = solver or SolverSettings()
    mesh = qf.mesh
    step = assemble_elliptic(mesh, qf, gf, p, tcfg)
    try:
        u_hat, rep = cg_solve(
            step.matrix, step.rhs[:, 0], tol=solver.tol,
            max_iter=solver.max_iter_factor * mesh.n_nodes,
        )
    except NotSPDError as exc:
        tq = truncate(qf.as_tensors(), tcfg)
        raise EllipticFailure(_coercivity_message(p, float(np.max(np.abs(tq))))) from exc
    if not rep.converged:
        raise EllipticFailure(
            f"elliptic CG stalled at relative residual {rep.residual:.3e}"
        )
    return NodalField(mesh, 1, (u_hat + gf.values[:, 0]).reshape(-1, 1)), rep


def fixed_point_step(
    state: SimState, g_next: NodalField, cfg: SimConfig, stepper: Stepper | None = None
) -> tuple[SimState, StepReport]:
    """Advance one step; builds a throwaway Stepper unless one is supplied."""
    if stepper is None:
        stepper = Stepper(cfg)
    return stepper.fixed_point_step(state, g_next)


def run(cfg: SimConfig, observer: Callable | None = None) -> RunSummary:
    return Stepper(cfg).run(observer)
