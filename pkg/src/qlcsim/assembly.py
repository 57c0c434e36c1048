"""Assembly of the discrete operators of the coupled scheme.

Four builders: consistent P1 mass, P1 stiffness, the variable-coefficient
elliptic operator for the electric potential (coefficient eps1*I + eps2*T(Q)
with the truncation evaluated at quadrature points of the interpolated Q),
and the linear system of the per-step fixed-point map for the new Q-tensor.

The Q system shares one scalar SPD matrix, (1/dt)*Mass + (M*L/2)*Stiffness,
across all d^2 tensor components; Picard iterations change only the right
hand side.  Element loops are vectorized over the whole mesh; nonlinear
quantities are always formed by interpolating the nodal field to quadrature
points first and applying the pointwise map there, which is what the
discrete energy argument requires.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .mesh import NodalField, TriMesh, quadrature, values_at_quadrature
from .qtensor import MaterialParams, TruncationConfig, secant_ratio, split_gradients, truncate
from .sparse import CSRMatrix, apply_dirichlet, csr_from_triplets

__all__ = [
    "AssembledStep",
    "assemble_mass",
    "assemble_stiffness",
    "assemble_elliptic",
    "assemble_q_system",
]

D = 2  # FEM is two-dimensional; tensor algebra elsewhere stays dimension-generic


@dataclass
class AssembledStep:
    """A ready-to-solve linear system.

    ``rhs`` has one column per unknown component (1 for the potential, d^2
    for the Q-tensor); row i of every column belongs to mesh node i, so the
    dof map is node-major with constrained rows reduced to identity.
    """

    matrix: CSRMatrix
    rhs: np.ndarray
    components: int
    fixed_dofs: np.ndarray
    fixed_values: np.ndarray


def _pattern(mesh: TriMesh):
    tris = mesh.triangles
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    return rows, cols


def assemble_mass(mesh: TriMesh) -> CSRMatrix:
    """Consistent P1 mass matrix; element block (area/12)[[2,1,1],[1,2,1],[1,1,2]]."""
    areas, _ = mesh.geometry()
    block = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
    local = areas[:, None, None] * block
    rows, cols = _pattern(mesh)
    return csr_from_triplets(mesh.n_nodes, (rows, cols, local.ravel()))


def assemble_stiffness(mesh: TriMesh) -> CSRMatrix:
    """P1 stiffness matrix; element block area * (grad_i . grad_j)."""
    areas, grads = mesh.geometry()
    local = areas[:, None, None] * np.einsum("mix,mjx->mij", grads, grads)
    rows, cols = _pattern(mesh)
    return csr_from_triplets(mesh.n_nodes, (rows, cols, local.ravel()))


def _q_at_quad(qfield: NodalField, rule) -> np.ndarray:
    vals = values_at_quadrature(qfield, rule)  # (m, q, 4)
    return vals.reshape(vals.shape[0], vals.shape[1], D, D)


def _gradients(fld: NodalField) -> np.ndarray:
    _, grads = fld.mesh.geometry()
    nodal = fld.values[fld.mesh.triangles]
    return np.einsum("mic,mix->mcx", nodal, grads)


def _div_q(qfield: NodalField) -> np.ndarray:
    """Element-constant divergence (div Q)_i = sum_j d_j Q_ij; (m, 2)."""
    gq = _gradients(qfield).reshape(-1, D, D, 2)
    return np.einsum("mabb->ma", gq)


def assemble_elliptic(
    mesh: TriMesh,
    qfield: NodalField,
    g_field: NodalField,
    p: MaterialParams,
    tcfg: TruncationConfig,
    quad_degree: int = 2,
) -> AssembledStep:
    """Electric-potential system for the lift u_hat (u = u_hat + g, u_hat = 0 on the boundary).

    Bilinear form  int (eps1*grad(u_hat) + eps2*T(Q) grad(u_hat)) . grad(psi),
    right-hand side -int (eps1*grad(g) + eps2*T(Q) grad(g) + eps3*div Q) . grad(psi).
    """
    if tcfg.mode == "smooth_clamp" and p.eps1 - tcfg.r * abs(p.eps2) <= 0:
        warnings.warn(
            f"coercivity margin eps1 - R|eps2| = {p.eps1 - tcfg.r * abs(p.eps2):.3g} "
            "is not positive; the elliptic solve may fail",
            stacklevel=2,
        )
    areas, grads = mesh.geometry()
    rule = quadrature(quad_degree)
    tq = truncate(_q_at_quad(qfield, rule), tcfg)  # (m, q, 2, 2)
    # grad(basis) is element-constant, so only the weight-averaged coefficient
    # enters the element matrix
    tbar = np.einsum("q,mqab->mab", rule.weights, tq)
    coef = p.eps1 * np.eye(D) + p.eps2 * tbar

    local = areas[:, None, None] * np.einsum("mix,mxy,mjy->mij", grads, coef, grads)
    rows, cols = _pattern(mesh)
    matrix = csr_from_triplets(mesh.n_nodes, (rows, cols, local.ravel()))

    g_grad = _gradients(g_field)[:, 0, :]  # (m, 2)
    flux = np.einsum("mxy,my->mx", coef, g_grad) + p.eps3 * _div_q(qfield)
    local_rhs = -areas[:, None] * np.einsum("mix,mx->mi", grads, flux)
    rhs = np.bincount(
        mesh.triangles.ravel(), weights=local_rhs.ravel(), minlength=mesh.n_nodes
    )

    fixed_dofs = np.flatnonzero(mesh.boundary_mask)
    fixed_values = np.zeros(fixed_dofs.size)
    matrix, rhs = apply_dirichlet(matrix, rhs, (fixed_dofs, fixed_values))
    return AssembledStep(
        matrix=matrix,
        rhs=rhs.reshape(-1, 1),
        components=1,
        fixed_dofs=fixed_dofs,
        fixed_values=fixed_values.reshape(-1, 1),
    )


class EllipticAssembler:
    """Pattern-cached assembly of the elliptic system.

    The sparsity pattern, triplet sort order and Dirichlet masks depend only
    on the mesh, so they are computed once; each call fills data and rhs for
    a new Q-tensor and boundary extension.  Produces the same system as
    assemble_elliptic (up to explicit stored zeros in constrained rows).
    """

    def __init__(self, mesh: TriMesh, p: MaterialParams, tcfg: TruncationConfig,
                 quad_degree: int = 2):
        self.mesh = mesh
        self.p = p
        self.tcfg = tcfg
        self.rule = quadrature(quad_degree)
        self.areas, self.grads = mesh.geometry()
        rows, cols = _pattern(mesh)
        self.perm = np.lexsort((cols, rows))
        rs, cs = rows[self.perm], cols[self.perm]
        first = np.ones(rs.size, dtype=bool)
        first[1:] = (rs[1:] != rs[:-1]) | (cs[1:] != cs[:-1])
        self.starts = np.flatnonzero(first)
        out_rows = rs[self.starts]
        self.out_cols = cs[self.starts]
        counts = np.bincount(out_rows, minlength=mesh.n_nodes)
        self.indptr = np.zeros(mesh.n_nodes + 1, dtype=np.int64)
        np.cumsum(counts, out=self.indptr[1:])
        fixed = mesh.boundary_mask
        self.drop = fixed[out_rows] | fixed[self.out_cols]
        self.unit_diag = np.flatnonzero(self.drop & (out_rows == self.out_cols))
        self.fixed_nodes = np.flatnonzero(fixed)

    def assemble(self, qfield: NodalField, g_field: NodalField) -> tuple[CSRMatrix, np.ndarray]:
        p, mesh = self.p, self.mesh
        tq = truncate(_q_at_quad(qfield, self.rule), self.tcfg)
        tbar = np.einsum("q,mqab->mab", self.rule.weights, tq)
        coef = p.eps1 * np.eye(D) + p.eps2 * tbar
        local = self.areas[:, None, None] * np.einsum(
            "mix,mxy,mjy->mij", self.grads, coef, self.grads
        )
        sums = np.add.reduceat(local.ravel()[self.perm], self.starts)
        data = np.where(self.drop, 0.0, sums)
        data[self.unit_diag] = 1.0
        matrix = CSRMatrix(mesh.n_nodes, self.indptr, self.out_cols, data)

        g_grad = np.einsum("mi,mix->mx", g_field.values[mesh.triangles, 0], self.grads)
        flux = np.einsum("mxy,my->mx", coef, g_grad) + p.eps3 * _div_q(qfield)
        local_rhs = -self.areas[:, None] * np.einsum("mix,mx->mi", self.grads, flux)
        rhs = np.bincount(
            mesh.triangles.ravel(), weights=local_rhs.ravel(), minlength=mesh.n_nodes
        )
        rhs[self.fixed_nodes] = 0.0
        return matrix, rhs


def q_system_matrix(mesh: TriMesh, p: MaterialParams, dt: float) -> CSRMatrix:
    """(1/dt)*Mass + (M*L/2)*Stiffness in one assembly pass."""
    areas, grads = mesh.geometry()
    mass_block = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
    local = areas[:, None, None] * (
        mass_block / dt + 0.5 * p.m * p.l * np.einsum("mix,mjx->mij", grads, grads)
    )
    rows, cols = _pattern(mesh)
    return csr_from_triplets(mesh.n_nodes, (rows, cols, local.ravel()))


@dataclass
class QRhsWorkspace:
    """Iterate-independent pieces of the Q right-hand side, built per step."""

    base: np.ndarray  # (n, 4): mass/stiffness action on Qn, explicit bulk, g terms
    qn_quad: np.ndarray  # (m, q, 2, 2)
    grad_un: np.ndarray  # (m, 2)
    grad_g: np.ndarray  # (m, 2)
    rule: object
    lam_w: np.ndarray  # weights folded into barycentric values, (q, 3)


def _polarization_term(mesh: TriMesh, areas, grads, v: np.ndarray, scale: float,
                       rhs: np.ndarray) -> None:
    """Scatter scale * [ (v_a d_b phi + v_b d_a phi)/2 - delta_ab/d v.grad(phi) ]."""
    va_gb = np.einsum("ma,mib->miab", v, grads)
    sym = 0.5 * (va_gb + np.swapaxes(va_gb, -1, -2))
    vdotg = np.einsum("ma,mia->mi", v, grads)
    term = sym - vdotg[:, :, None, None] * np.eye(D) / D
    _scatter(rhs, mesh, scale * areas[:, None, None, None] * term)


def q_rhs_workspace(
    mesh: TriMesh,
    qn: NodalField,
    un: NodalField,
    g_next: NodalField,
    p: MaterialParams,
    tcfg: TruncationConfig,
    dt: float,
    mass: CSRMatrix,
    stiffness: CSRMatrix,
    quad_degree: int = 4,
) -> QRhsWorkspace:
    from .sparse import spmv

    areas, grads = mesh.geometry()
    rule = quadrature(quad_degree)
    n = mesh.n_nodes

    base = np.zeros((n, D * D))
    for comp in range(D * D):
        base[:, comp] = spmv(mass, qn.values[:, comp]) / dt - 0.5 * p.m * p.l * spmv(
            stiffness, qn.values[:, comp]
        )

    lam_w = rule.weights[:, None] * rule.points  # (q, 3)
    qn_q = _q_at_quad(qn, rule)
    _, f2 = split_gradients(qn_q, p)
    contrib = np.einsum("qi,mqab->miab", lam_w, p.m * f2) * areas[:, None, None, None]
    _scatter(base, mesh, contrib)

    grad_un = _gradients(un)[:, 0, :]
    grad_g = _gradients(g_next)[:, 0, :]
    if p.eps3 != 0.0:
        # the u^n half of the time-average and the g^{n+1}/2 piece are both
        # fixed within the step; the u_hat half joins per iteration
        _polarization_term(mesh, areas, grads, 0.5 * grad_un, p.m * p.eps3, base)
        _polarization_term(mesh, areas, grads, 0.5 * grad_g, p.m * p.eps3, base)

    return QRhsWorkspace(
        base=base, qn_quad=qn_q, grad_un=grad_un, grad_g=grad_g,
        rule=rule, lam_w=lam_w,
    )


def q_rhs_from_workspace(
    ws: QRhsWorkspace,
    mesh: TriMesh,
    q_iter: NodalField,
    u_hat: NodalField,
    p: MaterialParams,
    tcfg: TruncationConfig,
) -> np.ndarray:
    """Complete the right-hand side for the current Picard iterate."""
    areas, grads = mesh.geometry()
    qi_q = _q_at_quad(q_iter, ws.rule)
    f1, _ = split_gradients(qi_q, p)
    integrand = -p.m * f1  # (m, q, 2, 2)

    guh = _gradients(u_hat)[:, 0, :]
    if p.eps2 != 0.0:
        ptil = secant_ratio(qi_q, ws.qn_quad, tcfg)
        for target in (guh, ws.grad_g):
            outer = np.einsum("ma,mb->mab", ws.grad_un, target)[:, None, :, :]
            had = ptil * outer
            sym = 0.5 * (had + np.swapaxes(had, -1, -2))
            tr = np.einsum("mqaa->mq", sym)[..., None, None]
            integrand = integrand + 0.5 * p.m * p.eps2 * (sym - tr * np.eye(D) / D)

    rhs = ws.base.copy()
    contrib = np.einsum("qi,mqab->miab", ws.lam_w, integrand) * areas[:, None, None, None]
    _scatter(rhs, mesh, contrib)

    if p.eps3 != 0.0:
        _polarization_term(mesh, areas, grads, 0.5 * guh, p.m * p.eps3, rhs)
    return rhs


def q_system_rhs(
    mesh: TriMesh,
    qn: NodalField,
    un: NodalField,
    u_hat: NodalField,
    q_iter: NodalField,
    g_next: NodalField,
    p: MaterialParams,
    tcfg: TruncationConfig,
    dt: float,
    mass: CSRMatrix,
    stiffness: CSRMatrix,
    quad_degree: int = 4,
) -> np.ndarray:
    """Right-hand side columns (n_nodes, 4) of the fixed-point Q equation.

    Collects (1/dt)*Mass*Qn - (ML/2)*Stiffness*Qn, the split bulk gradients
    (implicit half at the current iterate, explicit half at Qn), the secant
    coupling with grad(u^n) (grad(u_hat) + grad(g^{n+1}))^T, and the
    polarization terms in the written form: the (u_hat + u^n)/2 average and
    the g^{n+1}/2 piece assembled separately.
    """
    ws = q_rhs_workspace(
        mesh, qn, un, g_next, p, tcfg, dt, mass, stiffness, quad_degree=quad_degree
    )
    return q_rhs_from_workspace(ws, mesh, q_iter, u_hat, p, tcfg)


def _scatter(rhs: np.ndarray, mesh: TriMesh, contrib: np.ndarray) -> None:
    """Accumulate per-element nodal contributions (m, 3, d, d) into (n, d^2)."""
    idx = mesh.triangles.ravel()
    flat = contrib.reshape(-1, D * D)
    for comp in range(D * D):
        rhs[:, comp] += np.bincount(idx, weights=flat[:, comp], minlength=rhs.shape[0])


def assemble_q_system(
    mesh: TriMesh,
    qn: NodalField,
    un: NodalField,
    u_hat: NodalField,
    q_iter: NodalField,
    g_next: NodalField,
    p: MaterialParams,
    tcfg: TruncationConfig,
    dt: float,
    q_boundary: np.ndarray | None = None,
    quad_degree: int = 4,
) -> AssembledStep:
    """Full linear system for the new Q-tensor (one matrix, d^2 rhs columns)."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    mass = assemble_mass(mesh)
    stiffness = assemble_stiffness(mesh)
    matrix = q_system_matrix(mesh, p, dt)
    rhs = q_system_rhs(
        mesh, qn, un, u_hat, q_iter, g_next, p, tcfg, dt, mass, stiffness,
        quad_degree=quad_degree,
    )
    fixed_dofs = np.flatnonzero(mesh.boundary_mask)
    if q_boundary is None:
        fixed_values = np.zeros((fixed_dofs.size, D * D))
    else:
        fixed_values = np.asarray(q_boundary, dtype=float)
    out_cols = np.empty_like(rhs)
    matrix_bc = None
    for comp in range(D * D):
        m_bc, b_bc = apply_dirichlet(
            matrix, rhs[:, comp], (fixed_dofs, fixed_values[:, comp])
        )
        out_cols[:, comp] = b_bc
        matrix_bc = m_bc  # identical across components: same fixed dofs
    return AssembledStep(
        matrix=matrix_bc,
        rhs=out_cols,
        components=D * D,
        fixed_dofs=fixed_dofs,
        fixed_values=fixed_values,
    )
