"""Scalar observables over simulation states.

The energy breakdown mirrors the functional whose decay the scheme
guarantees: elastic (M L/2)|grad Q|^2, bulk M F_B(Q), electric
(M eps1/2)|grad u|^2, dielectric coupling (M eps2/2) grad(u)^T T(Q) grad(u),
and the polarization work M eps3 div(Q).grad(u).  Gradient terms are exact
(element-constant gradients); pointwise nonlinearities integrate with the
degree-4 rule, which is exact for the quartic bulk density of a P1 field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import NodalField, quadrature, values_at_quadrature
from .qtensor import (
    DEGENERATE_TOL,
    MaterialParams,
    TruncationConfig,
    bulk_potential,
    leading_eigensystem,
    truncate,
)

__all__ = [
    "EnergyBreakdown",
    "energy_breakdown",
    "constraint_residuals",
    "field_extremes",
    "mean_director_angle",
]


@dataclass(frozen=True)
class EnergyBreakdown:
    elastic: float
    bulk: float
    electric: float
    coupling: float
    polarization: float

    @property
    def total(self) -> float:
        return self.elastic + self.bulk + self.electric + self.coupling + self.polarization


def _element_gradients(fld: NodalField) -> np.ndarray:
    _, grads = fld.mesh.geometry()
    nodal = fld.values[fld.mesh.triangles]
    return np.einsum("mic,mix->mcx", nodal, grads)


def energy_breakdown(
    state,
    p: MaterialParams,
    tcfg: TruncationConfig,
    quad_degree: int = 4,
) -> EnergyBreakdown:
    """Energy terms of a state (anything with .q, .u NodalFields)."""
    qf: NodalField = state.q
    uf: NodalField = state.u
    mesh = qf.mesh
    areas, _ = mesh.geometry()
    rule = quadrature(quad_degree)

    gq = _element_gradients(qf)  # (m, 4, 2)
    elastic = 0.5 * p.m * p.l * float(np.sum(areas * np.einsum("mcx,mcx->m", gq, gq)))

    qv = values_at_quadrature(qf, rule).reshape(-1, rule.weights.size, 2, 2)
    fb = bulk_potential(qv, p)  # (m, q)
    bulk = p.m * float(np.sum(areas * (fb @ rule.weights)))

    gu = _element_gradients(uf)[:, 0, :]  # (m, 2)
    electric = 0.5 * p.m * p.eps1 * float(np.sum(areas * np.einsum("mx,mx->m", gu, gu)))

    tq = truncate(qv, tcfg)
    quad_form = np.einsum("mx,mqxy,my->mq", gu, tq, gu)
    coupling = 0.5 * p.m * p.eps2 * float(np.sum(areas * (quad_form @ rule.weights)))

    gq_t = gq.reshape(-1, 2, 2, 2)
    div_q = np.einsum("mabb->ma", gq_t)
    polarization = p.m * p.eps3 * float(np.sum(areas * np.einsum("ma,ma->m", div_q, gu)))

    return EnergyBreakdown(
        elastic=elastic,
        bulk=bulk,
        electric=electric,
        coupling=coupling,
        polarization=polarization,
    )


def constraint_residuals(qf: NodalField) -> tuple[float, float]:
    """Node-wise maxima of |tr Q| and the max-norm of Q - Q^T."""
    q = qf.as_tensors()
    max_trace = float(np.max(np.abs(q[:, 0, 0] + q[:, 1, 1])))
    max_asym = float(np.max(np.abs(q[:, 0, 1] - q[:, 1, 0])))
    return max_trace, max_asym


def field_extremes(qf: NodalField) -> tuple[float, float]:
    """Largest |entry| and largest leading eigenvalue over all nodes."""
    q = qf.as_tensors()
    max_entry = float(np.max(np.abs(q)))
    lam, _ = leading_eigensystem(q)
    return max_entry, float(np.max(lam))


def mean_director_angle(qf: NodalField, axis=(0.0, 1.0)) -> float:
    """Mean angle in [0, pi/2] between the director and a reference axis.

    Interior nodes only; nodes with |Q|_F <= 1e-10 carry no director and are
    excluded.  Returns nan when every interior node is degenerate.
    """
    mesh = qf.mesh
    q = qf.as_tensors()[~mesh.boundary_mask]
    norms = np.sqrt(np.einsum("kij,kij->k", q, q))
    keep = norms > DEGENERATE_TOL
    if not np.any(keep):
        return math.nan
    _, v = leading_eigensystem(q[keep])
    ax = np.asarray(axis, dtype=float)
    ax = ax / np.linalg.norm(ax)
    cosines = np.clip(np.abs(v @ ax), 0.0, 1.0)
    return float(np.mean(np.arccos(cosines)))
