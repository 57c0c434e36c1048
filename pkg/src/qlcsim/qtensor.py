"""Pointwise Q-tensor algebra.

The local order parameter is a symmetric, trace-free d x d matrix Q.  This
module provides the bulk potential and its gradient, the convex splitting of
the potential into a difference of two convex parts (implicit/explicit halves
of the time discretization), the entrywise truncation operator that keeps the
dielectric coefficient positive definite, the secant quotient of the
truncation used by the discrete chain rule, and the closed-form 2x2
eigen-decomposition that yields the director.

All tensor operations accept stacked arrays of shape (..., d, d) so the same
code serves single tensors and batches of quadrature-point values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "MaterialParams",
    "TruncationConfig",
    "Director",
    "bulk_potential",
    "bulk_gradient",
    "split_potentials",
    "split_gradients",
    "truncate",
    "truncate_derivative",
    "secant_ratio",
    "leading_director",
    "leading_eigensystem",
    "is_symmetric",
    "is_trace_free",
    "random_symmetric_tracefree",
    "calibrate_a0",
]

SECANT_TOL = 1e-12  # relative scale for the derivative fallback in secant_ratio
DEGENERATE_TOL = 1e-10  # Frobenius norm below which a tensor has no director


@dataclass
class MaterialParams:
    """Bulk, splitting, mobility, elastic and dielectric coefficients.

    ``beta1``/``beta2`` are the convex-splitting shifts; the splitting is a
    difference of convex functions when beta1 >= max(|b|, a) and
    beta2 >= max(|b|, c).
    """

    a: float
    b: float
    c: float
    beta1: float
    beta2: float
    m: float
    l: float
    eps1: float
    eps2: float
    eps3: float
    a0: float = 0.0

    def validate(self) -> None:
        """Raise ValueError on violations of the type invariants."""
        errors = []
        if not self.c > 0:
            errors.append(f"c must be positive, got {self.c}")
        if not self.l > 0:
            errors.append(f"l must be positive, got {self.l}")
        if not self.m > 0:
            errors.append(f"m must be positive, got {self.m}")
        if not self.eps1 > 0:
            errors.append(f"eps1 must be positive, got {self.eps1}")
        if self.beta1 < max(abs(self.b), self.a):
            errors.append(
                f"beta1 = {self.beta1} violates beta1 >= max(|b|, a) = "
                f"{max(abs(self.b), self.a)}"
            )
        if self.beta2 < max(abs(self.b), self.c):
            errors.append(
                f"beta2 = {self.beta2} violates beta2 >= max(|b|, c) = "
                f"{max(abs(self.b), self.c)}"
            )
        if errors:
            raise ValueError("invalid material parameters: " + "; ".join(errors))


@dataclass
class TruncationConfig:
    """Entrywise truncation of Q-tensor entries.

    mode "none" leaves entries untouched (the experiments' setting); mode
    "smooth_clamp" clamps each entry to magnitude <= r/dim so the Frobenius
    norm of the truncated tensor never exceeds r.  eps_t > 0 widens the clamp
    into a C^1 quadratic blend on [r/dim - 2*eps_t, r/dim]; eps_t = 0 is the
    exact clamp.  eps_t = None selects the default 0.05 * r/dim.
    """

    mode: str = "none"
    r: float = 0.0
    eps_t: float | None = None

    def validate(self, dim: int = 2) -> None:
        if self.mode not in ("none", "smooth_clamp"):
            raise ValueError(f"unknown truncation mode {self.mode!r}")
        if self.mode == "smooth_clamp":
            if not self.r > 0:
                raise ValueError(f"truncation radius must be positive, got {self.r}")
            e = self.half_width(dim)
            if e < 0 or 2.0 * e > self.r / dim:
                raise ValueError(
                    f"eps_t = {e} outside [0, r/(2 dim)] = [0, {self.r / (2 * dim)}]"
                )

    def half_width(self, dim: int) -> float:
        if self.eps_t is None:
            return 0.05 * self.r / dim
        return float(self.eps_t)


def _entry_dim(q: np.ndarray) -> int:
    q = np.asarray(q)
    if q.ndim < 2 or q.shape[-1] != q.shape[-2]:
        raise ValueError(f"expected (..., d, d) array, got shape {q.shape}")
    return int(q.shape[-1])


def is_symmetric(q: np.ndarray, tol: float = 1e-12) -> bool:
    q = np.asarray(q, dtype=float)
    return bool(np.max(np.abs(q - np.swapaxes(q, -1, -2))) <= tol)


def is_trace_free(q: np.ndarray, tol: float = 1e-12) -> bool:
    q = np.asarray(q, dtype=float)
    return bool(np.max(np.abs(np.trace(q, axis1=-2, axis2=-1))) <= tol)


def _tr_q2(q: np.ndarray) -> np.ndarray:
    # Frobenius inner product <Q, Q>; equals tr(Q^2) for symmetric Q.
    return np.einsum("...ij,...ij->...", q, q)


def _tr_q3(q: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...jk,...ki->...", q, q, q)


def bulk_potential(q: np.ndarray, p: MaterialParams):
    """Bulk free-energy density a/2 tr(Q^2) - b/3 tr(Q^3) + c/4 (tr Q^2)^2 + A0."""
    q = np.asarray(q, dtype=float)
    _entry_dim(q)
    t2 = _tr_q2(q)
    t3 = _tr_q3(q)
    out = 0.5 * p.a * t2 - (p.b / 3.0) * t3 + 0.25 * p.c * t2 * t2 + p.a0
    return float(out) if np.ndim(out) == 0 else out


def bulk_gradient(q: np.ndarray, p: MaterialParams) -> np.ndarray:
    """Variational derivative of the bulk potential on symmetric trace-free Q.

    aQ - b(Q^2 - tr(Q^2)/d I) + c tr(Q^2) Q; symmetric and trace-free whenever
    Q is.
    """
    q = np.asarray(q, dtype=float)
    d = _entry_dim(q)
    t2 = _tr_q2(q)[..., None, None]
    q2 = q @ q
    eye = np.eye(d)
    return p.a * q - p.b * (q2 - t2 * eye / d) + p.c * t2 * q


def split_potentials(q: np.ndarray, p: MaterialParams):
    """Convex splitting halves; their difference is the bulk potential.

    First half beta1/2 <Q,Q> - b/3 <Q^2,Q> + beta2/4 <Q,Q>^2 + A0, second
    half (beta1-a)/2 <Q,Q> + (beta2-c)/4 <Q,Q>^2; both convex when
    beta1 >= max(|b|, a) and beta2 >= max(|b|, c).
    """
    q = np.asarray(q, dtype=float)
    _entry_dim(q)
    t2 = _tr_q2(q)
    t3 = _tr_q3(q)
    f1 = 0.5 * p.beta1 * t2 - (p.b / 3.0) * t3 + 0.25 * p.beta2 * t2 * t2 + p.a0
    f2 = 0.5 * (p.beta1 - p.a) * t2 + 0.25 * (p.beta2 - p.c) * t2 * t2
    if np.ndim(f1) == 0:
        return float(f1), float(f2)
    return f1, f2


def split_gradients(q: np.ndarray, p: MaterialParams) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the convex splitting halves (implicit part, explicit part).

    The first gradient carries the trace correction -(b/d) tr(Q^2) I used by
    the trace-preservation argument; the difference of the two equals
    bulk_gradient identically.
    """
    q = np.asarray(q, dtype=float)
    d = _entry_dim(q)
    t2 = _tr_q2(q)[..., None, None]
    q2 = q @ q
    eye = np.eye(d)
    g1 = p.beta1 * q - p.b * (q2 - t2 * eye / d) + p.beta2 * t2 * q
    g2 = (p.beta1 - p.a) * q + (p.beta2 - p.c) * t2 * q
    return g1, g2


def _clamp_level(cfg: TruncationConfig, dim: int) -> tuple[float, float]:
    level = cfg.r / dim
    return level, cfg.half_width(dim)


def _truncate_entries(y: np.ndarray, level: float, e: float) -> np.ndarray:
    if e == 0.0:
        return np.clip(y, -level, level)
    a = level - 2.0 * e
    s = np.abs(y)
    blended = s - (s - a) ** 2 / (4.0 * e)
    mag = np.where(s <= a, s, np.where(s >= level, level - e, blended))
    return np.sign(y) * mag


def _truncate_deriv_entries(y: np.ndarray, level: float, e: float) -> np.ndarray:
    s = np.abs(y)
    if e == 0.0:
        # the kink at |y| = level counts as saturated
        return np.where(s < level, 1.0, 0.0)
    a = level - 2.0 * e
    return np.where(s <= a, 1.0, np.where(s >= level, 0.0, 1.0 - (s - a) / (2.0 * e)))


def truncate(q: np.ndarray, cfg: TruncationConfig) -> np.ndarray:
    """Entrywise truncation; odd, monotone, C^1, |result|_F <= r."""
    q = np.asarray(q, dtype=float)
    if cfg.mode == "none":
        return q.copy()
    level, e = _clamp_level(cfg, _entry_dim(q))
    return _truncate_entries(q, level, e)


def truncate_derivative(q: np.ndarray, cfg: TruncationConfig) -> np.ndarray:
    """Entrywise derivative of truncate; every entry lies in [0, 1]."""
    q = np.asarray(q, dtype=float)
    if cfg.mode == "none":
        return np.ones_like(q)
    level, e = _clamp_level(cfg, _entry_dim(q))
    return _truncate_deriv_entries(q, level, e)


def secant_ratio(a: np.ndarray, b: np.ndarray, cfg: TruncationConfig) -> np.ndarray:
    """Entrywise secant slope of the truncation between two tensors.

    (T(A)_ij - T(B)_ij) / (A_ij - B_ij), falling back to the derivative at B
    when the denominator is below 1e-12*max(1, |A_ij|, |B_ij|).  Entries are
    clipped into [0, 1]: the exact slope lies there, the clip only removes
    round-off noise of the quotient near the fallback threshold.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if cfg.mode == "none":
        return np.ones(np.broadcast_shapes(a.shape, b.shape))
    diff = a - b
    tol = SECANT_TOL * np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    small = np.abs(diff) <= tol
    safe = np.where(small, 1.0, diff)
    ratio = (truncate(a, cfg) - truncate(b, cfg)) / safe
    out = np.where(small, truncate_derivative(b, cfg), ratio)
    return np.clip(out, 0.0, 1.0)


class Director(NamedTuple):
    value: float
    direction: np.ndarray
    degenerate: bool


def leading_director(q: np.ndarray) -> Director:
    """Largest eigenvalue and unit eigenvector of a symmetric 2x2 tensor.

    The eigenvector sign is fixed by a non-negative second component (first
    component non-negative when the second vanishes).  Tensors with Frobenius
    norm below DEGENERATE_TOL have no meaningful direction; they report
    eigenvalue 0 and the arbitrary direction (0, 1), flagged degenerate.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (2, 2):
        raise ValueError(f"leading_director needs a 2x2 tensor, got shape {q.shape}")
    lam, v = leading_eigensystem(q[None])
    degenerate = float(np.sqrt(np.sum(q * q))) <= DEGENERATE_TOL
    if degenerate:
        return Director(0.0, np.array([0.0, 1.0]), True)
    return Director(float(lam[0]), v[0], False)


def leading_eigensystem(q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized closed-form eigen-solve for stacked symmetric 2x2 tensors.

    Returns (lam, v) with lam the larger eigenvalue and v the unit eigenvector
    under the same sign convention as leading_director.  Near-isotropic
    tensors (no spectral gap) get the conventional direction (0, 1).
    """
    q = np.asarray(q, dtype=float)
    p11 = q[..., 0, 0]
    p12 = 0.5 * (q[..., 0, 1] + q[..., 1, 0])
    p22 = q[..., 1, 1]
    mean = 0.5 * (p11 + p22)
    dev = np.sqrt((0.5 * (p11 - p22)) ** 2 + p12 * p12)
    lam = mean + dev

    # eigenvector from the better conditioned of the two candidate rows
    c1 = np.stack([p12, lam - p11], axis=-1)
    c2 = np.stack([lam - p22, p12], axis=-1)
    use_c1 = np.abs(lam - p11) >= np.abs(lam - p22)
    v = np.where(use_c1[..., None], c1, c2)
    norm = np.linalg.norm(v, axis=-1)
    flat = norm <= 1e-14 * np.maximum(1.0, np.abs(lam))
    v = np.where(flat[..., None], np.array([0.0, 1.0]), v)
    norm = np.where(flat, 1.0, norm)
    v = v / norm[..., None]
    # sign convention: second component >= 0, tie broken by the first
    flip = (v[..., 1] < 0.0) | ((v[..., 1] == 0.0) & (v[..., 0] < 0.0))
    v = np.where(flip[..., None], -v, v)
    return lam, v


def random_symmetric_tracefree(
    rng: np.random.Generator, dim: int, size: int = 1, scale: float = 1.0
) -> np.ndarray:
    """Sample (size, dim, dim) symmetric trace-free tensors, entries ~ scale."""
    g = rng.normal(scale=scale, size=(size, dim, dim))
    s = 0.5 * (g + np.swapaxes(g, -1, -2))
    tr = np.trace(s, axis1=-2, axis2=-1)[..., None, None]
    return s - tr * np.eye(dim) / dim


def calibrate_a0(p: MaterialParams, dim: int = 2, s_max: float = 5.0, n: int = 20001) -> float:
    """A0 making min F_B = 0 over the uniaxial family Q = s (nn^T - I/d).

    One-dimensional scan in s; the additive constant shifts the energy only,
    so this is an optional report-time calibration.
    """
    s = np.linspace(-s_max, s_max, n)
    t2 = s * s * (1.0 - 1.0 / dim)
    if dim == 2:
        t3 = np.zeros_like(s)
    else:
        t3 = s**3 * ((1.0 - 1.0 / dim) ** 3 + (dim - 1) * (-1.0 / dim) ** 3)
    fb = 0.5 * p.a * t2 - (p.b / 3.0) * t3 + 0.25 * p.c * t2 * t2
    return float(-np.min(fb))
