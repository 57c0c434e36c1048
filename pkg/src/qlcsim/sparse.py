"""CSR storage, Jacobi-preconditioned conjugate gradients, Dirichlet elimination.

Both per-step systems of the scheme are symmetric positive definite (the
elliptic operator by coercivity, the Q update as mass + stiffness), so a
single preconditioned CG covers every solve.  Construction from triplets
sums duplicates and is deterministic regardless of input order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CSRMatrix",
    "SolveReport",
    "NotSPDError",
    "csr_from_triplets",
    "spmv",
    "cg_solve",
    "apply_dirichlet",
]


class NotSPDError(Exception):
    """CG breakdown: the operator is not positive definite on the free dofs."""


@dataclass
class CSRMatrix:
    n: int
    indptr: np.ndarray  # (n+1,)
    indices: np.ndarray  # (nnz,) sorted within each row
    data: np.ndarray  # (nnz,)
    _rows: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def nnz(self) -> int:
        return self.indices.shape[0]

    def row_expansion(self) -> np.ndarray:
        """Row index of every stored entry (cached; used by spmv)."""
        if self._rows is None:
            self._rows = np.repeat(
                np.arange(self.n, dtype=np.int64), np.diff(self.indptr)
            )
        return self._rows

    def has_empty_rows(self) -> bool:
        if not hasattr(self, "_empty_rows"):
            self._empty_rows = bool(np.any(np.diff(self.indptr) == 0))
        return self._empty_rows

    def diagonal(self) -> np.ndarray:
        diag = np.zeros(self.n)
        rows = self.row_expansion()
        on_diag = rows == self.indices
        diag[rows[on_diag]] = self.data[on_diag]
        return diag

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n, self.n))
        dense[self.row_expansion(), self.indices] = self.data
        return dense

    def scaled(self, alpha: float) -> "CSRMatrix":
        return CSRMatrix(self.n, self.indptr, self.indices, alpha * self.data)

    def structure_bytes(self) -> bytes:
        """Byte image of the matrix; equal bytes mean identical matrices."""
        return (
            self.indptr.tobytes() + self.indices.tobytes() + self.data.tobytes()
        )


def csr_from_triplets(n: int, triplets) -> CSRMatrix:
    """Build an n x n CSR matrix from (row, col, value) triplets.

    Duplicates are summed.  The result is independent of the triplet order:
    entries are sorted by (row, col, value) before accumulation, so equal
    multisets of triplets produce bitwise identical matrices.
    """
    if isinstance(triplets, tuple) and len(triplets) == 3:
        rows, cols, vals = triplets
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=float)
    else:
        arr = np.asarray(list(triplets), dtype=float)
        if arr.size == 0:
            arr = arr.reshape(0, 3)
        rows = arr[:, 0].astype(np.int64)
        cols = arr[:, 1].astype(np.int64)
        vals = arr[:, 2]
    if rows.size and (
        rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= n
    ):
        raise IndexError("triplet index out of range")

    order = np.lexsort((vals, cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if rows.size:
        first = np.ones(rows.size, dtype=bool)
        first[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        starts = np.flatnonzero(first)
        sums = np.add.reduceat(vals, starts)
        rows, cols, vals = rows[starts], cols[starts], sums
    counts = np.bincount(rows, minlength=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return CSRMatrix(n=n, indptr=indptr, indices=cols, data=vals)


def spmv(a: CSRMatrix, x: np.ndarray) -> np.ndarray:
    """Sparse matrix-vector product."""
    x = np.asarray(x, dtype=float)
    if x.shape != (a.n,):
        raise ValueError(f"dimension mismatch: matrix {a.n}, vector {x.shape}")
    if a.nnz == 0:
        return np.zeros(a.n)
    prods = a.data * x[a.indices]
    if a.has_empty_rows():
        # reduceat misbehaves on empty segments; fall back to bincount
        return np.bincount(a.row_expansion(), weights=prods, minlength=a.n)
    return np.add.reduceat(prods, a.indptr[:-1])


@dataclass
class SolveReport:
    iterations: int
    residual: float
    converged: bool


def cg_solve(
    a: CSRMatrix,
    b: np.ndarray,
    x0: np.ndarray | None = None,
    tol: float = 1e-12,
    max_iter: int | None = None,
) -> tuple[np.ndarray, SolveReport]:
    """Jacobi-preconditioned CG for SPD systems.

    Converged means ||b - A x|| / ||b|| <= tol (verified against the true
    residual, not the recurrence).  Non-convergence returns the best iterate
    found with converged=False.  An indefinite operator raises NotSPDError.
    """
    b = np.asarray(b, dtype=float)
    if b.shape != (a.n,):
        raise ValueError(f"dimension mismatch: matrix {a.n}, rhs {b.shape}")
    if max_iter is None:
        max_iter = 10 * a.n

    nb = float(np.linalg.norm(b))
    if nb == 0.0:
        return np.zeros(a.n), SolveReport(iterations=0, residual=0.0, converged=True)

    diag = a.diagonal()
    if np.any(diag <= 0):
        raise NotSPDError("non-positive diagonal entry; matrix cannot be SPD")
    inv_diag = 1.0 / diag

    x = np.zeros(a.n) if x0 is None else np.array(x0, dtype=float)
    r = b - spmv(a, x)
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    best_x = x.copy()
    best_res = float(np.linalg.norm(r))

    if best_res / nb <= tol:
        return x, SolveReport(iterations=0, residual=best_res / nb, converged=True)

    for k in range(1, max_iter + 1):
        ap = spmv(a, p)
        pap = float(p @ ap)
        if pap <= 0.0:
            raise NotSPDError(
                f"CG breakdown at iteration {k}: p^T A p = {pap:.3e} <= 0"
            )
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        res = float(np.linalg.norm(r))
        if not math.isfinite(res):
            return best_x, SolveReport(iterations=k, residual=best_res / nb, converged=False)
        if res < best_res:
            best_res = res
            best_x = x.copy()
        if res / nb <= tol:
            true_res = float(np.linalg.norm(b - spmv(a, x)))
            if true_res / nb <= tol:
                return x, SolveReport(iterations=k, residual=true_res / nb, converged=True)
            r = b - spmv(a, x)
            res = true_res
        z = inv_diag * r
        rz_new = float(r @ z)
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p

    return best_x, SolveReport(
        iterations=max_iter, residual=best_res / nb, converged=False
    )


def spmm(a: CSRMatrix, x: np.ndarray) -> np.ndarray:
    """Sparse matrix times a block of column vectors, (n, k)."""
    prods = a.data[:, None] * x[a.indices, :]
    if a.has_empty_rows():
        rows = a.row_expansion()
        out = np.empty_like(x)
        for col in range(x.shape[1]):
            out[:, col] = np.bincount(rows, weights=prods[:, col], minlength=a.n)
        return out
    return np.add.reduceat(prods, a.indptr[:-1], axis=0)


def cg_solve_block(
    a: CSRMatrix,
    b: np.ndarray,
    x0: np.ndarray | None = None,
    tol: float = 1e-12,
    max_iter: int | None = None,
) -> tuple[np.ndarray, list[SolveReport]]:
    """Jacobi-preconditioned CG on several right-hand sides of one matrix.

    Per-column step lengths; columns stop updating once converged.  Agrees
    with cg_solve column by column up to the solver tolerance.
    """
    b = np.asarray(b, dtype=float)
    n, k = b.shape
    if n != a.n:
        raise ValueError(f"dimension mismatch: matrix {a.n}, rhs {b.shape}")
    if max_iter is None:
        max_iter = 10 * a.n

    diag = a.diagonal()
    if np.any(diag <= 0):
        raise NotSPDError("non-positive diagonal entry; matrix cannot be SPD")
    inv_diag = 1.0 / diag

    nb = np.linalg.norm(b, axis=0)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    x[:, nb == 0.0] = 0.0
    r = b - spmm(a, x)
    z = inv_diag[:, None] * r
    p = z.copy()
    rz = np.einsum("nk,nk->k", r, z)
    res = np.linalg.norm(r, axis=0)
    target = tol * np.where(nb == 0.0, 1.0, nb)
    active = res > target
    iters = np.zeros(k, dtype=int)

    it = 0
    while np.any(active) and it < max_iter:
        it += 1
        ap = spmm(a, p)
        pap = np.einsum("nk,nk->k", p, ap)
        if np.any((pap <= 0.0) & active):
            raise NotSPDError(f"CG breakdown at iteration {it}: p^T A p <= 0")
        alpha = np.where(active, rz / np.where(pap == 0, 1.0, pap), 0.0)
        x += alpha * p
        r -= alpha * ap
        res = np.linalg.norm(r, axis=0)
        if not np.all(np.isfinite(res[active])):
            break
        iters[active] = it
        newly_done = active & (res <= target)
        if np.any(newly_done):
            # verify against the true residual before retiring a column
            true_r = b[:, newly_done] - spmm(a, x[:, newly_done])
            ok = np.linalg.norm(true_r, axis=0) <= target[newly_done]
            idx = np.flatnonzero(newly_done)
            active[idx[ok]] = False
        z = inv_diag[:, None] * r
        rz_new = np.einsum("nk,nk->k", r, z)
        beta = np.where(rz == 0, 0.0, rz_new / np.where(rz == 0, 1.0, rz))
        rz = rz_new
        p = z + beta * p

    reports = []
    final_res = np.linalg.norm(b - spmm(a, x), axis=0)
    for col in range(k):
        rel = final_res[col] / (nb[col] if nb[col] else 1.0)
        reports.append(
            SolveReport(iterations=int(iters[col]), residual=float(rel),
                        converged=bool(rel <= tol))
        )
    return x, reports


def apply_dirichlet(a: CSRMatrix, b: np.ndarray, fixed) -> tuple[CSRMatrix, np.ndarray]:
    """Symmetric elimination of Dirichlet constraints.

    Fixed rows and columns are zeroed, the diagonal is set to 1, and the
    known values move to the right-hand side, so the reduced system stays SPD
    and the fixed dofs solve to exactly their prescribed values.  ``fixed``
    is a sequence of (dof, value) pairs or a pair of arrays; duplicate dofs
    with conflicting values are rejected.
    """
    b = np.asarray(b, dtype=float).copy()
    if isinstance(fixed, tuple) and len(fixed) == 2 and np.ndim(fixed[0]) == 1:
        dofs = np.asarray(fixed[0], dtype=np.int64)
        values = np.asarray(fixed[1], dtype=float)
    else:
        pairs = list(fixed)
        dofs = np.array([int(d) for d, _ in pairs], dtype=np.int64)
        values = np.array([float(v) for _, v in pairs])
    if dofs.size == 0:
        return a, b
    if dofs.min() < 0 or dofs.max() >= a.n:
        raise IndexError("fixed dof out of range")

    order = np.argsort(dofs, kind="stable")
    dofs, values = dofs[order], values[order]
    same = dofs[1:] == dofs[:-1]
    if np.any(same & (values[1:] != values[:-1])):
        raise ValueError("conflicting values for a repeated Dirichlet dof")
    keep_first = np.ones(dofs.size, dtype=bool)
    keep_first[1:] = ~same
    dofs, values = dofs[keep_first], values[keep_first]

    value_of = np.zeros(a.n)
    is_fixed = np.zeros(a.n, dtype=bool)
    value_of[dofs] = values
    is_fixed[dofs] = True

    rows = a.row_expansion()
    cols = a.indices
    # move known values to the rhs before dropping coupled entries
    coupling = (~is_fixed[rows]) & is_fixed[cols]
    np.subtract.at(b, rows[coupling], a.data[coupling] * value_of[cols[coupling]])
    b[dofs] = values

    keep = (~is_fixed[rows]) & (~is_fixed[cols])
    new_rows = np.concatenate([rows[keep], dofs])
    new_cols = np.concatenate([cols[keep], dofs])
    new_data = np.concatenate([a.data[keep], np.ones(dofs.size)])
    return csr_from_triplets(a.n, (new_rows, new_cols, new_data)), b
