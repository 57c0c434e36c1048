"""Legacy VTK 2.0 ASCII snapshots of simulation states.

One unstructured grid per file: POINTS, CELLS (triangles, type 5), then
POINT_DATA with the scalar potential u, the Q-tensor zero-padded to 3x3, and
the director (leading unit eigenvector scaled by the leading eigenvalue).
Values print with 17 significant digits, so re-parsing reproduces the exact
doubles and identical states yield byte-identical files.
"""

from __future__ import annotations

import numpy as np

from .qtensor import DEGENERATE_TOL, leading_eigensystem

__all__ = ["write_vtk"]


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def write_vtk(state, path) -> None:
    mesh = state.q.mesh
    q = state.q.as_tensors()
    u = state.u.values[:, 0]

    lam, vec = leading_eigensystem(q)
    norms = np.sqrt(np.einsum("kij,kij->k", q, q))
    degenerate = norms <= DEGENERATE_TOL
    directors = lam[:, None] * vec
    directors[degenerate] = 0.0

    lines = []
    push = lines.append
    push("# vtk DataFile Version 2.0")
    push(f"qlcsim snapshot step={state.n} t={_fmt(state.t)}")
    push("ASCII")
    push("DATASET UNSTRUCTURED_GRID")
    push(f"POINTS {mesh.n_nodes} double")
    for x, y in mesh.nodes:
        push(f"{_fmt(x)} {_fmt(y)} 0")
    m = mesh.n_triangles
    push(f"CELLS {m} {4 * m}")
    for a, b, c in mesh.triangles:
        push(f"3 {a} {b} {c}")
    push(f"CELL_TYPES {m}")
    lines.extend(["5"] * m)
    push(f"POINT_DATA {mesh.n_nodes}")
    push("SCALARS u double 1")
    push("LOOKUP_TABLE default")
    for val in u:
        push(_fmt(val))
    push("TENSORS q double")
    for tensor in q:
        push(f"{_fmt(tensor[0, 0])} {_fmt(tensor[0, 1])} 0")
        push(f"{_fmt(tensor[1, 0])} {_fmt(tensor[1, 1])} 0")
        push("0 0 0")
    push("VECTORS director double")
    for dx, dy in directors:
        push(f"{_fmt(dx)} {_fmt(dy)} 0")
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
