"""Structured triangulation of a rectangle and P1 nodal machinery.

The mesh is a uniform (nx x ny)-cell grid, each cell split along its
lower-left to upper-right diagonal, with row-major node numbering.  Fields
are stored nodally (piecewise linear); gradients are element-constant.
Quadrature rules live on the reference triangle in barycentric coordinates
with weights normalized to sum to 1 (multiply by the element area to
integrate).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TriMesh",
    "NodalField",
    "QuadratureRule",
    "build_rect_mesh",
    "element_geometry",
    "interpolate_nodal",
    "eval_gradient",
    "quadrature",
]


@dataclass
class TriMesh:
    nodes: np.ndarray  # (n, 2)
    triangles: np.ndarray  # (m, 3) counter-clockwise
    boundary_mask: np.ndarray  # (n,) bool
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int
    _areas: np.ndarray | None = field(default=None, repr=False, compare=False)
    _grads: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def geometry(self) -> tuple[np.ndarray, np.ndarray]:
        """All element areas (m,) and barycentric gradients (m, 3, 2), cached."""
        if self._areas is None:
            p = self.nodes[self.triangles]  # (m, 3, 2)
            e1 = p[:, 1] - p[:, 0]
            e2 = p[:, 2] - p[:, 0]
            two_a = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
            if np.any(two_a <= 0):
                raise ValueError("triangulation contains non-positive areas")
            # grad(lambda_i) = (y_j - y_k, x_k - x_j) / 2A, (i, j, k) cyclic
            grads = np.empty((self.n_triangles, 3, 2))
            for i in range(3):
                j, k = (i + 1) % 3, (i + 2) % 3
                grads[:, i, 0] = p[:, j, 1] - p[:, k, 1]
                grads[:, i, 1] = p[:, k, 0] - p[:, j, 0]
            grads /= two_a[:, None, None]
            self._areas = 0.5 * two_a
            self._grads = grads
        return self._areas, self._grads


def build_rect_mesh(
    x_min: float, x_max: float, y_min: float, y_max: float, nx: int, ny: int
) -> TriMesh:
    """Uniform triangulation of [x_min, x_max] x [y_min, y_max].

    (nx+1)(ny+1) nodes in row-major order, 2*nx*ny triangles; every cell is
    split along the same lower-left to upper-right diagonal.
    """
    if nx < 1 or ny < 1:
        raise ValueError(f"subdivision counts must be >= 1, got nx={nx}, ny={ny}")
    if not (x_max > x_min and y_max > y_min):
        raise ValueError("empty rectangle")

    xs = np.linspace(x_min, x_max, nx + 1)
    ys = np.linspace(y_min, y_max, ny + 1)
    gx, gy = np.meshgrid(xs, ys)  # gy varies along rows: row-major in y
    nodes = np.column_stack([gx.ravel(), gy.ravel()])

    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny))
    v00 = (iy * (nx + 1) + ix).ravel()
    v10 = v00 + 1
    v01 = v00 + (nx + 1)
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    bx, by = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1))
    boundary = (bx == 0) | (bx == nx) | (by == 0) | (by == ny)

    return TriMesh(
        nodes=nodes,
        triangles=triangles,
        boundary_mask=boundary.ravel(),
        x_min=float(x_min),
        x_max=float(x_max),
        y_min=float(y_min),
        y_max=float(y_max),
        nx=int(nx),
        ny=int(ny),
    )


def element_geometry(mesh: TriMesh, tri_index: int) -> tuple[float, np.ndarray]:
    """Area and the three barycentric-coordinate gradients of one element."""
    if not 0 <= tri_index < mesh.n_triangles:
        raise IndexError(f"triangle index {tri_index} out of range")
    areas, grads = mesh.geometry()
    return float(areas[tri_index]), grads[tri_index]


@dataclass
class NodalField:
    """Per-node values of a scalar or tensor field; (n_nodes, components)."""

    mesh: TriMesh
    components: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_nodes, self.components):
            raise ValueError(
                f"values shape {self.values.shape} != "
                f"({self.mesh.n_nodes}, {self.components})"
            )

    @classmethod
    def zeros(cls, mesh: TriMesh, components: int = 1) -> "NodalField":
        return cls(mesh, components, np.zeros((mesh.n_nodes, components)))

    def as_tensors(self) -> np.ndarray:
        """View a d^2-component field as (n, d, d) row-major tensors."""
        d = int(round(np.sqrt(self.components)))
        if d * d != self.components:
            raise ValueError(f"{self.components} components is not a square")
        return self.values.reshape(self.mesh.n_nodes, d, d)

    def copy(self) -> "NodalField":
        return NodalField(self.mesh, self.components, self.values.copy())


def interpolate_nodal(mesh: TriMesh, f, t: float = 0.0) -> NodalField:
    """Nodal interpolant of f(t, x, y); tries a vectorized call first."""
    x = mesh.nodes[:, 0]
    y = mesh.nodes[:, 1]
    try:
        vals = np.asarray(f(t, x, y), dtype=float)
        vals = np.broadcast_to(vals, x.shape).astype(float)
    except Exception:
        vals = np.array([float(f(t, xi, yi)) for xi, yi in mesh.nodes])
    return NodalField(mesh, 1, vals.reshape(-1, 1))


def eval_gradient(
    mesh: TriMesh, fld: NodalField, tri_index: int, component: int = 0
) -> np.ndarray:
    """Element-constant gradient of one component on one triangle."""
    _, grads = mesh.geometry()
    tri = mesh.triangles[tri_index]
    vals = fld.values[tri, component]
    return vals @ grads[tri_index]


def all_gradients(fld: NodalField) -> np.ndarray:
    """(m, components, 2) element-constant gradients of every component."""
    _, grads = fld.mesh.geometry()
    nodal = fld.values[fld.mesh.triangles]  # (m, 3, c)
    return np.einsum("mic,mix->mcx", nodal, grads)


def values_at_quadrature(fld: NodalField, rule: "QuadratureRule") -> np.ndarray:
    """(m, q, components) field values at the rule's points on every element."""
    nodal = fld.values[fld.mesh.triangles]  # (m, 3, c)
    return np.einsum("qi,mic->mqc", rule.points, nodal)


def quadrature_xy(mesh: TriMesh, rule: "QuadratureRule") -> np.ndarray:
    """(m, q, 2) physical coordinates of the quadrature points."""
    p = mesh.nodes[mesh.triangles]  # (m, 3, 2)
    return np.einsum("qi,mix->mqx", rule.points, p)


@dataclass(frozen=True)
class QuadratureRule:
    degree: int
    points: np.ndarray  # (q, 3) barycentric
    weights: np.ndarray  # (q,), sums to 1


def _orbit(points, weight):
    return [(np.array(p), weight) for p in points]


def quadrature(degree: int) -> QuadratureRule:
    """Symmetric rules on the reference triangle, exact to the given degree."""
    if degree == 2:
        pts = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
        w = np.full(3, 1.0 / 3.0)
    elif degree == 4:
        a1, w1 = 0.816847572980459, 0.109951743655322
        a2, w2 = 0.108103018168070, 0.223381589678011
        pts, w = _dunavant_orbits([(a1, w1), (a2, w2)])
    elif degree == 6:
        a1, w1 = 0.873821971016996, 0.050844906370207
        a2, w2 = 0.501426509658179, 0.116786275726379
        pts, w = _dunavant_orbits([(a1, w1), (a2, w2)])
        b, c, w3 = 0.636502499121399, 0.310352451033785, 0.082851075618374
        extra = np.array(
            [
                [b, c, 1 - b - c],
                [c, 1 - b - c, b],
                [1 - b - c, b, c],
                [c, b, 1 - b - c],
                [b, 1 - b - c, c],
                [1 - b - c, c, b],
            ]
        )
        pts = np.vstack([pts, extra])
        w = np.concatenate([w, np.full(6, w3)])
    else:
        raise ValueError(f"unsupported quadrature degree {degree} (use 2, 4 or 6)")
    return QuadratureRule(degree=degree, points=pts, weights=w)


def _dunavant_orbits(orbits):
    pts, ws = [], []
    for a, w in orbits:
        b = (1.0 - a) / 2.0
        pts += [[a, b, b], [b, a, b], [b, b, a]]
        ws += [w, w, w]
    return np.array(pts), np.array(ws)


def locate_points(mesh: TriMesh, xy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map points to (triangle index, barycentric coords) on the structured grid.

    Points outside the rectangle are clamped onto it; exact on the closure.
    """
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    hx = (mesh.x_max - mesh.x_min) / mesh.nx
    hy = (mesh.y_max - mesh.y_min) / mesh.ny
    fx = np.clip((xy[:, 0] - mesh.x_min) / hx, 0.0, mesh.nx * (1 - 1e-16))
    fy = np.clip((xy[:, 1] - mesh.y_min) / hy, 0.0, mesh.ny * (1 - 1e-16))
    ix = np.minimum(fx.astype(np.int64), mesh.nx - 1)
    iy = np.minimum(fy.astype(np.int64), mesh.ny - 1)
    xi = fx - ix
    eta = fy - iy
    cell = iy * mesh.nx + ix
    lower = xi >= eta  # below the v00 -> v11 diagonal
    tri = 2 * cell + np.where(lower, 0, 1)
    lam = np.empty((xy.shape[0], 3))
    # lower triangle (v00, v10, v11): lambdas (1-xi, xi-eta, eta)
    lam[lower, 0] = 1.0 - xi[lower]
    lam[lower, 1] = xi[lower] - eta[lower]
    lam[lower, 2] = eta[lower]
    up = ~lower
    # upper triangle (v00, v11, v01): lambdas (1-eta, xi, eta-xi)
    lam[up, 0] = 1.0 - eta[up]
    lam[up, 1] = xi[up]
    lam[up, 2] = eta[up] - xi[up]
    return tri, lam


def eval_at_points(fld: NodalField, xy: np.ndarray) -> np.ndarray:
    """Exact P1 evaluation of the field at arbitrary points, (k, components)."""
    tri, lam = locate_points(fld.mesh, xy)
    nodal = fld.values[fld.mesh.triangles[tri]]  # (k, 3, c)
    return np.einsum("ki,kic->kc", lam, nodal)
