"""Lagrange P1/P2 elements on tetrahedra, DOF maps and simplex quadrature."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import roots_jacobi

from .mesh import TET_EDGES, Mesh


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Points in reference coordinates (x, y, z) and weights summing to 1/6."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def __len__(self):
        return len(self.weights)


def _orbit(lams):
    """All distinct permutations of a barycentric tuple, as reference coordinates."""
    from itertools import permutations

    pts = sorted(set(permutations(lams)))
    return np.array(pts)[:, 1:]


def _symmetric_rule(orbits, degree):
    pts, wts = [], []
    for lams, w in orbits:
        p = _orbit(lams)
        pts.append(p)
        wts.append(np.full(len(p), w))
    return QuadratureRule(np.concatenate(pts), np.concatenate(wts), degree)


def _conical_rule(degree: int) -> QuadratureRule:
    # Stroud conical product: collapsed Gauss-Jacobi, all weights positive
    n = degree // 2 + 1
    x0, w0 = roots_jacobi(n, 2.0, 0.0)
    x1, w1 = roots_jacobi(n, 1.0, 0.0)
    x2, w2 = roots_jacobi(n, 0.0, 0.0)
    a, b, c = (x0 + 1) / 2, (x1 + 1) / 2, (x2 + 1) / 2
    wa, wb, wc = w0 / 8, w1 / 4, w2 / 2
    A, B, Cc = np.meshgrid(a, b, c, indexing="ij")
    W = np.einsum("i,j,k->ijk", wa, wb, wc)
    x = A
    y = (1 - A) * B
    z = (1 - A) * (1 - B) * Cc
    return QuadratureRule(np.column_stack([x.ravel(), y.ravel(), z.ravel()]), W.ravel(), degree)


_A2 = 0.1381966011250105
_RULES = {
    1: lambda: QuadratureRule(np.array([[0.25, 0.25, 0.25]]), np.array([1.0 / 6.0]), 1),
    2: lambda: _symmetric_rule([((1 - 3 * _A2, _A2, _A2, _A2), 1.0 / 24.0)], 2),
    # 14-point rule of degree 5 with positive weights
    5: lambda: _symmetric_rule(
        [
            ((1 - 3 * 0.0927352503108912,) + (0.0927352503108912,) * 3, 0.01224884051939366),
            ((1 - 3 * 0.3108859192633006,) + (0.3108859192633006,) * 3, 0.01878132095300264),
            ((0.4544962958743504,) * 2 + (0.5 - 0.4544962958743504,) * 2, 0.007091003462846911),
        ],
        5,
    ),
    6: lambda: _conical_rule(6),
}


def quadrature_tet(polynomial_degree: int) -> QuadratureRule:
    """Quadrature on the reference tetrahedron exact up to ``polynomial_degree`` (1..6)."""
    if not isinstance(polynomial_degree, (int, np.integer)) or not 1 <= polynomial_degree <= 6:
        raise ValueError(f"quadrature degree must be in 1..6, got {polynomial_degree!r}")
    if polynomial_degree in (3, 4):
        return _RULES[5]()
    return _RULES[int(polynomial_degree)]()


def quadrature_triangle(polynomial_degree: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Points (s, t) and weights (sum 1/2) on the reference triangle; exact to degree 4."""
    if polynomial_degree <= 1:
        return np.array([[1 / 3, 1 / 3]]), np.array([0.5])
    if polynomial_degree > 4:
        raise ValueError("triangle rules available up to degree 4")
    a, wa = 0.445948490915965, 0.223381589678011
    b, wb = 0.091576213509771, 0.109951743655322
    pts = np.array([[a, a], [1 - 2 * a, a], [a, 1 - 2 * a], [b, b], [1 - 2 * b, b], [b, 1 - 2 * b]])
    w = np.array([wa] * 3 + [wb] * 3) / 2.0
    return pts, w


# --- basis functions ----------------------------------------------------------


def _barycentric(points):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    lam = np.column_stack([1.0 - points.sum(axis=1), points])
    dlam = np.array([[-1.0, -1.0, -1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    return lam, dlam


def tabulate_basis(degree: int, points) -> tuple[np.ndarray, np.ndarray]:
    """Values (q, nb) and reference gradients (q, nb, 3) of the Lagrange basis.

    Node order: the four vertices, then (P2) edge midpoints in ``TET_EDGES`` order.
    """
    lam, dlam = _barycentric(points)
    q = len(lam)
    if degree == 1:
        return lam, np.broadcast_to(dlam, (q, 4, 3)).copy()
    if degree != 2:
        raise ValueError(f"unsupported degree {degree}")
    vals = np.empty((q, 10))
    grads = np.empty((q, 10, 3))
    vals[:, :4] = lam * (2 * lam - 1)
    grads[:, :4] = (4 * lam - 1)[:, :, None] * dlam[None]
    for k, (i, j) in enumerate(TET_EDGES):
        vals[:, 4 + k] = 4 * lam[:, i] * lam[:, j]
        grads[:, 4 + k] = 4 * (lam[:, i, None] * dlam[j] + lam[:, j, None] * dlam[i])
    return vals, grads


def reference_nodes(degree: int) -> np.ndarray:
    verts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    if degree == 1:
        return verts
    return np.concatenate([verts, 0.5 * (verts[TET_EDGES[:, 0]] + verts[TET_EDGES[:, 1]])])


def tabulate_triangle(degree: int, points) -> np.ndarray:
    """Lagrange values on the reference triangle; P2 edge order (0,1), (0,2), (1,2)."""
    points = np.atleast_2d(points)
    lam = np.column_stack([1.0 - points.sum(axis=1), points])
    if degree == 1:
        return lam
    edges = [(0, 1), (0, 2), (1, 2)]
    return np.column_stack([lam * (2 * lam - 1)] + [4 * lam[:, i] * lam[:, j] for i, j in edges])


# --- function spaces ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FunctionSpace:
    """Continuous Lagrange space on a tetrahedral mesh.

    Nodes are numbered vertices first, then edges (P2) in ``mesh.edges`` order.
    DOF ``value_dim * node + component``.
    """

    mesh: Mesh
    degree: int
    value_dim: int
    cell_nodes: np.ndarray
    num_nodes: int

    @property
    def num_dofs(self) -> int:
        return self.value_dim * self.num_nodes

    @property
    def nodes_per_cell(self) -> int:
        return self.cell_nodes.shape[1]

    @cached_property
    def cell_dofs(self) -> np.ndarray:
        d = self.value_dim
        return (self.cell_nodes[:, :, None] * d + np.arange(d)).reshape(len(self.cell_nodes), -1)

    @cached_property
    def node_coords(self) -> np.ndarray:
        v = self.mesh.vertices
        if self.degree == 1:
            return v
        e = self.mesh.edges
        return np.concatenate([v, 0.5 * (v[e[:, 0]] + v[e[:, 1]])])

    @cached_property
    def facet_nodes(self) -> np.ndarray:
        """(k, 3 or 6) nodes of each boundary facet, edges ordered as ``tabulate_triangle``."""
        f = self.mesh.facets
        if self.degree == 1:
            return f
        nv = self.mesh.num_vertices
        edges = [self.mesh.edge_index(f[:, [i, j]]) + nv for i, j in ((0, 1), (0, 2), (1, 2))]
        return np.column_stack([f] + edges)

    def boundary_nodes(self, tag: int) -> np.ndarray:
        sel = self.mesh.facet_tags == tag
        if not np.any(sel):
            raise ValueError(f"no boundary facets with tag {tag}")
        return np.unique(self.facet_nodes[sel])

    def boundary_dofs(self, tag: int, component: int | None = None) -> np.ndarray:
        nodes = self.boundary_nodes(tag)
        comps = range(self.value_dim) if component is None else [component]
        return np.sort(np.concatenate([nodes * self.value_dim + c for c in comps]))

    def interpolate(self, func) -> "NodalField":
        """Nodal interpolant of ``func(points (n,3)) -> (n,) or (n,3)``."""
        vals = np.asarray(func(self.node_coords), dtype=float)
        return NodalField(self, vals.reshape(self.num_nodes, -1) if self.value_dim > 1 else vals.reshape(-1))

    def zero(self) -> "NodalField":
        shape = (self.num_nodes,) if self.value_dim == 1 else (self.num_nodes, self.value_dim)
        return NodalField(self, np.zeros(shape))


def build_space(mesh: Mesh, degree: int, value_dim: int = 1) -> FunctionSpace:
    if degree not in (1, 2):
        raise ValueError(f"unsupported polynomial degree {degree}; use 1 or 2")
    if value_dim not in (1, 3):
        raise ValueError("value_dim must be 1 or 3")
    if degree == 1:
        return FunctionSpace(mesh, 1, value_dim, mesh.cells, mesh.num_vertices)
    nodes = np.concatenate([mesh.cells, mesh.cell_edges + mesh.num_vertices], axis=1)
    return FunctionSpace(mesh, 2, value_dim, nodes, mesh.num_vertices + len(mesh.edges))


@dataclass(eq=False)
class NodalField:
    """Nodal coefficients of a field: (num_nodes,) scalar or (num_nodes, 3) vector."""

    space: FunctionSpace
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.space.num_nodes,) if self.space.value_dim == 1 else (self.space.num_nodes, self.space.value_dim)
        if self.values.shape != expected:
            raise ValueError(f"field shape {self.values.shape} does not match space {expected}")

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def at_vertices(self) -> np.ndarray:
        return self.values[: self.space.mesh.num_vertices]

    def evaluate(self, cells: np.ndarray, ref_points: np.ndarray) -> np.ndarray:
        """Values at reference points of the given cells (one point per cell)."""
        vals, _ = tabulate_basis(self.space.degree, ref_points)
        coeffs = self.values[self.space.cell_nodes[cells]]
        return np.einsum("cn,cn...->c...", vals, coeffs)
