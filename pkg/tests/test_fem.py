import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from invfem.fem import build_space, quadrature_tet, reference_nodes, tabulate_basis
from invfem.mesh import generate_box_mesh, generate_cylinder_mesh, generate_unit_tetrahedron


def _monomial_integral(a, b, c):
    # int over the reference tet of x^a y^b z^c = a! b! c! / (a+b+c+3)!
    return math.factorial(a) * math.factorial(b) * math.factorial(c) / math.factorial(a + b + c + 3)


def test_centroid_rule():
    q = quadrature_tet(1)
    assert np.allclose(q.points, [[0.25, 0.25, 0.25]])
    assert np.allclose(q.weights, [1 / 6])


@pytest.mark.parametrize("degree", range(1, 7))
def test_quadrature_exact_for_all_monomials(degree):
    q = quadrature_tet(degree)
    assert math.isclose(q.weights.sum(), 1 / 6, rel_tol=1e-14)
    bary = np.column_stack([1 - q.points.sum(1), q.points])
    assert np.all(bary >= -1e-14)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            for c in range(degree + 1 - a - b):
                got = np.sum(q.weights * q.points[:, 0] ** a * q.points[:, 1] ** b * q.points[:, 2] ** c)
                assert math.isclose(got, _monomial_integral(a, b, c), rel_tol=1e-12, abs_tol=1e-15)


def test_x_squared_integral():
    for degree in range(2, 7):
        q = quadrature_tet(degree)
        assert abs(np.sum(q.weights * q.points[:, 0] ** 2) - 1 / 60) < 1e-14


@pytest.mark.parametrize("degree", [0, 7])
def test_quadrature_degree_out_of_range(degree):
    with pytest.raises(ValueError):
        quadrature_tet(degree)


def test_p1_centroid_values():
    vals, _ = tabulate_basis(1, [[0.25, 0.25, 0.25]])
    assert np.allclose(vals, 0.25)


points = st.lists(st.floats(0, 1), min_size=3, max_size=3).map(np.array).filter(lambda p: p.sum() <= 1)


@given(degree=st.sampled_from([1, 2]), p=points)
def test_partition_of_unity(degree, p):
    vals, grads = tabulate_basis(degree, p[None])
    assert abs(vals.sum() - 1) < 1e-13
    assert np.allclose(grads.sum(axis=1), 0, atol=1e-12)


def test_partition_of_unity_100_points(rng):
    pts = rng.dirichlet(np.ones(4), size=100)[:, 1:]
    for degree in (1, 2):
        vals, grads = tabulate_basis(degree, pts)
        assert np.allclose(vals.sum(1), 1, atol=1e-13)
        assert np.allclose(grads.sum(1), 0, atol=1e-12)


@pytest.mark.parametrize("degree", [1, 2])
def test_nodal_basis(degree):
    vals, _ = tabulate_basis(degree, reference_nodes(degree))
    assert np.allclose(vals, np.eye(len(vals)), atol=1e-14)


@pytest.mark.parametrize("degree", [1, 2])
def test_gradients_match_finite_differences(degree, rng):
    p = rng.dirichlet(np.ones(4), size=5)[:, 1:] * 0.9
    _, grads = tabulate_basis(degree, p)
    h = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (tabulate_basis(degree, p + e)[0] - tabulate_basis(degree, p - e)[0]) / (2 * h)
        assert np.allclose(grads[..., k], fd, atol=1e-8)


def test_p2_reproduces_quadratics(rng):
    mesh = generate_box_mesh((1.0, 2.0, 1.5), (2, 2, 2))
    V = build_space(mesh, 2, 1)

    def q(X):
        return X[:, 0] ** 2 + X[:, 1] * X[:, 2]

    f = V.interpolate(q)
    cells = rng.integers(0, mesh.num_cells, size=20)
    ref = rng.dirichlet(np.ones(4), size=20)[:, 1:]
    vals, _ = tabulate_basis(1, ref)
    X = np.einsum("cn,cnk->ck", vals, mesh.vertices[mesh.cells[cells]])
    assert np.allclose(f.evaluate(cells, ref), q(X), atol=1e-13)


def test_space_dof_counts():
    tet = generate_unit_tetrahedron()
    assert build_space(tet, 1, 3).num_dofs == 12
    assert build_space(tet, 2, 3).num_dofs == 30
    assert build_space(generate_box_mesh((1, 1, 1), (1, 1, 1)), 1, 1).num_dofs == 8


@given(div=st.integers(1, 3), degree=st.sampled_from([1, 2]), dim=st.sampled_from([1, 3]))
def test_space_dof_count_formula(div, degree, dim):
    mesh = generate_box_mesh((1, 1, 1), (div,) * 3)
    V = build_space(mesh, degree, dim)
    nodes = mesh.num_vertices + (len(mesh.edges) if degree == 2 else 0)
    assert V.num_dofs == dim * nodes
    # shared nodes: every node referenced, each P2 edge node reached from all cells on that edge
    assert set(np.unique(V.cell_nodes)) == set(range(V.num_nodes))


def test_boundary_dofs_cover_tagged_facets():
    mesh = generate_cylinder_mesh(1.0, 0.3, 2, 2)
    V = build_space(mesh, 2, 3)
    for tag in mesh.tags:
        nodes = set(V.boundary_nodes(tag).tolist())
        facets = mesh.facets[mesh.facet_tags == tag]
        assert set(facets.ravel().tolist()) <= nodes
        edge_nodes = mesh.num_vertices + mesh.edge_index(facets[:, [0, 1]])
        assert set(edge_nodes.tolist()) <= nodes


def test_build_space_rejects_degree():
    with pytest.raises(ValueError):
        build_space(generate_unit_tetrahedron(), 3, 1)
