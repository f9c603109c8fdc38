import itertools

import numpy as np
import pytest
import scipy.sparse as sp

from invfem.assembly import (
    FORWARD,
    INVERSE,
    DirichletBC,
    Traction,
    apply_dirichlet,
    assemble_energy,
    assemble_jacobian,
    assemble_residual,
    assemble_system,
    dirichlet_dofs,
    make_problem,
)
from invfem.kinematics import ElementInversionError
from invfem.materials import MaterialKind, MaterialSpec
from invfem.mesh import generate_box_mesh, generate_unit_cube, generate_unit_tetrahedron

KINDS = ["neo_hookean", "mooney_rivlin", "neo_hookean_mixed", "mooney_rivlin_mixed"]


def material(kind, rho0=2.0):
    return MaterialSpec(kind, mu=1.3, lmbda=2.1, c1=0.7, c2=0.4, d1=3.0, rho0=rho0)


def loaded_problem(kind, direction, mesh=None, **kw):
    mesh = mesh or generate_unit_cube(2)
    return make_problem(
        mesh,
        material(kind),
        direction,
        dirichlet=[DirichletBC(1, ("0", "0", "0"))],
        body_force=("0", "-1", "0.5"),
        tractions=[Traction(2, ("1", "0.3*y", "0"))],
        **kw,
    )


def test_zero_state_zero_load_residual():
    for kind in KINDS:
        for direction in (FORWARD, INVERSE):
            prob = make_problem(generate_unit_cube(1), material(kind), direction)
            # roundoff only: the stress terms cancel analytically at the identity
            np.testing.assert_allclose(assemble_residual(prob, prob.zero_state()), 0.0, atol=1e-14)


@pytest.mark.parametrize("degree", [1, 2])
def test_traction_resultant(degree):
    tet = generate_unit_tetrahedron()
    t = np.array([0.3, -1.2, 2.0])
    prob = make_problem(tet, material("neo_hookean"), degree=degree, tractions=[Traction(1, tuple(t))])
    R = assemble_residual(prob, prob.zero_state(), apply_bcs=False).reshape(-1, 3)
    nodes = prob.u_space.boundary_nodes(1)
    assert np.allclose(R[nodes].sum(0), -t * 0.5, atol=1e-14)
    others = np.setdiff1d(np.arange(len(R)), nodes)
    assert np.allclose(R[others], 0, atol=1e-15)


@pytest.mark.parametrize("kind", ["mooney_rivlin", "mooney_rivlin_mixed"])
def test_homogeneous_shear_is_in_equilibrium(kind):
    k = 0.5
    mesh = generate_unit_cube(2)
    bcs = [DirichletBC(tag, (f"y*{k}", "0", "0")) for tag in range(1, 7)]
    prob = make_problem(mesh, material(kind), FORWARD, dirichlet=bcs)
    u = prob.u_space.interpolate(lambda X: np.column_stack([k * X[:, 1], 0 * X[:, 0], 0 * X[:, 0]]))
    x = prob.zero_state()
    x[: prob.num_u] = u.flat
    R = assemble_residual(prob, x)
    assert np.max(np.abs(R)) < 1e-10


@pytest.mark.parametrize("kind, direction", list(itertools.product(KINDS, (FORWARD, INVERSE))))
def test_jacobian_vector_products_match_finite_differences(kind, direction, rng):
    prob = loaded_problem(kind, direction)
    for _ in range(3):
        x = 0.02 * rng.standard_normal(prob.num_dofs)
        v = rng.standard_normal(prob.num_dofs)
        J = assemble_jacobian(prob, x, apply_bcs=False)
        h = 1e-7
        fd = (assemble_residual(prob, x + h * v, apply_bcs=False) - assemble_residual(prob, x - h * v, apply_bcs=False)) / (2 * h)
        assert np.linalg.norm(J @ v - fd) <= 1e-6 * np.linalg.norm(J @ v)


@pytest.mark.parametrize("kind", KINDS)
def test_forward_jacobian_symmetric(kind, rng):
    prob = loaded_problem(kind, FORWARD)
    x = 0.01 * rng.standard_normal(prob.num_dofs)
    for bcs in (False, True):
        J = assemble_jacobian(prob, x, apply_bcs=bcs)
        assert abs(J - J.T).max() < 1e-10


def _linear_elasticity_p1(mesh, lam, mu):
    # independent small-strain assembler: B-matrix form with P1 gradients from vertex coordinates
    n = mesh.num_vertices
    D = np.zeros((6, 6))
    D[:3, :3] = lam
    D[np.arange(3), np.arange(3)] += 2 * mu
    D[np.arange(3, 6), np.arange(3, 6)] = mu
    K = np.zeros((3 * n, 3 * n))
    for cell in mesh.cells:
        X = mesh.vertices[cell]
        M = np.column_stack([np.ones(4), X])
        coeff = np.linalg.inv(M)  # rows: constant, d/dx, d/dy, d/dz of each hat function
        grads = coeff[1:].T
        vol = abs(np.linalg.det(M)) / 6
        B = np.zeros((6, 12))
        for a in range(4):
            gx, gy, gz = grads[a]
            B[:, 3 * a : 3 * a + 3] = [[gx, 0, 0], [0, gy, 0], [0, 0, gz], [gy, gx, 0], [0, gz, gy], [gz, 0, gx]]
        dofs = (3 * cell[:, None] + np.arange(3)).ravel()
        K[np.ix_(dofs, dofs)] += vol * B.T @ D @ B
    return K


def test_zero_state_jacobian_is_linear_elasticity():
    mesh = generate_box_mesh((1.0, 0.5, 2.0), (2, 1, 2))
    spec = MaterialSpec("neo_hookean", mu=1.3, lmbda=2.1)
    prob = make_problem(mesh, spec, FORWARD, degree=1)
    J = assemble_jacobian(prob, prob.zero_state(), apply_bcs=False).toarray()
    assert np.allclose(J, _linear_elasticity_p1(mesh, 2.1, 1.3), atol=1e-12)


def test_dirichlet_rows_and_columns_are_identity(rng):
    prob = loaded_problem("neo_hookean", FORWARD)
    d = dirichlet_dofs(prob)
    J = assemble_jacobian(prob, 0.01 * rng.standard_normal(prob.num_dofs)).tocsr()
    sub = J[d][:, d].toarray()
    assert np.array_equal(sub, np.eye(len(d)))
    free = np.setdiff1d(np.arange(prob.num_dofs), d)
    assert J[d][:, free].nnz == 0 or np.all(J[d][:, free].toarray() == 0)
    assert np.all(J[free][:, d].toarray() == 0)


def test_dirichlet_residual_rows_hold_mismatch(rng):
    prob = make_problem(generate_unit_cube(1), material("neo_hookean"), dirichlet=[DirichletBC(1, ("0.1", "0", "0"))])
    x = 0.01 * rng.standard_normal(prob.num_dofs)
    R = assemble_residual(prob, x)
    d = dirichlet_dofs(prob)
    target = apply_dirichlet(prob, x)
    assert np.allclose(R[d], x[d] - target[d], atol=1e-15)


def test_assemble_system_consistent(rng):
    prob = loaded_problem("mooney_rivlin_mixed", INVERSE)
    x = apply_dirichlet(prob, 0.02 * rng.standard_normal(prob.num_dofs))
    s = assemble_system(prob, x)
    assert np.allclose(s.rhs, -assemble_residual(prob, x), atol=1e-14)
    assert abs(s.matrix - assemble_jacobian(prob, x)).max() < 1e-14


def test_apply_dirichlet_simple_shear():
    mesh = generate_unit_cube(1)
    bcs = [DirichletBC(tag, ("y*0.5", "0", "0")) for tag in range(1, 7)]
    prob = make_problem(mesh, material("mooney_rivlin"), dirichlet=bcs)
    x = apply_dirichlet(prob, prob.zero_state()).reshape(-1, 3)[: prob.u_space.num_nodes]
    i = np.flatnonzero(np.all(prob.u_space.node_coords == [0, 1, 0], axis=1))[0]
    assert np.array_equal(x[i], [0.5, 0, 0])
    half = make_problem(mesh, material("mooney_rivlin"), dirichlet=bcs, load_scale=0.0)
    assert np.array_equal(apply_dirichlet(half, np.ones(half.num_dofs))[dirichlet_dofs(half)], np.zeros(len(dirichlet_dofs(half))))


def test_apply_dirichlet_component_mask():
    mesh = generate_unit_cube(1)
    prob = make_problem(mesh, material("neo_hookean"), dirichlet=[DirichletBC(2, ("1", "2", "3"), (True, False, False))])
    x = apply_dirichlet(prob, np.full(prob.num_dofs, 7.0)).reshape(-1, 3)
    nodes = prob.u_space.boundary_nodes(2)
    assert np.all(x[nodes, 0] == 1.0)
    assert np.all(x[nodes, 1:] == 7.0)


def test_unknown_tag_rejected():
    with pytest.raises(ValueError):
        make_problem(generate_unit_tetrahedron(), material("neo_hookean"), dirichlet=[DirichletBC(9, ("0", "0", "0"))])


def test_mismatched_state_rejected():
    prob = make_problem(generate_unit_tetrahedron(), material("neo_hookean"))
    with pytest.raises(ValueError):
        assemble_residual(prob, np.zeros(prob.num_dofs + 1))


def test_mixed_requires_p2():
    with pytest.raises(ValueError):
        make_problem(generate_unit_tetrahedron(), material("neo_hookean_mixed"), degree=1)


def test_element_inversion_reports_cell():
    mesh = generate_unit_cube(1)
    prob = make_problem(mesh, material("neo_hookean"), degree=1)
    u = np.zeros((mesh.num_vertices, 3))
    u[:, 0] = -3.0 * mesh.vertices[:, 0]
    with pytest.raises(ElementInversionError) as info:
        assemble_residual(prob, u.ravel())
    assert info.value.cell is not None and 0 <= info.value.cell < mesh.num_cells


@pytest.mark.parametrize("kind", ["neo_hookean", "mooney_rivlin"])
def test_forward_and_inverse_share_load_resultants(kind):
    fwd = loaded_problem(kind, FORWARD)
    inv = loaded_problem(kind, INVERSE)
    a = assemble_residual(fwd, fwd.zero_state(), apply_bcs=False)
    b = assemble_residual(inv, inv.zero_state(), apply_bcs=False)
    assert np.allclose(a, b, atol=1e-15)
    assert np.linalg.norm(a) > 0


@pytest.mark.parametrize("kind", ["neo_hookean", "mooney_rivlin"])
def test_residual_is_energy_gradient(kind, rng):
    prob = loaded_problem(kind, FORWARD)
    x = 0.01 * rng.standard_normal(prob.num_dofs)
    R = assemble_residual(prob, x, apply_bcs=False)
    for _ in range(3):
        v = rng.standard_normal(prob.num_dofs)
        v /= np.linalg.norm(v)

        def d(h):
            return (assemble_energy(prob, x + h * v) - assemble_energy(prob, x - h * v)) / (2 * h)

        h = 1e-3
        richardson = (4 * d(h / 2) - d(h)) / 3
        assert abs(R @ v - richardson) < 1e-10 * max(1.0, np.linalg.norm(R))


@pytest.mark.parametrize("kind", KINDS)
def test_inverse_body_force_uses_current_density(kind):
    # u' = -a x e_x gives det(grad u' + I) = 1 - a, so rho = rho0 (1 - a) on the deformed cube
    a = 0.2
    mesh = generate_unit_cube(1)
    spec = material(kind)
    with_b = make_problem(mesh, spec, INVERSE, body_force=("0", "-1", "0"))
    without = make_problem(mesh, spec, INVERSE)
    u = with_b.u_space.interpolate(lambda X: np.column_stack([-a * X[:, 0], 0 * X[:, 0], 0 * X[:, 0]]))
    x = with_b.zero_state()
    x[: with_b.num_u] = u.flat
    dR = assemble_residual(with_b, x, apply_bcs=False) - assemble_residual(without, x, apply_bcs=False)
    assert np.isclose(dR[: with_b.num_u].reshape(-1, 3)[:, 1].sum(), spec.rho0 * (1 - a), rtol=1e-13)


def test_assembly_deterministic_across_threads(rng, monkeypatch):
    prob = loaded_problem("mooney_rivlin_mixed", INVERSE, mesh=generate_box_mesh((1, 1, 1), (4, 4, 4)))
    x = 0.01 * rng.standard_normal(prob.num_dofs)
    ref_R = assemble_residual(prob, x, threads=1)
    ref_J = assemble_jacobian(prob, x, threads=1)
    for threads in (2, 3, 5):
        assert np.array_equal(assemble_residual(prob, x, threads=threads), ref_R)
        J = assemble_jacobian(prob, x, threads=threads)
        assert np.array_equal(J.indptr, ref_J.indptr) and np.array_equal(J.indices, ref_J.indices)
        assert np.array_equal(J.data, ref_J.data)
    monkeypatch.setenv("INVFEM_THREADS", "4")
    assert np.array_equal(assemble_residual(prob, x), ref_R)


@pytest.mark.parametrize("bcs", [False, True])
def test_sparse_pattern_is_symmetric(bcs, rng):
    prob = loaded_problem("neo_hookean_mixed", INVERSE)
    J = sp.csr_matrix(assemble_jacobian(prob, 0.01 * rng.standard_normal(prob.num_dofs), apply_bcs=bcs))
    assert np.all(np.diff(J.indptr) >= 0)
    pattern = J.copy()
    pattern.data[:] = 1.0
    assert abs(pattern - pattern.T).max() == 0
