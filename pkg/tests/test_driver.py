import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from invfem.assembly import DirichletBC, quadrature_fields
from invfem.benchmarks import TetCase, beam_material, draw_tet_cases, run_tet_case
from invfem.driver import (
    IGAFailure,
    IGASettings,
    ProblemConfig,
    clamp,
    gravity,
    iga_solve,
    nodal_error,
    solve_forward,
    solve_inverse,
)
from invfem.materials import MaterialSpec
from invfem.mesh import generate_cylinder_mesh, generate_unit_cube, generate_unit_tetrahedron
from invfem.oracles import ShearKind, ShearOracle, field_relative_error, oracle_cauchy, oracle_energy
from invfem.solver import SolverSettings

TIGHT = SolverSettings(newton_tolerance=1e-13, relative_tolerance=1e-14, max_newton_iterations=30)


def tet_config(material, load, mesh=None, degree=1):
    return ProblemConfig(mesh or generate_unit_tetrahedron(), material, degree=degree, dirichlet=(clamp(1),),
                         body_force=("0", repr(-float(load)), "0"), solver=TIGHT)


def test_nodal_error_examples():
    cube = generate_unit_cube(2)
    assert nodal_error(cube, cube) == (0.0, 0.0)
    moved = cube.with_vertices(cube.vertices + [1.0, 0, 0])
    err = nodal_error(moved, cube)
    assert math.isclose(err.l2, math.sqrt(cube.num_vertices), rel_tol=1e-14)
    assert math.isclose(err.max, 1.0, rel_tol=1e-14)
    with pytest.raises(ValueError):
        nodal_error(cube, generate_unit_tetrahedron())


def test_zero_gravity_beam_does_not_move():
    mesh = generate_cylinder_mesh(0.182, 0.0085, 3, 1)
    res = solve_forward(ProblemConfig(mesh, beam_material(), dirichlet=(clamp(1),), body_force=gravity(0.0)))
    assert np.array_equal(res.displacement.values, np.zeros_like(res.displacement.values))
    assert res.geometry.num_vertices == mesh.num_vertices


def test_inverse_without_loads_returns_input():
    mesh = generate_unit_cube(1)
    res = solve_inverse(ProblemConfig(mesh, MaterialSpec("neo_hookean", mu=1, lmbda=1), dirichlet=(clamp(1),)))
    assert np.array_equal(res.geometry.vertices, mesh.vertices)


def test_forward_simple_shear_matches_oracle():
    o = ShearOracle(0.5, 1.0, 1.0)
    cfg = ProblemConfig(generate_unit_cube(1), MaterialSpec("mooney_rivlin", c1=1, c2=1, d1=10),
                        dirichlet=tuple(DirichletBC(t, o.boundary_exprs()) for t in range(1, 7)))
    res = solve_forward(cfg)
    q = quadrature_fields(res.problem, res.state)
    assert field_relative_error(q["psi"], oracle_energy(o), q["weights"]).value < 1e-10
    assert field_relative_error(q["sigma"], oracle_cauchy(o), q["weights"]).value < 1e-10


def test_inverse_simple_shear_recovers_cube():
    k = 0.5
    cube = generate_unit_cube(2)
    o = ShearOracle(k, 1.0, 1.0)
    v = cube.vertices.copy()
    v[:, 0] += k * v[:, 1]
    cfg = ProblemConfig(cube.with_vertices(v), MaterialSpec("mooney_rivlin", c1=1, c2=1, d1=10),
                        dirichlet=tuple(DirichletBC(t, o.boundary_exprs(inverse=True)) for t in range(1, 7)))
    res = solve_inverse(cfg)
    assert nodal_error(res.geometry, cube).l2 <= 1e-9


@pytest.mark.parametrize("case", draw_tet_cases(20, seed=7))
def test_tet_round_trip_both_orders(case):
    for part in (1, 2):
        r = run_tet_case(case, part)
        assert r["pb"]["error"] <= 1e-9


@settings(max_examples=10)
@given(mu=st.floats(0.5, 2.0), ratio=st.floats(1.0, 10.0), load=st.floats(0.05, 0.3))
def test_forward_then_inverse_is_identity(mu, ratio, load):
    mat = MaterialSpec("neo_hookean", mu=mu, lmbda=mu * ratio)
    tet = generate_unit_tetrahedron()
    fwd = solve_forward(tet_config(mat, load * mu))
    inv = solve_inverse(tet_config(mat, load * mu, fwd.geometry))
    u = fwd.displacement.at_vertices()
    up = inv.displacement.at_vertices()
    assert np.linalg.norm(u + up) <= 1e-9


@pytest.mark.parametrize("kind", ["neo_hookean_mixed", "mooney_rivlin_mixed"])
def test_mixed_round_trip_limited_by_straight_edges(kind):
    # P2 forward solutions bend the edges while meshes stay straight-sided, so the
    # pull-back is exact only up to discretisation error; it must still be small
    mat = MaterialSpec(kind, mu=1.0, lmbda=20.0, c1=0.3, c2=0.2, d1=10.0)
    mesh = generate_unit_cube(2)
    cfg = ProblemConfig(mesh, mat, dirichlet=(clamp(3),), body_force=("0", "-0.05", "0"), solver=TIGHT)
    fwd = solve_forward(cfg)
    inv = solve_inverse(cfg.with_mesh(fwd.geometry))
    scale = np.abs(fwd.displacement.at_vertices()).max()
    assert nodal_error(inv.geometry, mesh).max <= 0.05 * scale


def test_iga_zero_loads_converges_immediately():
    cfg = ProblemConfig(generate_unit_tetrahedron(), MaterialSpec("neo_hookean", mu=1, lmbda=1), degree=1, dirichlet=(clamp(1),))
    res = iga_solve(cfg)
    assert res.converged and res.history == [0.0]


def test_iga_reaches_epsilon_and_matches_one_shot():
    mat = MaterialSpec("neo_hookean", mu=1.0, lmbda=3.0)
    tet = generate_unit_tetrahedron()
    cfg = tet_config(mat, 0.3)
    res = iga_solve(cfg, IGASettings(1e-6, 50))
    assert res.converged
    assert 2 <= len(res.history) <= 10
    assert res.history[-1] <= 1e-6
    # error history contracts after the first iteration on this case
    assert all(b <= a for a, b in zip(res.history[1:], res.history[2:]))
    pb = solve_inverse(cfg)
    assert nodal_error(res.geometry, pb.geometry).l2 < 1e-5
    assert res.displacement.values.shape == pb.displacement.values.shape


def test_iga_p2_edges_are_midpoints():
    mat = MaterialSpec("neo_hookean", mu=1.0, lmbda=3.0)
    res = iga_solve(tet_config(mat, 0.2, degree=2), IGASettings(1e-6, 50))
    u = res.displacement.values
    mesh = res.input_mesh
    e = mesh.edges
    assert np.allclose(u[mesh.num_vertices :], 0.5 * (u[e[:, 0]] + u[e[:, 1]]))


def test_iga_failure_carries_history():
    mat = MaterialSpec("neo_hookean", mu=1.0, lmbda=3.0)
    cfg = ProblemConfig(generate_unit_tetrahedron(), mat, degree=1, dirichlet=(clamp(1),), body_force=("0", "-0.6", "0"),
                        solver=SolverSettings(max_newton_iterations=1, max_step_bisections=1))
    with pytest.raises(IGAFailure) as info:
        iga_solve(cfg)
    assert info.value.history == []


def test_iga_stops_at_max_iterations():
    mat = MaterialSpec("neo_hookean", mu=1.0, lmbda=3.0)
    res = iga_solve(tet_config(mat, 0.3), IGASettings(1e-14, 2))
    assert not res.converged and len(res.history) == 2


@pytest.mark.parametrize("kw", [dict(epsilon=0.0), dict(max_iterations=0)])
def test_iga_settings_validation(kw):
    with pytest.raises(ValueError):
        IGASettings(**kw)


def test_tet_case_record_is_json_ready():
    case = TetCase(MaterialSpec("neo_hookean", mu=1.0, lmbda=2.0), 0.2)
    r = run_tet_case(case, 1)
    assert set(r) == {"case", "part", "pb", "iga1", "iga2"}
    assert r["iga2"]["iterations"] >= r["iga1"]["iterations"]
