"""Forward and one-shot inverse finite-strain hyperelasticity on tetrahedral meshes."""

from .assembly import FORWARD, INVERSE, DirichletBC, ProblemDefinition, Traction, make_problem
from .driver import (
    AnalysisResult,
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
from .fem import FunctionSpace, NodalField, build_space, quadrature_tet, tabulate_basis
from .materials import MaterialKind, MaterialSpec, energy_density, first_pk_stress
from .mesh import (
    Mesh,
    generate_box_mesh,
    generate_cylinder_mesh,
    generate_unit_cube,
    generate_unit_tetrahedron,
    read_gmsh,
    write_vtk,
)
from .solver import ConvergenceRecord, DivergenceError, SolverSettings, continuation_solve, newton_solve

__version__ = "0.1.0"

__all__ = [
    "FORWARD",
    "INVERSE",
    "AnalysisResult",
    "ConvergenceRecord",
    "DirichletBC",
    "DivergenceError",
    "FunctionSpace",
    "IGAFailure",
    "IGASettings",
    "MaterialKind",
    "MaterialSpec",
    "Mesh",
    "NodalField",
    "ProblemConfig",
    "ProblemDefinition",
    "SolverSettings",
    "Traction",
    "build_space",
    "clamp",
    "continuation_solve",
    "energy_density",
    "first_pk_stress",
    "generate_box_mesh",
    "generate_cylinder_mesh",
    "generate_unit_cube",
    "generate_unit_tetrahedron",
    "gravity",
    "iga_solve",
    "make_problem",
    "newton_solve",
    "nodal_error",
    "quadrature_tet",
    "read_gmsh",
    "solve_forward",
    "solve_inverse",
    "tabulate_basis",
    "write_vtk",
]
