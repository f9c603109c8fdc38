"""Forward solve, one-shot inverse solve and the iterative geometric baseline."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .assembly import FORWARD, INVERSE, DirichletBC, ProblemDefinition, Traction, make_problem
from .fem import NodalField
from .kinematics import ElementInversionError
from .materials import MaterialSpec
from .mesh import Mesh, MeshError
from .solver import ConvergenceRecord, DivergenceError, SolverSettings, continuation_solve

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProblemConfig:
    """Everything needed to pose a problem on ``mesh`` in either direction.

    Boundary-condition expressions are evaluated on whichever mesh is the
    input: the rest geometry for forward runs, the deformed one for inverse runs.
    """

    mesh: Mesh
    material: MaterialSpec
    degree: int = 2
    dirichlet: tuple = ()
    tractions: tuple = ()
    body_force: tuple | None = None
    solver: SolverSettings = SolverSettings()
    quad_degree: int = 4

    def problem(self, direction: str, mesh: Mesh | None = None) -> ProblemDefinition:
        return make_problem(
            mesh if mesh is not None else self.mesh,
            self.material,
            direction,
            degree=self.degree,
            dirichlet=self.dirichlet,
            tractions=self.tractions,
            body_force=self.body_force,
            quad_degree=self.quad_degree,
        )

    def with_mesh(self, mesh: Mesh) -> "ProblemConfig":
        return ProblemConfig(mesh, self.material, self.degree, self.dirichlet, self.tractions, self.body_force, self.solver, self.quad_degree)


@dataclass
class AnalysisResult:
    input_mesh: Mesh
    direction: str
    displacement: NodalField
    pressure: NodalField | None
    geometry: Mesh
    record: ConvergenceRecord | None
    state: np.ndarray | None = None
    problem: ProblemDefinition | None = None
    errors: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    converged: bool = True
    wall_time: float = 0.0


class NodalError(NamedTuple):
    l2: float
    max: float


class IGAFailure(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass(frozen=True)
class IGASettings:
    epsilon: float = 1e-6
    max_iterations: int = 50

    def __post_init__(self):
        if self.epsilon <= 0 or self.max_iterations < 1:
            raise ValueError("IGA needs epsilon > 0 and max_iterations >= 1")


def nodal_error(a, b) -> NodalError:
    """l2 norm of stacked vertex differences, and the largest vertex distance."""
    va = a.vertices if isinstance(a, Mesh) else np.asarray(a, dtype=float)
    vb = b.vertices if isinstance(b, Mesh) else np.asarray(b, dtype=float)
    if va.shape != vb.shape:
        raise ValueError(f"vertex arrays differ in shape: {va.shape} vs {vb.shape}")
    d = va - vb
    return NodalError(float(np.linalg.norm(d)), float(np.max(np.linalg.norm(d, axis=1))) if len(d) else 0.0)


def _solve(config: ProblemConfig, direction: str, initial=None) -> AnalysisResult:
    t0 = time.perf_counter()
    prob = config.problem(direction)
    x, record = continuation_solve(prob, config.solver, initial)
    u, p = prob.split(x)
    moved = config.mesh.with_vertices(config.mesh.vertices + u.at_vertices())
    return AnalysisResult(config.mesh, direction, u, p, moved, record, x, prob, wall_time=time.perf_counter() - t0)


def solve_forward(config: ProblemConfig, initial=None) -> AnalysisResult:
    """u on the rest mesh; ``geometry`` is the deformed mesh x = X + u."""
    return _solve(config, FORWARD, initial)


def solve_inverse(config: ProblemConfig, initial=None) -> AnalysisResult:
    """u' on the deformed mesh; ``geometry`` is the recovered rest mesh X = x + u'."""
    return _solve(config, INVERSE, initial)


def iga_solve(config: ProblemConfig, settings: IGASettings | None = None) -> AnalysisResult:
    """Fixed-point recovery of the rest shape with repeated forward solves.

    X^0 = X_ini; forward-solve from X^j to get x^j; err = ||x^j - X_ini||;
    X^{j+1} = X^j - (x^j - X_ini). ``history`` lists err per forward solve.
    """
    settings = settings or IGASettings()
    t0 = time.perf_counter()
    target = config.mesh
    X = target.vertices.copy()
    history = []
    record = ConvergenceRecord()
    converged = False
    for j in range(settings.max_iterations):
        try:
            res = solve_forward(config.with_mesh(target.with_vertices(X)))
        except (DivergenceError, ElementInversionError, MeshError) as exc:
            raise IGAFailure(f"forward solve failed in IGA iteration {j}: {exc}", history) from exc
        record.steps.extend(res.record.steps)
        record.total_iterations += res.record.total_iterations
        x = res.geometry.vertices
        err = nodal_error(x, target).l2
        history.append(err)
        log.debug("IGA iteration %d: err %.3e", j, err)
        if err <= settings.epsilon:
            converged = True
            break
        if j + 1 < settings.max_iterations:
            X = X - (x - target.vertices)
    record.wall_time = time.perf_counter() - t0

    prob = config.problem(INVERSE)
    u_vert = X - target.vertices
    space = prob.u_space
    vals = np.zeros((space.num_nodes, 3))
    vals[: target.num_vertices] = u_vert
    if space.degree == 2:
        e = target.edges
        vals[target.num_vertices :] = 0.5 * (u_vert[e[:, 0]] + u_vert[e[:, 1]])
    return AnalysisResult(
        target,
        "iga",
        NodalField(space, vals),
        None,
        target.with_vertices(X),
        record,
        history=history,
        converged=converged,
        wall_time=record.wall_time,
    )


def gravity(g: float = 9.81, axis: int = 1) -> tuple:
    """Body-force expressions for acceleration g along -axis."""
    b = ["0", "0", "0"]
    b[axis] = repr(-float(g))
    return tuple(b)


def clamp(tag: int) -> DirichletBC:
    return DirichletBC(tag, ("0", "0", "0"))


__all__ = [
    "AnalysisResult",
    "DirichletBC",
    "IGAFailure",
    "IGASettings",
    "NodalError",
    "ProblemConfig",
    "Traction",
    "clamp",
    "gravity",
    "iga_solve",
    "nodal_error",
    "solve_forward",
    "solve_inverse",
]
