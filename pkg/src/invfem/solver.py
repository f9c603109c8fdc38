"""Newton-Raphson with load continuation and a sparse direct linear solve."""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import ProblemDefinition, SparseSystem, assemble_system
from .kinematics import ElementInversionError

log = logging.getLogger(__name__)


class LinearSolveError(ArithmeticError):
    pass


class DivergenceError(RuntimeError):
    """Newton failed after all step bisections; ``record`` holds the history so far."""

    def __init__(self, message, record=None, state=None):
        super().__init__(message)
        self.record = record
        self.state = state


@dataclass(frozen=True)
class SolverSettings:
    newton_tolerance: float = 1e-10
    relative_tolerance: float = 1e-12
    max_newton_iterations: int = 25
    continuation_steps: int = 1
    max_step_bisections: int = 8

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if getattr(self, f.name) <= 0:
                raise ValueError(f"solver setting {f.name} must be positive")


@dataclass
class ConvergenceRecord:
    steps: list = field(default_factory=list)  # dicts: load, norms, converged, reason
    total_iterations: int = 0
    wall_time: float = 0.0

    @property
    def converged_steps(self):
        return [s for s in self.steps if s["converged"]]

    def as_dict(self) -> dict:
        return {"steps": self.steps, "total_iterations": self.total_iterations, "wall_time": self.wall_time}


# diagonal pivots first (least fill on these meshes); partial pivoting as fallback
_LU_OPTIONS = ({"permc_spec": "COLAMD", "diag_pivot_thresh": 0.0}, {"permc_spec": "COLAMD", "diag_pivot_thresh": 1.0})


def linear_solve(system: SparseSystem | sp.spmatrix, rhs: np.ndarray | None = None) -> np.ndarray:
    """Sparse LU (handles indefinite saddle-point matrices), checked by its residual."""
    if isinstance(system, SparseSystem):
        A, b = system.matrix, system.rhs
    else:
        A, b = system, rhs
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise ValueError("linear_solve needs a square matrix matching the right-hand side")
    anorm = spla.norm(A, 1)
    reason = "matrix is numerically singular"
    for opts in _LU_OPTIONS:
        try:
            lu = spla.splu(A, **opts)
        except RuntimeError as exc:
            reason = f"factorization failed: {exc}"
            continue
        x = lu.solve(b)
        if not np.all(np.isfinite(x)):
            reason = "factorization produced non-finite values"
            continue
        for _ in range(2):
            r = A @ x - b
            if np.linalg.norm(r) <= 1e-10 * (anorm * np.linalg.norm(x) + np.linalg.norm(b)):
                return x
            x -= lu.solve(r)
    raise LinearSolveError(reason)


def _newton(prob: ProblemDefinition, settings: SolverSettings, x0: np.ndarray):
    """Plain Newton at fixed load; returns (x, norms, converged, reason).

    Dirichlet values are not imposed up front: their mismatch stays in the
    constrained residual rows, so the first step is a tangent predictor that
    carries the boundary increment into the interior. The rows are linear,
    so they hold exactly after one step.
    """
    x = np.array(x0, dtype=float)
    norms = []
    r0 = None
    for it in range(settings.max_newton_iterations + 1):
        try:
            system = assemble_system(prob, x)
        except ElementInversionError as exc:
            return x, norms, False, f"element inversion (cell {exc.cell}, J={exc.J:.3g})"
        norm = float(np.linalg.norm(system.rhs))
        norms.append(norm)
        if r0 is None:
            r0 = norm
        if not np.isfinite(norm) or norm > 1e8 * max(r0, 1e-300):
            return x, norms, False, "diverged"
        if norm <= settings.newton_tolerance or (it > 0 and norm <= settings.relative_tolerance * r0):
            return x, norms, True, "converged"
        if it == settings.max_newton_iterations:
            break
        try:
            x = x + linear_solve(system)
        except LinearSolveError as exc:
            return x, norms, False, str(exc)
    return x, norms, False, "max iterations"


def newton_solve(prob: ProblemDefinition, settings: SolverSettings | None = None, initial=None, record=None):
    """Solve at ``prob.load_scale``, bisecting the load increment from ``record``'s last level on failure.

    Without prior history the increment starts from load 0.
    """
    settings = settings or SolverSettings()
    record = record if record is not None else ConvergenceRecord()
    t0 = time.perf_counter()
    x = prob.zero_state() if initial is None else np.asarray(initial, dtype=float).copy()
    conv = record.converged_steps
    start = conv[-1]["load"] if conv else 0.0
    target = prob.load_scale
    if start >= target:
        start = 0.0 if initial is None else target
    x, record = _advance(prob, settings, x, start, target, record, settings.max_step_bisections)
    record.wall_time += time.perf_counter() - t0
    return x, record


def _advance(prob, settings, x, start, target, record, bisections_left):
    step_prob = dataclasses.replace(prob, load_scale=target)
    xn, norms, ok, reason = _newton(step_prob, settings, x)
    record.total_iterations += max(len(norms) - 1, 0)
    record.steps.append({"load": float(target), "norms": norms, "converged": ok, "reason": reason})
    if ok:
        return xn, record
    log.info("load %.6g failed (%s); bisecting", target, reason)
    if bisections_left <= 0:
        raise DivergenceError(f"Newton failed at load {target:.6g}: {reason}", record, x)
    mid = 0.5 * (start + target)
    x, record = _advance(prob, settings, x, start, mid, record, bisections_left - 1)
    return _advance(prob, settings, x, mid, target, record, bisections_left - 1)


def continuation_solve(prob: ProblemDefinition, settings: SolverSettings | None = None, initial=None):
    """Uniform load schedule s = i/N times ``prob.load_scale``, each step warm-started."""
    settings = settings or SolverSettings()
    record = ConvergenceRecord()
    t0 = time.perf_counter()
    x = prob.zero_state() if initial is None else np.asarray(initial, dtype=float).copy()
    n = settings.continuation_steps
    prev = 0.0
    for i in range(1, n + 1):
        s = prob.load_scale * i / n
        x, record = _advance(prob, settings, x, prev, s, record, settings.max_step_bisections)
        prev = s
    record.wall_time = time.perf_counter() - t0
    return x, record
