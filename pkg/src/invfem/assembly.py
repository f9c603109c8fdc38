"""Residual and consistent Jacobian of the hyperelastic weak form.

Forward: integrate P : grad_0(eta) over the input mesh, taken as the rest
configuration. Inverse: integrate sigma : grad(eta) over the input mesh, taken
as the deformed configuration, with F = (grad u' + I)^-1 and rho = rho0 / J.

The unknown vector is ``[u (3 * n_u_nodes, node-major), p (n_p_nodes)]``.
Element kernels are vectorised over cells and quadrature points; the
Jacobian comes from second derivatives of the energy seeded on the
quadrature-point displacement gradient and pressure, mapped to element DOFs
through the (linear) gradient operator.
"""

from __future__ import annotations

import os
import weakref
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .expr import Expr, as_expr, evaluate
from .fem import (
    FunctionSpace,
    NodalField,
    build_space,
    quadrature_tet,
    quadrature_triangle,
    tabulate_basis,
    tabulate_triangle,
)
from .kinematics import ElementInversionError
from .materials import MaterialSpec, energy_derivatives
from .mesh import Mesh

FORWARD = "forward"
INVERSE = "inverse"
DISPLACEMENT = "displacement"
MIXED = "mixed"

CHUNK_CELLS = 256


@dataclass(frozen=True)
class DirichletBC:
    """Prescribed displacement on facets with ``tag``; ``components`` masks x, y, z."""

    tag: int
    exprs: tuple
    components: tuple = (True, True, True)

    def __post_init__(self):
        exprs = tuple(as_expr(e) for e in self.exprs)
        if len(exprs) != 3 or len(self.components) != 3:
            raise ValueError("Dirichlet condition needs three expressions and a three-entry mask")
        object.__setattr__(self, "exprs", exprs)
        object.__setattr__(self, "components", tuple(bool(c) for c in self.components))


@dataclass(frozen=True)
class Traction:
    tag: int
    exprs: tuple

    def __post_init__(self):
        exprs = tuple(as_expr(e) for e in self.exprs)
        if len(exprs) != 3:
            raise ValueError("traction needs three expressions")
        object.__setattr__(self, "exprs", exprs)


@dataclass(frozen=True, eq=False)
class ProblemDefinition:
    direction: str
    formulation: str
    mesh: Mesh
    u_space: FunctionSpace
    p_space: FunctionSpace | None
    material: MaterialSpec
    dirichlet: tuple = ()
    tractions: tuple = ()
    body_force: tuple | None = None
    load_scale: float = 1.0
    quad_degree: int = 4

    def __post_init__(self):
        if self.direction not in (FORWARD, INVERSE):
            raise ValueError(f"direction must be forward or inverse, got {self.direction!r}")
        if self.formulation not in (DISPLACEMENT, MIXED):
            raise ValueError(f"formulation must be displacement or mixed, got {self.formulation!r}")
        if self.u_space.mesh is not self.mesh or self.u_space.value_dim != 3:
            raise ValueError("displacement space must be a vector space on the problem mesh")
        if self.formulation == MIXED:
            if self.u_space.degree != 2 or self.p_space is None or self.p_space.degree != 1:
                raise ValueError("mixed formulation requires P2 displacement and P1 pressure")
            if self.p_space.mesh is not self.mesh or self.p_space.value_dim != 1:
                raise ValueError("pressure space must be scalar on the problem mesh")
        elif self.p_space is not None:
            raise ValueError("displacement formulation takes no pressure space")
        if self.material.mixed != (self.formulation == MIXED):
            raise ValueError(f"material {self.material.kind.value} does not fit the {self.formulation} formulation")
        object.__setattr__(self, "dirichlet", tuple(self.dirichlet))
        object.__setattr__(self, "tractions", tuple(self.tractions))
        if self.body_force is not None:
            object.__setattr__(self, "body_force", tuple(as_expr(e) for e in self.body_force))
        tags = self.mesh.tags
        for bc in self.dirichlet + self.tractions:
            if bc.tag not in tags:
                raise ValueError(f"boundary tag {bc.tag} not present in mesh (tags {sorted(tags)})")

    @property
    def inverse(self) -> bool:
        return self.direction == INVERSE

    @property
    def num_u(self) -> int:
        return self.u_space.num_dofs

    @property
    def num_dofs(self) -> int:
        return self.num_u + (self.p_space.num_dofs if self.p_space is not None else 0)

    def zero_state(self) -> np.ndarray:
        return np.zeros(self.num_dofs)

    def split(self, x) -> tuple[NodalField, NodalField | None]:
        x = np.asarray(x)
        u = NodalField(self.u_space, x[: self.num_u].reshape(-1, 3))
        p = NodalField(self.p_space, x[self.num_u :]) if self.p_space is not None else None
        return u, p


def make_problem(
    mesh: Mesh,
    material: MaterialSpec,
    direction: str = FORWARD,
    degree: int | None = None,
    dirichlet: Sequence[DirichletBC] = (),
    tractions: Sequence[Traction] = (),
    body_force=None,
    load_scale: float = 1.0,
    quad_degree: int = 4,
) -> ProblemDefinition:
    """Build spaces and a problem; mixed materials get P2/P1, others P2 unless ``degree`` says otherwise."""
    formulation = MIXED if material.mixed else DISPLACEMENT
    if degree is None:
        degree = 2
    u_space = build_space(mesh, degree, 3)
    p_space = build_space(mesh, 1, 1) if material.mixed else None
    return ProblemDefinition(
        direction, formulation, mesh, u_space, p_space, material, tuple(dirichlet), tuple(tractions),
        body_force, load_scale, quad_degree,
    )


@dataclass(frozen=True, eq=False)
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray

    @property
    def num_dofs(self) -> int:
        return self.matrix.shape[0]


# --- geometry and sparsity, cached per (space, space, rule) ----------------------


@dataclass(eq=False)
class _Geometry:
    w: np.ndarray  # (m, q) quadrature weight times |det J|
    N: np.ndarray  # (q, nb) displacement basis values
    dN: np.ndarray  # (m, q, nb, 3) physical gradients
    M: np.ndarray | None  # (q, 4) pressure basis values
    xq: np.ndarray  # (m, q, 3) physical quadrature points
    u_dofs: np.ndarray  # (m, 3 nb)
    p_dofs: np.ndarray | None  # (m, 4), offset by num_u
    el_dofs: np.ndarray  # (m, nd)
    csr_indptr: np.ndarray
    csr_indices: np.ndarray
    csr_pos: np.ndarray  # (m * nd * nd,) index into csr data
    diag_pos: np.ndarray  # (ndofs,)
    ndofs: int
    cache: dict = field(default_factory=dict)


_GEOMETRY: "weakref.WeakKeyDictionary[FunctionSpace, dict]" = weakref.WeakKeyDictionary()


def _geometry(prob: ProblemDefinition) -> _Geometry:
    per_space = _GEOMETRY.setdefault(prob.u_space, {})
    key = (id(prob.p_space), prob.quad_degree)
    geom = per_space.get(key)
    if geom is None:
        geom = _build_geometry(prob)
        per_space[key] = geom
    return geom


def _build_geometry(prob: ProblemDefinition) -> _Geometry:
    mesh = prob.mesh
    rule = quadrature_tet(prob.quad_degree)
    N, dN_ref = tabulate_basis(prob.u_space.degree, rule.points)
    x = mesh.vertices[mesh.cells]  # (m, 4, 3)
    Jm = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0], x[:, 3] - x[:, 0]], axis=-1)  # columns
    detJ = np.linalg.det(Jm)
    if np.any(detJ <= 0):
        bad = int(np.argmin(detJ))
        raise ElementInversionError(detJ[bad] / 6.0, cell=bad, message=f"input mesh cell {bad} has non-positive volume")
    Jinv = np.linalg.inv(Jm)
    dN = np.einsum("qnr,mrj->mqnj", dN_ref, Jinv)
    w = rule.weights[None, :] * detJ[:, None]
    lam = np.column_stack([1.0 - rule.points.sum(axis=1), rule.points])
    xq = np.einsum("qv,mvi->mqi", lam, x)

    u_dofs = prob.u_space.cell_dofs
    M = p_dofs = None
    el_dofs = u_dofs
    if prob.p_space is not None:
        M, _ = tabulate_basis(1, rule.points)
        p_dofs = prob.p_space.cell_dofs + prob.num_u
        el_dofs = np.concatenate([u_dofs, p_dofs], axis=1)

    n = prob.num_dofs
    nd = el_dofs.shape[1]
    rows = np.repeat(el_dofs, nd, axis=1).ravel()
    cols = np.tile(el_dofs, (1, nd)).ravel()
    keys = rows * n + cols
    ukeys, pos = np.unique(keys, return_inverse=True)
    urows = ukeys // n
    indices = ukeys % n
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, urows + 1, 1)
    indptr = np.cumsum(indptr)
    diag_keys = np.arange(n) * n + np.arange(n)
    diag_pos = np.searchsorted(ukeys, diag_keys)
    return _Geometry(w, N, dN, M, xq, u_dofs, p_dofs, el_dofs, indptr, indices, pos.reshape(-1), diag_pos, n)


def _body_values(prob: ProblemDefinition, geom: _Geometry) -> np.ndarray | None:
    if prob.body_force is None:
        return None
    key = ("body", prob.body_force)
    if key not in geom.cache:
        pts = geom.xq.reshape(-1, 3)
        b = np.stack([evaluate(e, pts) for e in prob.body_force], axis=-1)
        geom.cache[key] = b.reshape(geom.xq.shape)
    return geom.cache[key]


def traction_vector(prob: ProblemDefinition) -> np.ndarray:
    """Consistent nodal load of the tractions at load scale 1, length ``num_u``."""
    geom = _geometry(prob)
    key = ("traction", prob.tractions)
    if key in geom.cache:
        return geom.cache[key]
    out = np.zeros(prob.num_u)
    if prob.tractions:
        pts, wts = quadrature_triangle(4)
        Nf = tabulate_triangle(prob.u_space.degree, pts)
        lam = np.column_stack([1.0 - pts.sum(axis=1), pts])
        for tr in prob.tractions:
            sel = prob.mesh.facet_tags == tr.tag
            fv = prob.mesh.vertices[prob.mesh.facets[sel]]  # (k, 3, 3)
            area2 = np.linalg.norm(np.cross(fv[:, 1] - fv[:, 0], fv[:, 2] - fv[:, 0]), axis=1)
            xq = np.einsum("qv,kvi->kqi", lam, fv)
            t = np.stack([evaluate(e, xq.reshape(-1, 3)) for e in tr.exprs], axis=-1).reshape(xq.shape)
            contrib = np.einsum("q,k,qa,kqi->kai", wts, area2, Nf, t)
            nodes = prob.u_space.facet_nodes[sel]
            dofs = (nodes[:, :, None] * 3 + np.arange(3)).reshape(-1)
            out += np.bincount(dofs, weights=contrib.reshape(-1), minlength=prob.num_u)
    geom.cache[key] = out
    return out


def _dirichlet(prob: ProblemDefinition) -> tuple[np.ndarray, np.ndarray]:
    """Constrained DOFs and their values at load scale 1 (later conditions win on overlap)."""
    geom = _geometry(prob)
    key = ("dirichlet", prob.dirichlet)
    if key in geom.cache:
        return geom.cache[key]
    vals = {}
    coords = prob.u_space.node_coords
    for bc in prob.dirichlet:
        nodes = prob.u_space.boundary_nodes(bc.tag)
        for c in range(3):
            if not bc.components[c]:
                continue
            v = evaluate(bc.exprs[c], coords[nodes])
            for n, val in zip(nodes * 3 + c, v):
                vals[int(n)] = float(val)
    dofs = np.array(sorted(vals), dtype=np.int64)
    values = np.array([vals[d] for d in dofs.tolist()])
    geom.cache[key] = (dofs, values)
    return dofs, values


def dirichlet_dofs(prob: ProblemDefinition) -> np.ndarray:
    return _dirichlet(prob)[0]


def _as_vector(prob: ProblemDefinition, state) -> np.ndarray:
    if isinstance(state, NodalField):
        state = (state,)
    if isinstance(state, (tuple, list)) and state and isinstance(state[0], NodalField):
        parts = [f.flat for f in state if f is not None]
        state = np.concatenate(parts)
    x = np.asarray(state, dtype=float)
    if x.shape != (prob.num_dofs,):
        raise ValueError(f"state has shape {x.shape}, problem expects ({prob.num_dofs},)")
    return x


def apply_dirichlet(prob: ProblemDefinition, state) -> np.ndarray:
    """Copy of ``state`` with constrained DOFs set to load_scale * expression(DOF coordinate)."""
    x = _as_vector(prob, state).copy()
    dofs, vals = _dirichlet(prob)
    x[dofs] = prob.load_scale * vals
    return x


# --- element kernels ----------------------------------------------------------


def _quadrature_terms(prob: ProblemDefinition, G, p, b, need_jac: bool):
    """Stress-like integrand S, pressure residual rp, force density f and their derivatives."""
    spec = prob.material
    d = energy_derivatives(spec, G, p, inverse=prob.inverse)
    shape = G.shape[:-2]
    g = d.grad[..., :9].reshape(shape + (3, 3))
    K = d.hess[..., :9, :9].reshape(shape + (3, 3, 3, 3)) if need_jac else None
    mixed = spec.mixed
    out = {}
    s = prob.load_scale
    if not prob.inverse:
        out["S"] = g
        if need_jac:
            out["dS"] = K
        if mixed:
            out["rp"] = d.grad[..., 9]
            if need_jac:
                out["dS_dp"] = d.hess[..., :9, 9].reshape(shape + (3, 3))
                out["drp"] = d.hess[..., 9, :9].reshape(shape + (3, 3))
                out["drp_dp"] = d.hess[..., 9, 9]
        if b is not None:
            out["f"] = s * spec.rho0 * b
        return out

    H = G + np.eye(3)
    detH = np.linalg.det(H)
    Hinv = np.linalg.inv(H)
    S = -detH[..., None, None] * np.einsum("...mi,...mj->...ij", H, g)
    out["S"] = S
    if need_jac:
        # dS_ij/dH_kl = Hinv_lk S_ij - det(H) delta_il g_kj - det(H) H_mi K_mjkl
        Ht = np.swapaxes(H, -1, -2)
        dS = S[..., :, :, None, None] * np.swapaxes(Hinv, -1, -2)[..., None, None, :, :]
        dS -= (Ht @ K.reshape(shape + (3, 27))).reshape(shape + (3, 3, 3, 3)) * detH[..., None, None, None, None]
        dS -= np.eye(3)[:, None, None, :] * (detH[..., None, None] * np.swapaxes(g, -1, -2))[..., None, :, :, None]
        out["dS"] = dS
    if mixed:
        gp = d.grad[..., 9]
        out["rp"] = detH * gp
        if need_jac:
            Kp = d.hess[..., :9, 9].reshape(shape + (3, 3))
            out["dS_dp"] = -detH[..., None, None] * np.einsum("...mi,...mj->...ij", H, Kp)
            out["drp"] = detH[..., None, None] * (
                np.swapaxes(Hinv, -1, -2) * gp[..., None, None] + d.hess[..., 9, :9].reshape(shape + (3, 3))
            )
            out["drp_dp"] = detH * d.hess[..., 9, 9]
    if b is not None:
        f = s * spec.rho0 * detH[..., None] * b
        out["f"] = f
        if need_jac:
            out["df"] = np.einsum("...i,...lk->...ikl", f, Hinv)
    return out


def _chunk_terms(prob, geom, x, b_all, cells, need_jac):
    dN = geom.dN[cells]
    w = geom.w[cells]
    nb = dN.shape[2]
    ue = x[geom.u_dofs[cells]].reshape(len(cells), nb, 3)
    G = np.swapaxes(ue, 1, 2)[:, None] @ dN
    p = None
    if geom.p_dofs is not None:
        p = np.einsum("qn,cn->cq", geom.M, x[geom.p_dofs[cells]])
    b = b_all[cells] if b_all is not None else None
    try:
        t = _quadrature_terms(prob, G, p, b, need_jac)
    except ElementInversionError as exc:
        H = G + np.eye(3)
        J = np.linalg.det(H)
        J = 1.0 / J if prob.inverse else J
        bad = np.argwhere(~(J > 0) | (J <= 1e-10))
        c = int(cells[bad[0, 0]]) if len(bad) else None
        raise ElementInversionError(exc.J, cell=c) from None

    N = geom.N
    w4 = w[:, :, None, None]
    Ru = (dN @ np.swapaxes(w4 * t["S"], -1, -2)).sum(axis=1)
    if "f" in t:
        Ru -= N.T @ (w[:, :, None] * t["f"])
    Ru = Ru.reshape(len(cells), -1)
    R = Ru
    if p is not None:
        Rp = (w * t["rp"]) @ geom.M
        R = np.concatenate([Ru, Rp], axis=1)
    if not need_jac:
        return R, None

    nu = 3 * nb
    nc, nq = w.shape
    # T_qaikl = dN_qaj dS_qijkl (- N_qa df_qikl), then Kuu_aibk = sum_q w T_qaikl dN_qbl
    dS = t["dS"].transpose(0, 1, 3, 2, 4, 5).reshape(nc, nq, 3, 27)
    T = (dN @ dS).reshape(nc, nq, nb, 3, 3, 3)
    if "df" in t:
        T -= N[None, :, :, None, None, None] * t["df"][:, :, None]
    T *= w[:, :, None, None, None, None]
    A = T.transpose(0, 2, 3, 4, 1, 5).reshape(nc, nb * 9, nq * 3)
    B = dN.transpose(0, 1, 3, 2).reshape(nc, nq * 3, nb)
    Kuu = (A @ B).reshape(nc, nb, 3, 3, nb).transpose(0, 1, 2, 4, 3).reshape(nc, nu, nu)
    if p is None:
        return R, Kuu
    M = geom.M
    X = dN @ np.swapaxes(w4 * t["dS_dp"], -1, -2)  # (c, q, a, i)
    Kup = X.transpose(0, 2, 3, 1).reshape(nc, nu, nq) @ M
    Y = dN @ np.swapaxes(w4 * t["drp"], -1, -2)  # (c, q, b, k)
    Kpu = M.T @ Y.reshape(nc, nq, nu)
    Kpp = M.T @ ((w * t["drp_dp"])[:, :, None] * M)
    K = np.concatenate([np.concatenate([Kuu, Kup], axis=2), np.concatenate([Kpu, Kpp], axis=2)], axis=1)
    return R, K


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("INVFEM_THREADS", "1")))
    except ValueError:
        return 1


def _element_arrays(prob, x, need_jac, threads=None):
    geom = _geometry(prob)
    b_all = _body_values(prob, geom)
    m = prob.mesh.num_cells
    chunks = [np.arange(i, min(i + CHUNK_CELLS, m)) for i in range(0, m, CHUNK_CELLS)]
    threads = _threads() if threads is None else threads
    work = lambda cells: _chunk_terms(prob, geom, x, b_all, cells, need_jac)  # noqa: E731
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(work, chunks))
    else:
        results = [work(c) for c in chunks]
    R = np.concatenate([r[0] for r in results])
    K = np.concatenate([r[1] for r in results]) if need_jac else None
    return geom, R, K


def _finish_residual(prob, geom, x, Re, apply_bcs):
    R = np.bincount(geom.el_dofs.ravel(), weights=Re.ravel(), minlength=geom.ndofs)
    if prob.tractions:
        R[: prob.num_u] -= prob.load_scale * traction_vector(prob)
    if apply_bcs:
        dofs, vals = _dirichlet(prob)
        R[dofs] = x[dofs] - prob.load_scale * vals
    return R


def _finish_matrix(prob, geom, Ke, apply_bcs):
    n = geom.ndofs
    data = np.bincount(geom.csr_pos, weights=Ke.ravel(), minlength=len(geom.csr_indices))
    if apply_bcs:
        dofs, _ = _dirichlet(prob)
        if len(dofs):
            fixed = np.zeros(n, dtype=bool)
            fixed[dofs] = True
            rows = np.repeat(np.arange(n), np.diff(geom.csr_indptr))
            data[fixed[rows] | fixed[geom.csr_indices]] = 0.0
            data[geom.diag_pos[dofs]] = 1.0
    return sp.csr_matrix((data, geom.csr_indices.copy(), geom.csr_indptr.copy()), shape=(n, n))


def assemble_residual(prob: ProblemDefinition, state, apply_bcs: bool = True, threads: int | None = None) -> np.ndarray:
    x = _as_vector(prob, state)
    geom, Re, _ = _element_arrays(prob, x, False, threads)
    return _finish_residual(prob, geom, x, Re, apply_bcs)


def assemble_jacobian(prob: ProblemDefinition, state, apply_bcs: bool = True, threads: int | None = None) -> sp.csr_matrix:
    x = _as_vector(prob, state)
    geom, _, Ke = _element_arrays(prob, x, True, threads)
    return _finish_matrix(prob, geom, Ke, apply_bcs)


def assemble_system(prob: ProblemDefinition, state, apply_bcs: bool = True, threads: int | None = None) -> SparseSystem:
    """Jacobian and right-hand side -R from a single pass over the cells."""
    x = _as_vector(prob, state)
    geom, Re, Ke = _element_arrays(prob, x, True, threads)
    R = _finish_residual(prob, geom, x, Re, apply_bcs)
    if not apply_bcs:
        return SparseSystem(_finish_matrix(prob, geom, Ke, False), -R)
    rhs = -R
    dofs, _ = _dirichlet(prob)
    if len(dofs):
        # lift the outstanding Dirichlet increment into the free rows
        delta = np.zeros(geom.ndofs)
        delta[dofs] = rhs[dofs]
        if np.any(delta):
            rhs -= _finish_matrix(prob, geom, Ke, False) @ delta
            rhs[dofs] = delta[dofs]
    return SparseSystem(_finish_matrix(prob, geom, Ke, True), rhs)


def assemble_energy(prob: ProblemDefinition, state) -> float:
    """Total potential energy of a forward problem (strain energy minus external work)."""
    if prob.inverse:
        raise ValueError("the inverse weak form is not the gradient of a potential")
    x = _as_vector(prob, state)
    geom = _geometry(prob)
    m = prob.mesh.num_cells
    nb = geom.dN.shape[2]
    ue = x[geom.u_dofs].reshape(m, nb, 3)
    G = np.einsum("cni,cqnj->cqij", ue, geom.dN)
    p = np.einsum("qn,cn->cq", geom.M, x[geom.p_dofs]) if geom.p_dofs is not None else None
    psi = energy_derivatives(prob.material, G, p).psi
    energy = float(np.sum(geom.w * psi))
    b = _body_values(prob, geom)
    if b is not None:
        uq = np.einsum("qa,cai->cqi", geom.N, ue)
        energy -= prob.load_scale * prob.material.rho0 * float(np.sum(geom.w[..., None] * b * uq))
    if prob.tractions:
        energy -= prob.load_scale * float(traction_vector(prob) @ x[: prob.num_u])
    return energy


def quadrature_fields(prob: ProblemDefinition, state):
    """Per-quadrature-point F, Cauchy stress, energy density and weights (for post-processing)."""
    from .kinematics import deformation_gradient_direct, deformation_gradient_inverse, piola_transform
    from .materials import energy_density, first_pk_stress

    x = _as_vector(prob, state)
    geom = _geometry(prob)
    m = prob.mesh.num_cells
    nb = geom.dN.shape[2]
    ue = x[geom.u_dofs].reshape(m, nb, 3)
    G = np.einsum("cni,cqnj->cqij", ue, geom.dN)
    p = np.einsum("qn,cn->cq", geom.M, x[geom.p_dofs]) if geom.p_dofs is not None else None
    st = deformation_gradient_inverse(G) if prob.inverse else deformation_gradient_direct(G)
    P = first_pk_stress(prob.material, st, p)
    return {
        "F": st.F,
        "J": st.J,
        "sigma": piola_transform(P, st.F),
        "psi": energy_density(prob.material, st, p),
        "weights": geom.w,
        "points": geom.xq,
        "p": p,
    }
