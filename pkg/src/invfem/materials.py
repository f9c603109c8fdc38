"""Hyperelastic strain-energy densities and their AD derivatives.

Energies are written once, generically, over scalars that may be plain
arrays or ``HyperDual`` numbers. Stress and tangent come from seeding the
deformation (F, or H = grad u' + I for inverse kinematics) and the pressure.
Swapping a material model therefore only means editing its energy function.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import dual
from .dual import HyperDual
from .kinematics import DeformationState, ElementInversionError

J_FLOOR = 1e-10


class MaterialKind(str, enum.Enum):
    NEO_HOOKEAN = "neo_hookean"
    MOONEY_RIVLIN = "mooney_rivlin"
    NEO_HOOKEAN_MIXED = "neo_hookean_mixed"
    MOONEY_RIVLIN_MIXED = "mooney_rivlin_mixed"

    @property
    def mixed(self) -> bool:
        return self.value.endswith("_mixed")


@dataclass(frozen=True)
class MaterialSpec:
    """Material model and constants (Pa, kg/m^3).

    ``d1`` is the coefficient multiplying (J-1)^2 in the Mooney-Rivlin
    energy. Abaqus reports the reciprocal; use ``from_abaqus``.
    """

    kind: MaterialKind
    mu: float = 0.0
    lmbda: float = 0.0
    c1: float = 0.0
    c2: float = 0.0
    d1: float = 0.0
    rho0: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", MaterialKind(self.kind))
        if self.rho0 <= 0:
            raise ValueError("rho0 must be positive")
        if self.kind in (MaterialKind.NEO_HOOKEAN, MaterialKind.NEO_HOOKEAN_MIXED):
            if self.mu <= 0 or self.lmbda < 0:
                raise ValueError("neo-Hookean needs mu > 0 and lambda >= 0")
            if self.kind.mixed and self.lmbda <= 0:
                raise ValueError("mixed neo-Hookean needs lambda > 0")
        else:
            if self.c1 + self.c2 <= 0 or self.d1 <= 0:
                raise ValueError("Mooney-Rivlin needs c1 + c2 > 0 and d1 > 0")

    @property
    def mixed(self) -> bool:
        return self.kind.mixed

    @classmethod
    def from_abaqus(cls, c10: float, c01: float, d1: float, rho0: float, mixed: bool = True) -> "MaterialSpec":
        """Mooney-Rivlin from Abaqus constants, whose volumetric term is (J-1)^2 / D1."""
        kind = MaterialKind.MOONEY_RIVLIN_MIXED if mixed else MaterialKind.MOONEY_RIVLIN
        return cls(kind, c1=c10, c2=c01, d1=1.0 / d1, rho0=rho0)


def _check_p(spec: MaterialSpec, p):
    if spec.mixed and p is None:
        raise ValueError(f"{spec.kind.value} needs a pressure")
    if not spec.mixed and p is not None:
        raise ValueError(f"{spec.kind.value} takes no pressure")


def _invariants(spec: MaterialSpec, A, inverse: bool = False):
    """(I_B, II_B, J) of F = A, or of F = A^-1 when ``inverse``; II_B only for Mooney-Rivlin.

    Uses cof A: J = det A, II_B = |cof F|^2. For F = H^-1 these become
    I_B = |cof H|^2 / det^2 H, II_B = |H|^2 / det^2 H and J = 1 / det H.
    """
    need_ii = spec.kind in (MaterialKind.MOONEY_RIVLIN, MaterialKind.MOONEY_RIVLIN_MIXED)
    cof = dual.cofactor(A)
    d = A[0][0] * cof[0][0] + A[0][1] * cof[0][1] + A[0][2] * cof[0][2]
    if not inverse:
        return dual.frobenius_sq(A), dual.frobenius_sq(cof) if need_ii else None, d
    r = 1.0 / d
    r2 = r * r
    return dual.frobenius_sq(cof) * r2, dual.frobenius_sq(A) * r2 if need_ii else None, r


def _energy(spec: MaterialSpec, I_B, II_B, J, p=None):
    """Energy density from the invariants of B = F F^T and J = det F."""
    kind = spec.kind
    if kind in (MaterialKind.NEO_HOOKEAN, MaterialKind.NEO_HOOKEAN_MIXED):
        lnJ = dual.log(J)
        psi = 0.5 * spec.mu * (I_B - 3.0) - spec.mu * lnJ
        if kind is MaterialKind.NEO_HOOKEAN:
            return psi + 0.5 * spec.lmbda * lnJ * lnJ
        return psi + p * lnJ - p * p * (0.5 / spec.lmbda)
    psi = spec.c1 * (J ** (-2.0 / 3.0) * I_B - 3.0) + spec.c2 * (J ** (-4.0 / 3.0) * II_B - 3.0)
    if kind is MaterialKind.MOONEY_RIVLIN:
        return psi + spec.d1 * (J - 1.0) * (J - 1.0)
    return psi + p * (J - 1.0) - p * p * (0.25 / spec.d1)


def _guard_J(J):
    J = np.asarray(J)
    bad = ~(J > J_FLOOR)
    if np.any(bad):
        flat = np.flatnonzero(bad.ravel())[0] if J.ndim else 0
        raise ElementInversionError(J.ravel()[flat] if J.ndim else J)


def energy_density(spec: MaterialSpec, state: DeformationState, p=None) -> np.ndarray:
    _check_p(spec, p)
    _guard_J(state.J)
    I_B, II_B, _ = _invariants(spec, dual.from_array(np.asarray(state.F)))
    return _energy(spec, I_B, II_B, np.asarray(state.J), p)


class EnergyDerivatives(NamedTuple):
    """psi, its gradient (..., n) and Hessian (..., n, n) w.r.t. the 9 entries of the seeded tensor (+ p)."""

    psi: np.ndarray
    grad: np.ndarray
    hess: np.ndarray


def _levi_civita_map() -> np.ndarray:
    """E with (H.ravel() @ E)[(i,j,k,l)] = eps_ikm eps_jln H_mn, the Hessian of det H."""
    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[i, j, k], eps[i, k, j] = 1.0, -1.0
    return np.einsum("ikm,jln->mnijkl", eps, eps).reshape(9, 81)


_EPS_MAP = _levi_civita_map()


def _base_scalars(H: np.ndarray, need_a: bool, need_b: bool):
    """Values, gradients (..., 9) and Hessians (..., 9, 9) of |H|^2, |cof H|^2 and det H."""
    shape = H.shape[:-2]
    n = int(np.prod(shape, dtype=int))
    Hf = H.reshape(n, 9)
    cof = np.stack([np.cross(H[..., 1, :], H[..., 2, :]), np.cross(H[..., 2, :], H[..., 0, :]), np.cross(H[..., 0, :], H[..., 1, :])], axis=-2)
    d = np.einsum("...j,...j->...", H[..., 0, :], cof[..., 0, :])
    vals, grads, hesses = [], [], []
    if need_a:
        vals.append(np.einsum("...ij,...ij->...", H, H))
        grads.append(2.0 * H.reshape(shape + (9,)))
        hesses.append(None)  # 2 I, added on the diagonal
    if need_b:
        a = np.einsum("...ij,...ij->...", H, H)
        C = np.swapaxes(H, -1, -2) @ H
        B = H @ np.swapaxes(H, -1, -2)
        I3 = np.eye(3)
        hb = (
            2.0 * np.einsum("...ij,...kl->...ijkl", H, H)
            + a[..., None, None, None, None] * np.einsum("ik,jl->ijkl", I3, I3)
            - np.einsum("ik,...lj->...ijkl", I3, C)
            - np.einsum("...il,...kj->...ijkl", H, H)
            - np.einsum("...ik,jl->...ijkl", B, I3)
        )
        vals.append(np.einsum("...ij,...ij->...", cof, cof))
        grads.append((2.0 * (a[..., None, None] * H - H @ C)).reshape(shape + (9,)))
        hesses.append(2.0 * hb.reshape(shape + (9, 9)))
    vals.append(d)
    grads.append(cof.reshape(shape + (9,)))
    hesses.append((Hf @ _EPS_MAP).reshape(shape + (9, 9)))
    return vals, grads, hesses


def energy_derivatives(spec: MaterialSpec, G: np.ndarray, p=None, inverse: bool = False) -> EnergyDerivatives:
    """Seed H = G + I (row-major, then p) and differentiate the energy.

    Forward: F = H. Inverse: F = H^-1, differentiated through the inverse.
    The energy is differentiated by AD over the scalars |H|^2, |cof H|^2,
    det H (and p) and chained with their closed-form tensor derivatives;
    ``energy_derivatives_reference`` seeds all nine entries instead.
    """
    _check_p(spec, p)
    H = np.asarray(G, dtype=float) + np.eye(3)
    shape = H.shape[:-2]
    need_ii = spec.kind in (MaterialKind.MOONEY_RIVLIN, MaterialKind.MOONEY_RIVLIN_MIXED)
    # forward uses |H|^2 as I_B, inverse as II_B (and the reverse for |cof H|^2)
    need_a = need_ii or not inverse
    need_b = need_ii or inverse
    vals, grads, hesses = _base_scalars(H, need_a, need_b)
    _guard_J(vals[-1])
    seeds = np.stack(vals, axis=-1)
    if spec.mixed:
        seeds = np.concatenate([seeds, np.broadcast_to(np.asarray(p, dtype=float), shape)[..., None]], axis=-1)
    v = HyperDual.variables(seeds)
    a = v[0] if need_a else None
    b = v[int(need_a)] if need_b else None
    d = v[len(vals) - 1]
    if not inverse:
        I_B, II_B, J = a, b, d
    else:
        r = 1.0 / d
        r2 = r * r
        I_B, II_B, J = b * r2, (a * r2 if need_ii else None), r
    psi = _energy(spec, I_B, II_B, J, v[len(vals)] if spec.mixed else None)
    ds, dss = psi.d1, psi.hessian
    ns = len(vals)
    Gs = np.stack(grads, axis=-2)  # (..., ns, 9)
    grad_H = np.einsum("...s,...si->...i", ds[..., :ns], Gs)
    hess_H = np.swapaxes(Gs, -1, -2) @ dss[..., :ns, :ns] @ Gs
    for s_idx, h in enumerate(hesses):
        if h is None:
            hess_H += 2.0 * ds[..., s_idx, None, None] * np.eye(9)
        else:
            hess_H += ds[..., s_idx, None, None] * h
    if not spec.mixed:
        return EnergyDerivatives(psi.val, grad_H, hess_H)
    grad = np.concatenate([grad_H, ds[..., ns:]], axis=-1)
    hHp = np.einsum("...s,...si->...i", dss[..., :ns, ns], Gs)
    hess = np.empty(shape + (10, 10))
    hess[..., :9, :9] = hess_H
    hess[..., :9, 9] = hHp
    hess[..., 9, :9] = hHp
    hess[..., 9, 9] = dss[..., ns, ns]
    return EnergyDerivatives(psi.val, grad, hess)


def energy_derivatives_reference(spec: MaterialSpec, G: np.ndarray, p=None, inverse: bool = False) -> EnergyDerivatives:
    """Same as ``energy_derivatives`` but with hyper-dual seeds on all nine entries of H (and p)."""
    _check_p(spec, p)
    H = np.asarray(G, dtype=float) + np.eye(3)
    detH = np.linalg.det(H)
    _guard_J(detH)
    seeds = H.reshape(H.shape[:-2] + (9,))
    if spec.mixed:
        seeds = np.concatenate([seeds, np.asarray(p, dtype=float)[..., None] * np.ones(seeds.shape[:-1] + (1,))], axis=-1)
    v = HyperDual.variables(seeds)
    pd = v[9] if spec.mixed else None
    I_B, II_B, J = _invariants(spec, dual.matrix(v[:9]), inverse)
    psi = _energy(spec, I_B, II_B, J, pd)
    return EnergyDerivatives(psi.val, psi.d1, psi.hessian)


def first_pk_stress(spec: MaterialSpec, state: DeformationState, p=None) -> np.ndarray:
    """P = d psi / dF; for inverse states it is obtained through d psi / dH."""
    if state.H is not None:
        H = np.asarray(state.H)
        d = energy_derivatives(spec, H - np.eye(3), p, inverse=True)
        g = d.grad[..., :9].reshape(H.shape)
        Ht = np.swapaxes(H, -1, -2)
        return -Ht @ g @ Ht
    F = np.asarray(state.F)
    d = energy_derivatives(spec, F - np.eye(3), p)
    return d.grad[..., :9].reshape(F.shape)


class Tangent(NamedTuple):
    dP_dF: np.ndarray  # (..., 3, 3, 3, 3)
    dP_dp: np.ndarray | None  # (..., 3, 3)
    d2psi_dp2: np.ndarray | None  # (...)


def material_tangent(spec: MaterialSpec, state: DeformationState, p=None) -> Tangent:
    F = np.asarray(state.F)
    d = energy_derivatives(spec, F - np.eye(3), p)
    shape = F.shape[:-2]
    A = d.hess[..., :9, :9].reshape(shape + (3, 3, 3, 3))
    if not spec.mixed:
        return Tangent(A, None, None)
    return Tangent(A, d.hess[..., :9, 9].reshape(shape + (3, 3)), d.hess[..., 9, 9])


def pressure_residual(spec: MaterialSpec, state: DeformationState, p) -> np.ndarray:
    """d psi / dp; zero at the pressure consistent with the current volume change."""
    F = np.asarray(state.F)
    d = energy_derivatives(spec, F - np.eye(3), p)
    return d.grad[..., 9]
