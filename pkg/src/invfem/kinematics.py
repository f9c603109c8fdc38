"""Deformation measures for forward and inverse analysis.

All functions accept a single 3x3 tensor or a stack (..., 3, 3).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ElementInversionError(ArithmeticError):
    """Non-positive Jacobian determinant; ``J`` is the offending value, ``cell`` its cell id if known."""

    def __init__(self, J: float, cell: int | None = None, message: str | None = None):
        self.J = float(J)
        self.cell = cell
        where = f" in cell {cell}" if cell is not None else ""
        super().__init__(message or f"element inversion{where}: J = {self.J:.6g}")


@dataclass(frozen=True, eq=False)
class DeformationState:
    F: np.ndarray
    J: np.ndarray
    B: np.ndarray
    C: np.ndarray
    # H = grad u' + I for inverse states, None for direct ones
    H: np.ndarray | None = None

    @property
    def invariants_C(self):
        return invariants(self.C)

    @property
    def invariants_B(self):
        return invariants(self.B)


def _check_positive(J, what="J"):
    J = np.asarray(J)
    bad = ~(J > 0)
    if np.any(bad):
        idx = np.unravel_index(np.argmax(bad), J.shape) if J.ndim else ()
        raise ElementInversionError(J[idx] if J.ndim else J, message=f"non-positive {what} = {float(J[idx] if J.ndim else J):.6g}")


def _state(F, H=None) -> DeformationState:
    J = np.linalg.det(F)
    _check_positive(J)
    Ft = np.swapaxes(F, -1, -2)
    return DeformationState(F=F, J=J, B=F @ Ft, C=Ft @ F, H=H)


def deformation_gradient_direct(grad_u) -> DeformationState:
    """F = grad_0 u + I."""
    grad_u = np.asarray(grad_u, dtype=float)
    return _state(grad_u + np.eye(3))


def deformation_gradient_inverse(grad_uprime) -> DeformationState:
    """F = (grad u' + I)^-1, gradients taken on the deformed configuration."""
    H = np.asarray(grad_uprime, dtype=float) + np.eye(3)
    _check_positive(np.linalg.det(H), "det(grad u' + I)")
    return _state(np.linalg.inv(H), H=H)


def invariants(C):
    """(I, II, III) = (tr C, (tr^2 C - tr C^2)/2, det C)."""
    C = np.asarray(C, dtype=float)
    tr = np.trace(C, axis1=-2, axis2=-1)
    tr2 = np.einsum("...ij,...ji->...", C, C)
    return tr, 0.5 * (tr * tr - tr2), np.linalg.det(C)


def green_lagrange(C) -> np.ndarray:
    return 0.5 * (np.asarray(C, dtype=float) - np.eye(3))


def piola_transform(P, F) -> np.ndarray:
    """Cauchy stress sigma = J^-1 P F^T."""
    P = np.asarray(P, dtype=float)
    F = np.asarray(F, dtype=float)
    J = np.linalg.det(F)
    _check_positive(J)
    return (P @ np.swapaxes(F, -1, -2)) / np.asarray(J)[..., None, None]
