"""Closed-form shear solutions for Mooney-Rivlin and field errors against them.

These formulas are written out independently of ``materials`` so that the
comparison with the finite-element output checks two separate routes.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


class ShearKind(str, enum.Enum):
    SIMPLE = "simple"
    GENERALIZED = "generalized"


@dataclass(frozen=True)
class ShearOracle:
    """Shear with boundary displacement (k y, 0, 0) or (k y^2, 0, 0) on the unit cube."""

    k: float
    c1: float
    c2: float
    kind: ShearKind = ShearKind.SIMPLE

    def __post_init__(self):
        object.__setattr__(self, "kind", ShearKind(self.kind))
        if self.c1 + self.c2 <= 0:
            raise ValueError("Mooney-Rivlin needs c1 + c2 > 0")

    def boundary_exprs(self, inverse: bool = False) -> tuple[str, str, str]:
        k = -self.k if inverse else self.k
        shape = "y" if self.kind is ShearKind.SIMPLE else "y^2"
        return (f"{shape}*({k!r})", "0", "0")


def _simple_energy(k, c1, c2):
    return k * k * (c1 + c2)


def _simple_cauchy(k, c1, c2):
    k = np.asarray(k, dtype=float)
    s = np.zeros(k.shape + (3, 3))
    k2 = k * k
    s[..., 0, 0] = k2 * (2 * c2 + 4 * c1) / 3
    s[..., 1, 1] = -k2 * (4 * c2 + 2 * c1) / 3
    s[..., 2, 2] = k2 * (2 * c2 - 2 * c1) / 3
    s[..., 0, 1] = s[..., 1, 0] = k * (2 * c2 + 2 * c1)
    return s


def oracle_energy(o: ShearOracle, y=None):
    """psi for simple shear; unit-cube average (or the value at ``y``) for generalized shear."""
    if o.kind is ShearKind.SIMPLE:
        return _simple_energy(o.k, o.c1, o.c2)
    if y is None:
        return 4.0 * o.k**2 * (o.c1 + o.c2) / 3.0
    return _simple_energy(2.0 * o.k * np.asarray(y, dtype=float), o.c1, o.c2)


def oracle_cauchy(o: ShearOracle, y=None) -> np.ndarray:
    """Cauchy stress; for generalized shear the unit-cube average, or pointwise at ``y``.

    Pointwise, the generalized field is simple shear with local amount 2 k y.
    """
    if o.kind is ShearKind.SIMPLE:
        return _simple_cauchy(o.k, o.c1, o.c2)
    if y is not None:
        return _simple_cauchy(2.0 * o.k * np.asarray(y, dtype=float), o.c1, o.c2)
    k, c1, c2 = o.k, o.c1, o.c2
    s = np.zeros((3, 3))
    s[0, 0] = k * k * (8 * c2 + 16 * c1) / 9
    s[1, 1] = -k * k * (16 * c2 + 8 * c1) / 9
    s[2, 2] = k * k * (8 * c2 - 8 * c1) / 9
    s[0, 1] = s[1, 0] = k * (2 * c2 + 2 * c1)
    return s


class FieldError(NamedTuple):
    value: float
    relative: bool


def field_relative_error(fe, oracle, weights=None) -> FieldError:
    """||fe - oracle|| / ||oracle|| in L2 over quadrature points.

    ``fe`` has shape (..., *value_shape) with the leading axes matching
    ``weights``; ``oracle`` broadcasts against it. A zero oracle norm falls
    back to the absolute error, reported with ``relative=False``.
    """
    fe = np.asarray(fe, dtype=float)
    oracle = np.broadcast_to(np.asarray(oracle, dtype=float), fe.shape)
    if weights is None:
        weights = np.ones(fe.shape[:1])
    w = np.asarray(weights, dtype=float)
    if fe.shape[: w.ndim] != w.shape:
        raise ValueError(f"weights of shape {w.shape} do not match field of shape {fe.shape}")
    axes = tuple(range(w.ndim, fe.ndim))
    num = float(np.sum(w * np.sum((fe - oracle) ** 2, axis=axes)))
    den = float(np.sum(w * np.sum(oracle**2, axis=axes)))
    if den == 0.0:
        warnings.warn("oracle norm is zero; reporting the absolute error", RuntimeWarning, stacklevel=2)
        return FieldError(float(np.sqrt(num)), False)
    return FieldError(float(np.sqrt(num / den)), True)


def average(field, weights) -> np.ndarray:
    """Quadrature average of a field over the domain."""
    field = np.asarray(field, dtype=float)
    w = np.asarray(weights, dtype=float)
    extra = field.ndim - w.ndim
    return np.sum(w.reshape(w.shape + (1,) * extra) * field, axis=tuple(range(w.ndim))) / w.sum()
