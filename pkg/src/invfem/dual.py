"""Vectorised hyper-dual numbers: value, gradient and Hessian carried together.

A ``HyperDual`` holds arrays ``val`` (shape S), ``d1`` (S + (n,)) and
``d2`` (S + (n, n)) for n independent seeds. Arithmetic propagates exact
first and second derivatives; no truncation error, no step size.
``d2 = None`` stands for a zero Hessian (seeds and their linear
combinations), which lets products skip most of the second-order work.
"""

from __future__ import annotations

import numpy as np


class HyperDual:
    __slots__ = ("val", "d1", "d2")
    __array_ufunc__ = None

    def __init__(self, val, d1, d2):
        self.val = val
        self.d1 = d1
        self.d2 = d2

    @property
    def nvars(self) -> int:
        return self.d1.shape[-1]

    @classmethod
    def variables(cls, values: np.ndarray) -> list["HyperDual"]:
        """Seed ``values[..., k]`` as independent variable k; returns n HyperDuals."""
        values = np.asarray(values, dtype=float)
        n = values.shape[-1]
        shape = values.shape[:-1]
        out = []
        for k in range(n):
            d1 = np.zeros(shape + (n,))
            d1[..., k] = 1.0
            out.append(cls(values[..., k].copy(), d1, None))
        return out

    @property
    def hessian(self) -> np.ndarray:
        if self.d2 is None:
            return np.zeros(self.d1.shape + self.d1.shape[-1:])
        return self.d2

    # -- helpers ------------------------------------------------------------

    def _chain(self, f, df, ddf) -> "HyperDual":
        d1 = df[..., None] * self.d1
        d2 = (ddf[..., None] * self.d1)[..., :, None] * self.d1[..., None, :]
        if self.d2 is not None:
            d2 += df[..., None, None] * self.d2
        return HyperDual(f, d1, d2)

    # -- arithmetic ---------------------------------------------------------

    def __neg__(self):
        return HyperDual(-self.val, -self.d1, _neg(self.d2))

    def __add__(self, other):
        if isinstance(other, HyperDual):
            return HyperDual(self.val + other.val, self.d1 + other.d1, _add(self.d2, other.d2))
        return HyperDual(self.val + other, self.d1, self.d2)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, HyperDual):
            return HyperDual(self.val - other.val, self.d1 - other.d1, _add(self.d2, _neg(other.d2)))
        return HyperDual(self.val - other, self.d1, self.d2)

    def __rsub__(self, other):
        return HyperDual(other - self.val, -self.d1, _neg(self.d2))

    def __mul__(self, other):
        if isinstance(other, HyperDual):
            a, b = self, other
            if a is b:
                return a.square()
            outer = a.d1[..., :, None] * b.d1[..., None, :]
            d2 = outer + np.swapaxes(outer, -1, -2)
            if a.d2 is not None:
                d2 += a.d2 * b.val[..., None, None]
            if b.d2 is not None:
                d2 += b.d2 * a.val[..., None, None]
            d1 = a.d1 * b.val[..., None] + b.d1 * a.val[..., None]
            return HyperDual(a.val * b.val, d1, d2)
        other = np.asarray(other)
        d2 = None if self.d2 is None else self.d2 * other[..., None, None]
        return HyperDual(self.val * other, self.d1 * other[..., None], d2)

    def square(self) -> "HyperDual":
        d2 = (2.0 * self.d1)[..., :, None] * self.d1[..., None, :]
        if self.d2 is not None:
            d2 += (2.0 * self.val)[..., None, None] * self.d2
        return HyperDual(self.val * self.val, (2.0 * self.val)[..., None] * self.d1, d2)

    __rmul__ = __mul__

    def reciprocal(self):
        inv = 1.0 / self.val
        return self._chain(inv, -inv * inv, 2.0 * inv * inv * inv)

    def __truediv__(self, other):
        # derivatives via the reciprocal, value by plain division so it matches float arithmetic
        if isinstance(other, HyperDual):
            out = self * other.reciprocal()
            out.val = self.val / other.val
            return out
        other = np.asarray(other)
        out = self * (1.0 / other)
        out.val = self.val / other
        return out

    def __rtruediv__(self, other):
        out = self.reciprocal() * other
        out.val = other / self.val
        return out

    def __pow__(self, c):
        if isinstance(c, HyperDual):
            raise TypeError("only constant exponents are supported")
        if c == 2:
            return self.square()
        v = self.val
        return self._chain(v**c, c * v ** (c - 1), c * (c - 1) * v ** (c - 2))

    def log(self):
        inv = 1.0 / self.val
        return self._chain(np.log(self.val), inv, -inv * inv)

    def exp(self):
        e = np.exp(self.val)
        return self._chain(e, e, e)

    def sqrt(self):
        s = np.sqrt(self.val)
        return self._chain(s, 0.5 / s, -0.25 / (s * self.val))

    def __repr__(self):
        return f"HyperDual(val={self.val!r}, nvars={self.nvars})"


DualScalar = HyperDual


def _neg(a):
    return None if a is None else -a


def _add(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


def value(x):
    return x.val if isinstance(x, HyperDual) else np.asarray(x)


def log(x):
    return x.log() if isinstance(x, HyperDual) else np.log(x)


# --- 3x3 matrices stored as nested lists of scalars (HyperDual or ndarray) -----


def matrix(entries) -> list[list]:
    """Nested 3x3 list from an iterable of 9 row-major entries."""
    entries = list(entries)
    return [entries[0:3], entries[3:6], entries[6:9]]


def from_array(a: np.ndarray) -> list[list]:
    return [[a[..., i, j] for j in range(3)] for i in range(3)]


def matmul_t(A, B):
    """A @ B^T for nested-list matrices."""
    return [[A[i][0] * B[j][0] + A[i][1] * B[j][1] + A[i][2] * B[j][2] for j in range(3)] for i in range(3)]


def det3(A):
    return (
        A[0][0] * (A[1][1] * A[2][2] - A[1][2] * A[2][1])
        - A[0][1] * (A[1][0] * A[2][2] - A[1][2] * A[2][0])
        + A[0][2] * (A[1][0] * A[2][1] - A[1][1] * A[2][0])
    )


def cofactor(A):
    """cof A = det(A) A^-T, entrywise."""
    return [
        [
            A[(i + 1) % 3][(j + 1) % 3] * A[(i + 2) % 3][(j + 2) % 3]
            - A[(i + 1) % 3][(j + 2) % 3] * A[(i + 2) % 3][(j + 1) % 3]
            for j in range(3)
        ]
        for i in range(3)
    ]


def frobenius_sq(A):
    """sum_ij A_ij^2."""
    terms = [A[i][j] * A[i][j] for i in range(3) for j in range(3)]
    return sum(terms[1:], terms[0])


def inv3(A):
    """Inverse via the adjugate; returns (A^-1, det A)."""
    cof = cofactor(A)
    d = A[0][0] * cof[0][0] + A[0][1] * cof[0][1] + A[0][2] * cof[0][2]
    r = 1.0 / d
    return [[cof[j][i] * r for j in range(3)] for i in range(3)], d
