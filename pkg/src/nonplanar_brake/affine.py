"""Scalars that are affine in squared speed and longitudinal acceleration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AffineScalar:
    """``c0 + c_v2 * v**2 + c_vd * vdot``.

    Closed under addition, subtraction and multiplication/division by plain
    numbers, so force-model expressions can be written once and evaluated
    either symbolically (coefficients) or numerically.
    """

    c0: float = 0.0
    c_v2: float = 0.0
    c_vd: float = 0.0

    @classmethod
    def const(cls, value: float) -> "AffineScalar":
        return cls(float(value), 0.0, 0.0)

    @classmethod
    def from_array(cls, arr) -> "AffineScalar":
        c0, c_v2, c_vd = (float(a) for a in arr)
        return cls(c0, c_v2, c_vd)

    def value(self, v2, vd):
        return self.c0 + self.c_v2 * v2 + self.c_vd * vd

    __call__ = value

    def as_array(self) -> np.ndarray:
        return np.array([self.c0, self.c_v2, self.c_vd])

    def _lift(self, other) -> "AffineScalar":
        if isinstance(other, AffineScalar):
            return other
        return AffineScalar(float(other), 0.0, 0.0)

    def __add__(self, other):
        o = self._lift(other)
        return AffineScalar(self.c0 + o.c0, self.c_v2 + o.c_v2, self.c_vd + o.c_vd)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._lift(other)
        return AffineScalar(self.c0 - o.c0, self.c_v2 - o.c_v2, self.c_vd - o.c_vd)

    def __rsub__(self, other):
        return self._lift(other) - self

    def __neg__(self):
        return AffineScalar(-self.c0, -self.c_v2, -self.c_vd)

    def __mul__(self, k):
        if isinstance(k, AffineScalar):
            raise TypeError("product of two affine scalars is not affine")
        k = float(k)
        return AffineScalar(self.c0 * k, self.c_v2 * k, self.c_vd * k)

    __rmul__ = __mul__

    def __truediv__(self, k):
        return self * (1.0 / float(k))

    def isclose(self, other, tol: float = 1e-10) -> bool:
        o = self._lift(other)
        scale = max(1.0, np.abs(self.as_array()).max(), np.abs(o.as_array()).max())
        return bool(np.abs(self.as_array() - o.as_array()).max() <= tol * scale)


ZERO = AffineScalar()
V2 = AffineScalar(0.0, 1.0, 0.0)
VDOT = AffineScalar(0.0, 0.0, 1.0)


def refit(fn) -> AffineScalar:
    """Recover affine coefficients of ``fn(v2, vd)`` from three evaluations."""
    f0 = fn(0.0, 0.0)
    return AffineScalar(f0, fn(1.0, 0.0) - f0, fn(0.0, 1.0) - f0)
