"""Orientation-preserving isometries of the Poincaré disk.

A disk automorphism is stored as an SU(1,1) matrix

    [[a, b], [conj(b), conj(a)]],   |a|^2 - |b|^2 = 1,

acting by z -> (a z + b) / (conj(b) z + conj(a)).  Compositions and inverses
stay in SU(1,1), the complex derivative is 1 / (conj(b) z + conj(a))^2, and
the real 2x2 Jacobian at z is the rotation-scaling matrix of that complex
number.  All functions accept numpy arrays of complex points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DiskMobius:
    a: complex
    b: complex

    def __post_init__(self):
        n = abs(self.a) ** 2 - abs(self.b) ** 2
        if not np.isfinite(n) or n <= 0:
            raise ValueError("not a disk automorphism: |a|^2 - |b|^2 <= 0")
        # skip renormalization of already-normalized matrices so that
        # serialized maps round-trip bit-exactly
        if abs(n - 1.0) > 1e-12:
            s = 1.0 / np.sqrt(n)
            object.__setattr__(self, "a", complex(self.a) * s)
            object.__setattr__(self, "b", complex(self.b) * s)
        else:
            object.__setattr__(self, "a", complex(self.a))
            object.__setattr__(self, "b", complex(self.b))

    @staticmethod
    def identity() -> "DiskMobius":
        return DiskMobius(1.0 + 0.0j, 0.0j)

    @staticmethod
    def rotation(theta: float) -> "DiskMobius":
        return DiskMobius(np.exp(0.5j * theta), 0.0j)

    @staticmethod
    def point_to_origin(c: complex) -> "DiskMobius":
        """Map z -> (z - c) / (1 - conj(c) z)."""
        return DiskMobius(1.0 + 0.0j, -c)

    def apply(self, z):
        z = np.asarray(z, dtype=complex)
        return (self.a * z + self.b) / (np.conj(self.b) * z + np.conj(self.a))

    def deriv(self, z):
        """Complex derivative of the map at z."""
        z = np.asarray(z, dtype=complex)
        return 1.0 / (np.conj(self.b) * z + np.conj(self.a)) ** 2

    def jacobian(self, z) -> np.ndarray:
        """Real 2x2 Jacobian at z (shape (..., 2, 2))."""
        w = self.deriv(z)
        w = np.asarray(w, dtype=complex)
        J = np.empty(w.shape + (2, 2))
        J[..., 0, 0] = w.real
        J[..., 0, 1] = -w.imag
        J[..., 1, 0] = w.imag
        J[..., 1, 1] = w.real
        return J

    def inverse(self) -> "DiskMobius":
        return DiskMobius(np.conj(self.a), -self.b)

    def compose(self, other: "DiskMobius") -> "DiskMobius":
        """Return self ∘ other."""
        a = self.a * other.a + self.b * np.conj(other.b)
        b = self.a * other.b + self.b * np.conj(other.a)
        return DiskMobius(a, b)

    @staticmethod
    def from_segment(v1, v2, w1, w2, tol: float = 1e-9) -> "DiskMobius":
        """Unique orientation-preserving isometry with v1 -> w1 and v2 -> w2.

        The geodesic segments v1-v2 and w1-w2 must have equal hyperbolic
        length (checked to `tol`).
        """
        tv = DiskMobius.point_to_origin(v1)
        tw = DiskMobius.point_to_origin(w1)
        pv = tv.apply(v2)
        pw = tw.apply(w2)
        if abs(abs(pv) - abs(pw)) > tol:
            raise ValueError("segments have different lengths; no isometry exists")
        rot = DiskMobius.rotation(np.angle(pw) - np.angle(pv))
        return tw.inverse().compose(rot.compose(tv))


def hyperbolic_distance(u, v):
    """Distance in the Poincaré disk (curvature -1 normalization)."""
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    t = np.abs((u - v) / (1.0 - np.conj(u) * v))
    return 2.0 * np.arctanh(t)


def geodesic_midpoint(u, v):
    """Midpoint of the geodesic segment from u to v."""
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    w = (v - u) / (1.0 - np.conj(u) * v)
    r = np.abs(w)
    # point at half the distance along the radial geodesic from the origin
    rm = np.tanh(0.5 * np.arctanh(r))
    m0 = np.where(r > 0, rm * w / np.where(r > 0, r, 1.0), 0.0)
    return (u + m0) / (1.0 + np.conj(u) * m0)


def corner_angle(a, b, c):
    """Interior angle at a of the geodesic triangle (a, b, c)."""
    a = np.asarray(a, dtype=complex)
    tb = (b - a) / (1.0 - np.conj(a) * b)
    tc = (c - a) / (1.0 - np.conj(a) * c)
    ang = np.abs(np.angle(tb * np.conj(tc)))
    return ang


def triangle_area(a, b, c):
    """Hyperbolic area of the geodesic triangle via the angle defect."""
    s = corner_angle(a, b, c) + corner_angle(b, c, a) + corner_angle(c, a, b)
    return np.pi - s
