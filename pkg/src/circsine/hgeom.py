"""Hyperbolic plane geometry in the upper half-plane and Poincare disk charts.

Points of the half-plane are stored as ``(x, y)`` with ``y > 0``; boundary
points use a projective vector ``(u1, u2)`` whose value is ``u1 / u2`` and
``inf`` exactly when ``u2 == 0``. The array helpers (``*_xy``) broadcast over
numpy arrays and are what the path and kernel code use in bulk.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import TOL


@dataclass(frozen=True)
class HPoint:
    x: float
    y: float

    def __post_init__(self):
        if not (self.y > 0 and math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"not a point of the half-plane: ({self.x}, {self.y})")

    @property
    def z(self) -> complex:
        return complex(self.x, self.y)

    @classmethod
    def from_complex(cls, z: complex) -> "HPoint":
        return cls(z.real, z.imag)


I = HPoint(0.0, 1.0)


@dataclass(frozen=True)
class DPoint:
    u: float
    v: float

    def __post_init__(self):
        if not self.u * self.u + self.v * self.v < 1.0:
            raise ValueError(f"not a point of the open disk: ({self.u}, {self.v})")

    @property
    def w(self) -> complex:
        return complex(self.u, self.v)

    @property
    def radius(self) -> float:
        return math.hypot(self.u, self.v)


@dataclass(frozen=True)
class BoundaryPt:
    vec: tuple[float, float]

    def __post_init__(self):
        u1, u2 = self.vec
        if abs(u1) <= TOL.boundary_vec and abs(u2) <= TOL.boundary_vec:
            raise ValueError("invalid boundary point")

    @classmethod
    def at(cls, q: float) -> "BoundaryPt":
        if math.isinf(q):
            return INF
        return cls((float(q), 1.0))

    @property
    def is_infinite(self) -> bool:
        return self.vec[1] == 0.0

    @property
    def value(self) -> float:
        u1, u2 = self.vec
        return math.inf if u2 == 0.0 else u1 / u2


INF = BoundaryPt((1.0, 0.0))


def dist_xy(x1, y1, x2, y2):
    """Vectorised hyperbolic distance via ``2 asinh(|p - q| / (2 sqrt(y1 y2)))``."""
    half = np.sqrt(((x1 - x2) ** 2 + (y1 - y2) ** 2) / (4.0 * y1 * y2))
    return 2.0 * np.arcsinh(half)


def sinh_half_sq_xy(x1, y1, x2, y2):
    """``sinh(d/2)**2`` computed without forming the distance."""
    return ((x1 - x2) ** 2 + (y1 - y2) ** 2) / (4.0 * y1 * y2)


def dist_h(p: HPoint, q: HPoint) -> float:
    return float(dist_xy(p.x, p.y, q.x, q.y))


def horodist_xy(eta: BoundaryPt, x, y):
    """Signed horocyclic distance ``d_eta(x + iy, i)`` (vectorised)."""
    if eta.is_infinite:
        return np.log(1.0 / y)
    q = eta.value
    return np.log(((x - q) ** 2 + y**2) / ((1.0 + q * q) * y))


def horodist(eta: BoundaryPt, a: HPoint, b: HPoint = I) -> float:
    """``d_eta(a, b)``; with the default ``b = i`` this is the closed formula."""
    return float(horodist_xy(eta, a.x, a.y) - horodist_xy(eta, b.x, b.y))


def to_disk_xy(x, y, cx, cy):
    """Cayley map sending ``cx + i cy`` to the disk origin; returns complex."""
    z = x + 1j * y
    c = cx + 1j * cy
    return (z - c) / (z - np.conj(c))


def from_disk_xy(w, cx, cy):
    c = cx + 1j * cy
    z = (c - np.conj(c) * w) / (1.0 - w)
    return z.real, z.imag


def to_disk(p: HPoint, center: HPoint = I) -> DPoint:
    w = complex(to_disk_xy(p.x, p.y, center.x, center.y))
    return DPoint(w.real, w.imag)


def from_disk(d: DPoint, center: HPoint = I) -> HPoint:
    x, y = from_disk_xy(d.w, center.x, center.y)
    return HPoint(float(x), float(y))


def boundary_from_disk(angle: float, center: HPoint) -> BoundaryPt:
    """Boundary point seen at ``angle`` on the unit circle of the disk chart at ``center``."""
    w = complex(math.cos(angle), math.sin(angle))
    c = center.z
    num = c - c.conjugate() * w
    den = 1.0 - w
    # projective form of num / den; num / den is real up to rounding
    if den == 0:
        return INF
    val = num / den
    return BoundaryPt((val.real, 1.0))


@dataclass(frozen=True)
class Isometry:
    """Mobius map ``z -> (a z + b) / (c z + d)`` with ``ad - bc = 1``."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if abs(self.a * self.d - self.b * self.c - 1.0) > TOL.det * max(1.0, abs(self.a * self.d)):
            raise ValueError("isometry must have determinant 1")

    @classmethod
    def normalized(cls, a, b, c, d) -> "Isometry":
        det = a * d - b * c
        if det <= 0:
            raise ValueError("orientation-reversing or singular map")
        s = 1.0 / math.sqrt(det)
        a, b, c, d = a * s, b * s, c * s, d * s
        # PSL(2,R) sign convention: c > 0, or c == 0 and d > 0
        if c < 0 or (c == 0 and d < 0):
            a, b, c, d = -a, -b, -c, -d
        return cls(a, b, c, d)

    def apply_xy(self, x, y):
        z = x + 1j * y
        w = (self.a * z + self.b) / (self.c * z + self.d)
        return w.real, w.imag

    def __call__(self, p: HPoint) -> HPoint:
        x, y = self.apply_xy(p.x, p.y)
        return HPoint(float(x), float(y))

    def boundary(self, eta: BoundaryPt) -> BoundaryPt:
        u1, u2 = eta.vec
        v1 = self.a * u1 + self.b * u2
        v2 = self.c * u1 + self.d * u2
        if abs(v2) <= 1e-15 * abs(v1):
            v2 = 0.0
        return BoundaryPt((v1, v2))

    def inverse(self) -> "Isometry":
        return Isometry.normalized(self.d, -self.b, -self.c, self.a)

    def compose(self, other: "Isometry") -> "Isometry":
        """``self o other``."""
        a = self.a * other.a + self.b * other.c
        b = self.a * other.b + self.b * other.d
        c = self.c * other.a + self.d * other.c
        d = self.c * other.b + self.d * other.d
        return Isometry.normalized(a, b, c, d)


IDENTITY = Isometry(1.0, 0.0, 0.0, 1.0)


def canonical_isometry(z0: HPoint, eta1: BoundaryPt) -> Isometry:
    """The unique orientation-preserving isometry with ``Q z0 = i`` and ``Q eta1 = inf``."""
    if eta1.is_infinite:
        first = IDENTITY
    else:
        q = eta1.value
        first = Isometry.normalized(0.0, -1.0, 1.0, -q)
    w = first(z0)
    sy = math.sqrt(w.y)
    second = Isometry.normalized(1.0 / sy, -w.x / sy, 0.0, sy)
    return second.compose(first)


def geodesic_point(z0: HPoint, eta1: BoundaryPt, speed: float, t: float) -> HPoint:
    """Point at time ``t`` moving with ``speed`` from ``z0`` toward ``eta1``."""
    if speed <= 0 or t < 0:
        raise ValueError("need speed > 0 and t >= 0")
    q_inv = canonical_isometry(z0, eta1).inverse()
    return q_inv(HPoint(0.0, math.exp(speed * t)))


def geodesic_xy(z0: HPoint, eta1: BoundaryPt, speed: float, t):
    """Vectorised version of :func:`geodesic_point` over an array of times."""
    q_inv = canonical_isometry(z0, eta1).inverse()
    t = np.asarray(t, dtype=float)
    return q_inv.apply_xy(np.zeros_like(t), np.exp(speed * t))


def geodesic_interpolate(p: HPoint, q: HPoint, frac: float) -> HPoint:
    """Point on the geodesic segment from ``p`` to ``q`` at fraction ``frac`` of its length."""
    w = complex(to_disk_xy(q.x, q.y, p.x, p.y))
    r = abs(w)
    if r == 0.0:
        return p
    d = math.log((1 + r) / (1 - r))
    rr = math.tanh(frac * d / 2.0)
    x, y = from_disk_xy(w / r * rr, p.x, p.y)
    return HPoint(float(x), float(y))
