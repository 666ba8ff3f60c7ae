"""Dirac operators ``f -> R^{-1} J f'`` driven by a hyperbolic path, and their resolvent kernels.

With ``X = y^{-1/2} [[1, -x], [0, y]]`` and profiles ``a = X u0``, ``c = X u1``,
the resolvent in ``X``-conjugated coordinates has kernel
``K(s, t) = (a(s) c(t)^T [s < t] + c(s) a(t)^T [s >= t]) / 2``.
Kernels live on a composite Gauss-Legendre grid whose nodes are stored through
the complement ``u = 1 - t`` so that nodes close to ``t = 1`` keep full precision.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import hgeom
from .config import TOL
from .hgeom import BoundaryPt, HPoint
from .paths import DrivingPath

J = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass(frozen=True)
class DiracSpec:
    path: DrivingPath
    eta0: BoundaryPt
    eta1: BoundaryPt
    u0: np.ndarray
    u1: np.ndarray

    def __post_init__(self):
        if abs(float(self.u0 @ J @ self.u1) - 1.0) > TOL.symmetry * 1e3:
            raise ValueError("boundary vectors must satisfy u0^T J u1 = 1")

    def rescaled(self, c: float) -> "DiracSpec":
        return replace(self, u0=self.u0 * c, u1=self.u1 / c)


def make_spec(path: DrivingPath, eta0: BoundaryPt, eta1: BoundaryPt) -> DiracSpec:
    u0 = np.array(eta0.vec, dtype=float)
    u1 = np.array(eta1.vec, dtype=float)
    pairing = float(u0 @ J @ u1)
    if abs(pairing) <= 1e-14 * np.linalg.norm(u0) * np.linalg.norm(u1):
        raise ValueError("coinciding boundary points")
    return DiracSpec(path, eta0, eta1, u0 / pairing, u1)


def x_matrix(x, y):
    """Stack of ``X`` matrices, shape ``(..., 2, 2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    r = 1.0 / np.sqrt(y)
    out = np.zeros(x.shape + (2, 2))
    out[..., 0, 0] = r
    out[..., 0, 1] = -x * r
    out[..., 1, 1] = y * r
    return out


def profiles_xy(x, y, u0, u1):
    """``a = X u0`` and ``c = X u1`` as ``(N, 2)`` arrays."""
    r = 1.0 / np.sqrt(y)
    a = np.stack([(u0[0] - x * u0[1]) * r, y * u0[1] * r], axis=-1)
    c = np.stack([(u1[0] - x * u1[1]) * r, y * u1[1] * r], axis=-1)
    return a, c


def kernel_eval(spec: DiracSpec, s: float, t: float) -> np.ndarray:
    xs, ys = spec.path(np.array([s, t]))
    a, c = profiles_xy(xs, ys, spec.u0, spec.u1)
    if s < t:
        return 0.5 * np.outer(a[0], c[1])
    return 0.5 * np.outer(c[0], a[1])


# quadrature grids

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss(m):
    if m not in _GL_CACHE:
        _GL_CACHE[m] = np.polynomial.legendre.leggauss(m)
    return _GL_CACHE[m]


@dataclass(frozen=True)
class QuadGrid:
    """Composite Gauss-Legendre grid; ``edges`` and ``u`` are complements ``1 - t``."""

    edges: np.ndarray
    u: np.ndarray
    w: np.ndarray
    panel: np.ndarray

    @property
    def t(self) -> np.ndarray:
        return 1.0 - self.u

    @property
    def size(self) -> int:
        return len(self.u)

    @property
    def t_num(self) -> float:
        return 1.0 - float(self.edges[-1])

    @property
    def u_num(self) -> float:
        return float(self.edges[-1])

    def same_as(self, other: "QuadGrid") -> bool:
        return self.size == other.size and np.array_equal(self.u, other.u) and np.array_equal(self.w, other.w)


def make_grid(pieces: int = 16, nodes_per_panel: int = 16, panels_per_piece: int = 1,
              u_num: float = 1e-8, extra_breaks=(), tail_nodes: int | None = None) -> QuadGrid:
    """Panels aligned to ``j / pieces``; the last piece is split dyadically down to ``1 - u_num``.

    ``extra_breaks`` (values of ``t``) are inserted as additional panel edges.
    """
    if pieces < 1 or nodes_per_panel < 1 or not 0 < u_num < 1.0 / pieces:
        raise ValueError("invalid grid parameters")
    m = pieces * panels_per_piece
    edges = [1.0 - j / m for j in range(m)]
    last = 1.0 / pieces
    if panels_per_piece > 1:
        edges = [e for e in edges if e > last * (1 + 1e-12)] + [last]
    u = last / 2.0
    while u > u_num * (1 + 1e-9):
        edges.append(u)
        u /= 2.0
    edges.append(u_num)
    for tb in extra_breaks:
        ub = 1.0 - tb
        if u_num < ub < 1.0 and not np.any(np.isclose(edges, ub, rtol=1e-12, atol=0)):
            edges.append(ub)
    edges = np.array(sorted(set(edges), reverse=True))
    tail_nodes = nodes_per_panel if tail_nodes is None else tail_nodes
    xs, ws = [], []
    ids = []
    for p, (hi, lo) in enumerate(zip(edges[:-1], edges[1:])):
        k = nodes_per_panel if hi > last * (1 + 1e-12) else tail_nodes
        g, gw = _gauss(k)
        # hi, lo are complements: t runs from 1-hi to 1-lo as u runs hi -> lo
        xs.append(hi + (lo - hi) * (g + 1.0) / 2.0)
        ws.append(gw * (hi - lo) / 2.0)
        ids.append(np.full(k, p))
    return QuadGrid(edges, np.concatenate(xs), np.concatenate(ws), np.concatenate(ids))


# kernels


@dataclass
class ResolventKernel:
    grid: QuadGrid
    a: np.ndarray
    c: np.ndarray
    T: float = 1.0
    spec: DiracSpec | None = field(default=None, repr=False)

    @property
    def N(self) -> int:
        return self.grid.size

    def weighted(self):
        sw = np.sqrt(self.grid.w)[:, None]
        return self.a * sw, self.c * sw

    def csv_rows(self):
        t = self.grid.t
        return [(float(t[i]), float(self.grid.w[i]), *map(float, self.a[i]), *map(float, self.c[i]))
                for i in range(self.N)]


def build_kernel(spec: DiracSpec, grid: QuadGrid) -> ResolventKernel:
    x, y = spec.path.evaluate(grid.u)
    a, c = profiles_xy(np.asarray(x, float), np.asarray(y, float), spec.u0, spec.u1)
    return ResolventKernel(grid, a, c, 1.0, spec)


def truncate(kernel: ResolventKernel, T: float) -> ResolventKernel:
    """Zero the kernel outside ``[0, T]^2``; ``T`` should be a panel edge for exactness."""
    if not 0 < T <= 1:
        raise ValueError("truncation point must lie in (0, 1]")
    keep = (kernel.grid.t <= T)[:, None]
    return ResolventKernel(kernel.grid, kernel.a * keep, kernel.c * keep, min(T, kernel.T), kernel.spec)


def nystrom_matrix(kernel: ResolventKernel) -> np.ndarray:
    """Symmetric ``2N x 2N`` matrix ``W^{1/2} K W^{1/2}``; diagonal blocks average both sides."""
    aw, cw = kernel.weighted()
    n = kernel.N
    p = 0.5 * np.einsum("ia,jb->iajb", aw, cw)
    q = p.transpose(2, 3, 0, 1)
    upper = np.triu(np.ones((n, n), dtype=bool), 1)[:, None, :, None]
    m = np.where(upper, p, q)
    idx = np.arange(n)
    m[idx, :, idx, :] = 0.5 * (p[idx, :, idx, :] + q[idx, :, idx, :])
    return m.reshape(2 * n, 2 * n)


def _check_grids(k1: ResolventKernel, k2: ResolventKernel):
    if not k1.grid.same_as(k2.grid):
        raise ValueError("grid mismatch: kernels must share one quadrature grid")


def hs_norm_sq(kernel: ResolventKernel) -> float:
    aw, cw = kernel.weighted()
    na = np.sum(aw * aw, axis=1)
    nc = np.sum(cw * cw, axis=1)
    before = np.concatenate([[0.0], np.cumsum(na)[:-1]])
    off = 0.5 * float(np.sum(before * nc))
    # diagonal block (a c^T + c a^T) / 4
    ac = np.sum(aw * cw, axis=1)
    diag = float(np.sum((2 * na * nc + 2 * ac * ac) / 16.0))
    return off + diag


def hs_norm(kernel: ResolventKernel) -> float:
    return math.sqrt(hs_norm_sq(kernel))


def hs_distance_sq(k1: ResolventKernel, k2: ResolventKernel) -> float:
    """Squared Hilbert-Schmidt distance, equal to the squared Frobenius norm of the matrix difference."""
    _check_grids(k1, k2)
    a1, c1 = k1.weighted()
    a2, c2 = k2.weighted()
    n11 = np.sum(a1 * a1, 1)
    n22 = np.sum(a2 * a2, 1)
    n12 = np.sum(a1 * a2, 1)
    m11 = np.sum(c1 * c1, 1)
    m22 = np.sum(c2 * c2, 1)
    m12 = np.sum(c1 * c2, 1)

    def before(v):
        return np.concatenate([[0.0], np.cumsum(v)[:-1]])

    off = 0.5 * float(np.sum(before(n11) * m11 + before(n22) * m22 - 2.0 * before(n12) * m12))
    d1 = np.einsum("ia,ib->iab", a1, c1)
    d2 = np.einsum("ia,ib->iab", a2, c2)
    dd = d1 - d2
    sym = 0.25 * (dd + dd.transpose(0, 2, 1))
    diag = float(np.sum(sym * sym))
    return max(off + diag, 0.0)


def hs_distance(k1: ResolventKernel, k2: ResolventKernel) -> float:
    return math.sqrt(hs_distance_sq(k1, k2))


def dump_binary(kernel: ResolventKernel, path) -> None:
    """Header ``(b'RKRN', N: int64, T: float64)``, then ``t``, ``w`` and the row-major matrix."""
    mat = nystrom_matrix(kernel)
    with open(path, "wb") as fh:
        fh.write(b"RKRN")
        fh.write(struct.pack("<qd", kernel.N, kernel.T))
        fh.write(np.ascontiguousarray(kernel.grid.t, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(kernel.grid.w, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(mat, dtype="<f8").tobytes())


def load_binary(path):
    with open(path, "rb") as fh:
        if fh.read(4) != b"RKRN":
            raise ValueError("not a kernel dump")
        n, T = struct.unpack("<qd", fh.read(16))
        t = np.frombuffer(fh.read(8 * n), dtype="<f8")
        w = np.frombuffer(fh.read(8 * n), dtype="<f8")
        mat = np.frombuffer(fh.read(8 * 4 * n * n), dtype="<f8").reshape(2 * n, 2 * n)
    return T, t, w, mat


# envelopes and certificates


@dataclass(frozen=True)
class EscapeFit:
    b: float
    eps: float
    alpha: float
    times: np.ndarray
    deviation: np.ndarray


def geodesic_deviation(s, x, y, z0: HPoint, eta1: BoundaryPt, alpha: float = 0.5):
    """``d(gamma(s), z(s))`` with ``z`` the speed-``alpha`` geodesic from ``z0`` toward ``eta1``."""
    gx, gy = hgeom.geodesic_xy(z0, eta1, alpha, s)
    return hgeom.dist_xy(x, y, gx, gy)


def escape_fit(s, x, y, z0: HPoint, eta1: BoundaryPt, alpha: float = 0.5,
               eps_grid=None, objective=None) -> EscapeFit:
    """Least envelope ``d(gamma(s), z(s)) <= b + eps s`` over a grid of ``eps``.

    ``objective(b, eps)`` selects the pair; by default the smallest ``b + eps * max(s)``.
    """
    s = np.asarray(s, dtype=float)
    dev = geodesic_deviation(s, x, y, z0, eta1, alpha)
    if eps_grid is None:
        eps_grid = np.linspace(0.0, alpha, 51)[1:]
    best = None
    for eps in eps_grid:
        b = float(max(np.max(dev - eps * s), 0.0))
        score = objective(b, eps) if objective is not None else b + eps * float(s.max(initial=0.0))
        if best is None or score < best[0]:
            best = (score, b, float(eps))
    return EscapeFit(best[1], best[2], alpha, s, dev)


def _profile_constants(u0, u1, z0: HPoint, b: float):
    d0 = hgeom.dist_h(z0, hgeom.I)
    ca = float(u0 @ u0) * math.exp(d0 + b)
    cc = float(u1 @ u1) * math.exp(d0 + b)
    return ca, cc


def hs2_certificate(b: float, eps: float, alpha: float, nu: float, T: float,
                    u0=(-1.0, 0.0), u1=(0.0, 1.0), z0: HPoint = hgeom.I, M: float | None = None) -> float:
    """Upper bound on ``||r tau - r_T tau||_HS^2`` from the linear escape envelope.

    With ``A = (alpha - eps) nu``, ``B = (alpha + eps) nu`` and ``|a|^2 <= Ca (1-t)^{-B}``,
    ``|c|^2 <= Cc (1-t)^A``, the bound is ``Ca Cc (I1 + I2) / 2`` where
    ``I1 = (1-T)^{2-2 eps nu} / (2 (1+A)(1-eps nu))`` and
    ``I2 = (1-T)^{A+1} (1 - (1-T)^{1-B}) / ((1+A)(1-B))``.
    With ``M`` (distance bound past ``T``) the tail profiles are frozen at their ``T`` values
    times ``e^M``, giving ``Ca Cc e^{2M} ((1-T)^{2-2 eps nu} / 2 + (1-T)^{A+1}(1-(1-T)^{1-B})/(1-B)) / 2``.
    """
    if not 0 < eps < 1.0 / nu:
        raise ValueError("need 0 < eps < 1/nu")
    if abs(alpha - (1.0 / nu - eps)) < 1e-12:
        raise ValueError("need alpha != 1/nu - eps")
    if not 0 < T < 1:
        raise ValueError("need 0 < T < 1")
    u0 = np.asarray(u0, float)
    u1 = np.asarray(u1, float)
    ca, cc = _profile_constants(u0, u1, z0, b)
    A = (alpha - eps) * nu
    B = (alpha + eps) * nu
    v = 1.0 - T
    tail = v ** (A + 1.0) * (-math.expm1((1.0 - B) * math.log(v))) / (1.0 - B)
    if M is None:
        i1 = v ** (2.0 - 2.0 * eps * nu) / (2.0 * (1.0 + A) * (1.0 - eps * nu))
        return 0.5 * ca * cc * (i1 + tail / (1.0 + A))
    return 0.5 * ca * cc * math.exp(2.0 * M) * (0.5 * v ** (2.0 - 2.0 * eps * nu) + tail)


def hs2_exponent(alpha, eps, nu):
    return 1.0 + min(nu * (alpha - eps), 1.0 - 2.0 * eps * nu)


def sinh_gap(path_a: DrivingPath, path_b: DrivingPath, u) -> np.ndarray:
    """``sinh(d/2)^2`` between two paths at complements ``u = 1 - t``."""
    xa, ya = path_a.evaluate(u)
    xb, yb = path_b.evaluate(u)
    return hgeom.sinh_half_sq_xy(np.asarray(xa), np.asarray(ya), np.asarray(xb), np.asarray(yb))


def fit_delta_m(u, gap):
    """Smallest ``(delta, M)`` with ``gap <= min(delta / u, M)`` on the given points."""
    u = np.asarray(u, float)
    gap = np.asarray(gap, float)
    if gap.size == 0:
        return 0.0, 0.0
    return float(np.max(gap * u)), float(np.max(gap))


@dataclass(frozen=True)
class HS3Certificate:
    bound: float
    closed_form: float
    delta: float
    M: float
    b: float
    eps: float


def hs3_certificate(grid: QuadGrid, T: float, delta: float, M: float, b: float, eps: float,
                    alpha: float, nu: float, u0=(-1.0, 0.0), u1=(0.0, 1.0),
                    z0: HPoint = hgeom.I) -> HS3Certificate:
    """Bound on ``||r_T tau - r_T tau_1||_HS^2`` given ``sinh(d/2)^2 <= min(delta/(1-t), M)``.

    ``bound`` is the double integral
    ``24 Ca Cc sum_{s <= t <= T} (1-s)^{-B} (1-t)^A (m(s) + m(t) + m(s) m(t))``
    on the same quadrature as the measured distance, with ``m = min(delta/(1-t), M)``.
    ``closed_form`` is the simplified ``48 C1^2 (M + 1) delta / ((alpha-eps) nu (1 - 2 eps nu))``,
    reported for comparison only.
    """
    u0 = np.asarray(u0, float)
    u1 = np.asarray(u1, float)
    ca, cc = _profile_constants(u0, u1, z0, b)
    A = (alpha - eps) * nu
    B = (alpha + eps) * nu
    keep = grid.t <= T
    uu = grid.u[keep]
    w = grid.w[keep]
    m = np.minimum(delta / uu, M)
    fa = w * uu ** (-B)
    fc = w * uu ** A
    # pairs (s <= t): s earlier in node order; nodes are sorted by increasing t
    cs_a = np.cumsum(fa)
    cs_am = np.cumsum(fa * m)
    bound = 24.0 * ca * cc * float(np.sum(fc * (cs_am + cs_a * m + cs_am * m)))
    c1sq = max(ca, cc) ** 2
    denom = (alpha - eps) * nu * (1.0 - 2.0 * eps * nu)
    closed = 48.0 * c1sq * (M + 1.0) * delta / denom if denom > 0 else math.inf
    return HS3Certificate(bound, closed, delta, M, b, eps)


@dataclass(frozen=True)
class IntegrabilityResult:
    I1: float
    I2: float
    finite: bool
    tail_exponent1: float
    tail_exponent2: float


def integrability_check(spec: DiracSpec, grid: QuadGrid, xi: HPoint = hgeom.I,
                        margin: float = 0.05, tail_u: float = 1e-3) -> IntegrabilityResult:
    """Quadrature of ``int e^{d_eta1(gamma(t), xi)} dt`` and
    ``int_{s<t} e^{d_eta0(gamma(s), xi) + d_eta1(gamma(t), xi)} ds dt``.

    The integrands are fitted by ``C u^p`` on nodes with ``u < tail_u``; the fitted power law
    extrapolates the part beyond the last node, and ``p <= -1 + margin`` flags divergence.
    """
    x, y = spec.path.evaluate(grid.u)
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    h0 = hgeom.horodist_xy(spec.eta0, x, y) - hgeom.horodist_xy(spec.eta0, xi.x, xi.y)
    h1 = hgeom.horodist_xy(spec.eta1, x, y) - hgeom.horodist_xy(spec.eta1, xi.x, xi.y)
    e1 = np.exp(h1)
    inner = np.cumsum(grid.w * np.exp(h0)) - 0.5 * grid.w * np.exp(h0)
    f2 = e1 * inner
    u = grid.u

    def tail(f):
        sel = u < tail_u
        if sel.sum() < 3 or np.any(f[sel] <= 0):
            return 0.0, 0.0
        p, logc = np.polyfit(np.log(u[sel]), np.log(f[sel]), 1)
        if p <= -1.0:
            return math.inf, float(p)
        return float(math.exp(logc) * grid.u_num ** (p + 1.0) / (p + 1.0)), float(p)

    t1, p1 = tail(e1)
    t2, p2 = tail(f2)
    i1 = float(np.sum(grid.w * e1)) + t1
    i2 = float(np.sum(grid.w * f2)) + t2
    finite = bool(p1 > -1.0 + margin and p2 > -1.0 + margin and math.isfinite(i1) and math.isfinite(i2))
    return IntegrabilityResult(i1, i2, finite, p1, p2)


def geodesic_path(z0: HPoint, eta1: BoundaryPt, alpha: float, nu: float) -> DrivingPath:
    """``t -> z(nu log(1/(1-t)))`` for the speed-``alpha`` geodesic; closed-form test path."""

    def evaluate(u):
        u = np.asarray(u, dtype=float)
        return hgeom.geodesic_xy(z0, eta1, alpha, -nu * np.log(u))

    return DrivingPath("continuous", evaluate, None, {"nu": nu, "alpha": alpha})
