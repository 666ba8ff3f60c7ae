"""Spectra of Dirac operators by two independent routes.

* Nystrom: eigenvalues ``mu`` of the weighted resolvent matrix, ``lambda = 1 / mu``.
* Transfer: for piecewise-constant paths the eigen-equation ``f' = -lambda J R f`` is
  solved exactly piece by piece; on each piece ``(J R)^2 = -I/4`` so the propagator is
  ``cos(theta) I + sin(theta)/theta M`` with ``theta = |lambda| dt / 2``.  The rotation
  angle of ``f`` is a strictly increasing function of ``lambda`` and eigenvalues are
  the solutions of ``phase(lambda) = c0 + j pi``.

Indexing follows ``lambda_0 < 0 < lambda_1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize
from scipy.sparse import linalg as sparse_linalg

from .config import TOL
from .dirac import J, DiracSpec, ResolventKernel, nystrom_matrix

TWO_PI = 2.0 * math.pi


class SpectralError(RuntimeError):
    pass


@dataclass
class SpectrumResult:
    k: np.ndarray
    lam: np.ndarray
    method: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        order = np.argsort(self.k)
        self.k = np.asarray(self.k)[order]
        self.lam = np.asarray(self.lam, dtype=float)[order]
        if np.any(np.diff(self.lam) <= 0):
            raise SpectralError("eigenvalues are not strictly increasing in k")
        if np.any(np.abs(self.lam) < TOL.zero_eigenvalue):
            raise SpectralError("zero eigenvalue")
        pos = self.lam[self.k >= 1]
        neg = self.lam[self.k <= 0]
        if (pos.size and pos[0] <= 0) or (neg.size and neg[-1] >= 0):
            raise SpectralError("sign convention lambda_0 < 0 < lambda_1 violated")

    @property
    def mu(self) -> np.ndarray:
        return 1.0 / self.lam

    def window(self, K: int) -> "SpectrumResult":
        sel = (self.k >= -K) & (self.k <= K + 1)
        return SpectrumResult(self.k[sel], self.lam[sel], self.method, dict(self.meta))

    def as_dict(self) -> dict[int, float]:
        return {int(k): float(v) for k, v in zip(self.k, self.lam)}

    def csv_rows(self, n=None, beta=None, seed=None):
        return [(int(k), float(v), float(1.0 / v), self.method, n, beta, seed) for k, v in zip(self.k, self.lam)]


def index_from_mu(mu: np.ndarray, K: int) -> tuple[np.ndarray, np.ndarray]:
    """Index eigenvalues ``lambda = 1/mu``: largest positive ``mu`` is ``k = 1``, most negative is ``k = 0``."""
    if np.any(np.abs(mu) == 0.0):
        raise SpectralError("zero eigenvalue of resolvent")
    pos = np.sort(mu[mu > 0])[::-1][: K + 1]
    neg = np.sort(mu[mu < 0])[: K + 1]
    ks = np.concatenate([np.arange(1, pos.size + 1), -np.arange(neg.size)])
    return ks, 1.0 / np.concatenate([pos, neg])


def resolvent_eigs(mat: np.ndarray, K: int, dense_below: int = 800) -> np.ndarray:
    """The ``K + 1`` largest and ``K + 1`` smallest eigenvalues of a symmetric matrix.

    Small matrices use the dense LAPACK solver; larger ones use Lanczos iteration
    (ARPACK) on both ends of the spectrum with a deterministic start vector.
    """
    asym = float(np.max(np.abs(mat - mat.T)))
    if asym > TOL.symmetry * max(1.0, float(np.max(np.abs(mat)))):
        raise SpectralError(f"matrix not symmetric (max asymmetry {asym:.3g})")
    m = mat.shape[0]
    kk = min(K + 1, m // 2)
    if m > dense_below:
        try:
            return sparse_linalg.eigsh(mat, k=2 * kk, which="BE", v0=np.ones(m), tol=0)[0]
        except sparse_linalg.ArpackError:
            pass
    try:
        ev = linalg.eigvalsh(mat)
    except linalg.LinAlgError as exc:
        raise SpectralError(f"eigensolver did not converge: {exc}") from exc
    return np.concatenate([ev[:kk], ev[m - kk:]])


def eigs_nystrom(kernel: ResolventKernel, K: int = 20) -> SpectrumResult:
    if 2 * kernel.N < 4 * K:
        raise ValueError("grid too small for the requested window")
    mu = resolvent_eigs(nystrom_matrix(kernel), K)
    small = np.abs(mu) < TOL.zero_eigenvalue * float(np.max(np.abs(mu)))
    ks, lam = index_from_mu(mu[~small], K)
    return SpectrumResult(ks, lam, "nystrom", {"N": kernel.N, "T_num": kernel.grid.t_num})


# transfer method


@dataclass
class PiecewiseSystem:
    """Piece lengths and weights ``R_j`` of a piecewise-constant path."""

    dt: np.ndarray
    R: np.ndarray
    u0: np.ndarray
    u1: np.ndarray

    @classmethod
    def from_spec(cls, spec: DiracSpec) -> "PiecewiseSystem":
        br = spec.path.breaks
        if br is None or spec.path.kind != "piecewise":
            raise ValueError("transfer method needs a piecewise-constant path")
        dt = np.diff(br)
        mids = 0.5 * (br[:-1] + br[1:])
        x, y = spec.path.evaluate(1.0 - mids)
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        R = np.empty((len(dt), 2, 2))
        # R = X^T X / 2 with X = y^{-1/2} [[1, -x], [0, y]]
        R[:, 0, 0] = 0.5 / y
        R[:, 0, 1] = R[:, 1, 0] = -0.5 * x / y
        R[:, 1, 1] = 0.5 * (x * x + y * y) / y
        return cls(dt, R, np.asarray(spec.u0, float), np.asarray(spec.u1, float))


def _wrap(d):
    return np.mod(d, TWO_PI)


def phase(system: PiecewiseSystem, lam) -> np.ndarray:
    """Clockwise rotation angle of ``f`` over ``[0, 1)`` with ``f(0) = u0``, vectorised in ``lam``."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    f = np.tile(system.u0, (lam.size, 1)).astype(float)
    f /= np.linalg.norm(f, axis=1, keepdims=True)
    total = np.zeros(lam.size)
    sgn = np.sign(lam)
    for dt, R in zip(system.dt, system.R):
        JR = J @ R
        theta = np.abs(lam) * dt / 2.0
        # M = -lam dt J R ; exp(M) = cos(theta) I + sin(theta)/theta M
        sinc = np.where(theta > 0, np.sin(theta) / np.where(theta > 0, theta, 1.0), 1.0)
        Mf = -(lam * dt)[:, None] * (f @ JR.T)
        g = np.cos(theta)[:, None] * f + sinc[:, None] * Mf
        psi0 = np.arctan2(f[:, 1], f[:, 0])
        psi1 = np.arctan2(g[:, 1], g[:, 0])
        rem = np.where(sgn >= 0, _wrap(psi0 - psi1), _wrap(psi1 - psi0))
        frac = np.mod(theta, TWO_PI)
        rem = np.where((frac < math.pi / 2) & (rem > 1.5 * math.pi), rem - TWO_PI, rem)
        rem = np.where((frac > 1.5 * math.pi) & (rem < math.pi / 2), rem + TWO_PI, rem)
        total += sgn * (TWO_PI * np.floor(theta / TWO_PI) + rem)
        f = g / np.linalg.norm(g, axis=1, keepdims=True)
    return total


def phase_offset(system: PiecewiseSystem) -> float:
    a0 = math.atan2(system.u0[1], system.u0[0])
    a1 = math.atan2(system.u1[1], system.u1[0])
    return math.fmod(math.fmod(a0 - a1, math.pi) + math.pi, math.pi)


def boundary_form(system: PiecewiseSystem, lam: float) -> float:
    """``f(1)^T J u1`` for the solution started at ``u0``."""
    f = system.u0.astype(float)
    for dt, R in zip(system.dt, system.R):
        M = -lam * dt * (J @ R)
        th = abs(lam) * dt / 2.0
        f = (math.cos(th) * np.eye(2) + (math.sin(th) / th if th > 0 else 1.0) * M) @ f
    return float(f @ J @ system.u1)


def eigs_transfer(spec: DiracSpec, K: int = 20, tol: float = TOL.transfer_root) -> SpectrumResult:
    system = PiecewiseSystem.from_spec(spec)
    c0 = phase_offset(system)
    if c0 < 1e-12 or math.pi - c0 < 1e-12:
        raise SpectralError("zero eigenvalue")
    targets_pos = c0 + np.arange(K + 1) * math.pi
    targets_neg = c0 - math.pi - np.arange(K + 1) * math.pi
    lam_of = {}
    for sign, targets, ks in ((1.0, targets_pos, np.arange(1, K + 2)),
                              (-1.0, targets_neg, -np.arange(K + 1))):
        hi = 1.0
        while sign * phase(system, sign * hi)[0] < abs(targets[-1]) + math.pi:
            hi *= 2.0
            if hi > 1e9:
                raise SpectralError("phase accounting failure")
        grid = sign * np.linspace(0.0, hi, 64 * (K + 2) + 1)
        ph = phase(system, grid)
        if np.any(sign * np.diff(ph) < -1e-9):
            raise SpectralError("phase accounting failure")
        for tgt, k in zip(targets, ks):
            j = int(np.argmax(sign * (ph - tgt) >= 0))
            a, b = grid[j - 1], grid[j]
            root = optimize.brentq(lambda l: phase(system, l)[0] - tgt, min(a, b), max(a, b),
                                   xtol=tol * max(1.0, abs(b)), rtol=4 * np.finfo(float).eps)
            lam_of[int(k)] = root
    ks = np.array(sorted(lam_of))
    return SpectrumResult(ks, np.array([lam_of[k] for k in ks]), "transfer", {"c0": c0})


def detect_period(res: SpectrumResult, n: int) -> float:
    """Median of ``lambda_{k+n} - lambda_k`` over the window."""
    d = res.as_dict()
    gaps = [d[k + n] - d[k] for k in d if k + n in d]
    if not gaps:
        raise ValueError("window too small to detect the period")
    return float(np.median(gaps))


@dataclass
class Comparison:
    k: np.ndarray
    dlam: np.ndarray
    dmu: np.ndarray
    sum_sq_mu: float
    rel: np.ndarray


def match_and_compare(s1: SpectrumResult, s2: SpectrumResult) -> Comparison:
    d1, d2 = s1.as_dict(), s2.as_dict()
    ks = np.array(sorted(set(d1) & set(d2)))
    l1 = np.array([d1[k] for k in ks])
    l2 = np.array([d2[k] for k in ks])
    dmu = np.abs(1.0 / l1 - 1.0 / l2)
    return Comparison(ks, np.abs(l1 - l2), dmu, float(np.sum(dmu**2)), np.abs(l1 - l2) / np.abs(l2))
