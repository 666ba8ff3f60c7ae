"""Radial laws of the random-walk step and of hyperbolic Brownian motion.

``StepLawY`` is the hyperbolic length ``log((1+sqrt(xi))/(1-sqrt(xi)))`` of a
step whose squared disk radius ``xi`` is Beta(1, gamma).  ``HeatRadialLaw`` is
the law of ``d(B(0), B(t))`` for standard hyperbolic Brownian motion.  Both
the density and the tail of the latter are one-dimensional integrals with a
square-root endpoint singularity; the substitution ``u = sqrt(cosh s - cosh r)``
turns them into smooth integrals over a finite range.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .config import TOL

# exponent at which exp(-(s^2 - r^2) / 2t) drops below TOL.quad_trunc
_TRUNC = -math.log(TOL.quad_trunc)


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class StepLawY:
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")

    def cdf(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("negative radius")
        return -np.expm1(-2.0 * self.gamma * np.log(np.cosh(r / 2.0)))

    def sf(self, r):
        r = np.asarray(r, dtype=float)
        return np.exp(-2.0 * self.gamma * np.log(np.cosh(r / 2.0)))

    def pdf(self, r):
        r = np.asarray(r, dtype=float)
        h = r / 2.0
        return self.gamma * np.sinh(h) * np.exp(-(2.0 * self.gamma + 1.0) * np.log(np.cosh(h)))

    def ppf(self, p):
        p = np.asarray(p, dtype=float)
        # sech^{2 gamma}(r/2) = 1 - p
        return 2.0 * np.arccosh(np.exp(-np.log1p(-p) / (2.0 * self.gamma)))

    def sample_xi(self, rng: np.random.Generator, size=None):
        """Beta(1, gamma) by inversion: ``1 - U**(1/gamma)``."""
        return beta_one_inverse(rng.random(size), self.gamma)

    def sample(self, rng: np.random.Generator, size=None):
        return xi_to_length(self.sample_xi(rng, size))


def xi_to_length(xi):
    """Hyperbolic length of a step with squared disk radius ``xi``."""
    return 2.0 * np.arctanh(np.sqrt(xi))


def beta_one_inverse(u, gamma):
    """Beta(1, gamma) quantile ``1 - (1 - u)**(1/gamma)``."""
    return -np.expm1(np.log1p(-np.asarray(u, dtype=float)) / gamma)


def time_for_gamma(gamma: float) -> float:
    """Heat-kernel time ``4 / (2 gamma + 1)`` matched to the step law with shape ``gamma``."""
    return 4.0 / (2.0 * gamma + 1.0)


def gamma_for_time(t: float) -> float:
    """Beta shape matching the heat kernel at time ``t``: ``2/t - 1/2``."""
    return 2.0 / t - 0.5


def _s_of_u(u, r):
    # s with cosh s - cosh r = u^2, written to avoid arccosh cancellation near 1
    return 2.0 * np.arcsinh(np.sqrt(np.sinh(r / 2.0) ** 2 + 0.5 * u * u))


def _s_over_sinh(s):
    s = np.asarray(s, dtype=float)
    out = np.ones_like(s)
    big = s > 1e-8
    out[big] = s[big] / np.sinh(s[big])
    return out


def _u_max(r, t):
    s_max = np.sqrt(r * r + 2.0 * t * _TRUNC)
    return np.sqrt(2.0 * np.sinh((s_max + r) / 2.0) * np.sinh((s_max - r) / 2.0))


@dataclass(frozen=True)
class HeatRadialLaw:
    t: float

    def __post_init__(self):
        if not 0 < self.t <= 1:
            raise ValueError("time must lie in (0, 1]")

    def _prefactor(self, r):
        return math.exp(-self.t / 8.0) / (math.sqrt(math.pi) * self.t**1.5)

    def _quad(self, f, upper):
        val, err = integrate.quad(f, 0.0, upper, epsabs=0.0, epsrel=TOL.quad_rel, limit=400)
        if not math.isfinite(val) or err > 1e-8 * max(abs(val), 1e-300) + 1e-300:
            raise QuadratureError(f"quadrature failed (value {val}, error estimate {err})")
        return val

    def pdf(self, r: float) -> float:
        """Density of the distance by adaptive quadrature."""
        if r < 0:
            raise ValueError("negative radius")
        if r == 0:
            return 0.0
        t = self.t

        def f(u):
            s = _s_of_u(u, r)
            return 2.0 * math.exp(-(s * s - r * r) / (2.0 * t)) * float(_s_over_sinh(np.array(s)))

        val = self._quad(f, float(_u_max(r, t)))
        return self._prefactor(r) * math.exp(-r * r / (2.0 * t)) * math.sinh(r) * val

    def sf(self, r: float) -> float:
        """Tail ``P(zeta > r)`` by adaptive quadrature."""
        if r < 0:
            raise ValueError("negative radius")
        t = self.t

        def f(u):
            s = _s_of_u(u, r)
            return 2.0 * u * u * math.exp(-(s * s - r * r) / (2.0 * t)) * float(_s_over_sinh(np.array(s)))

        val = self._quad(f, float(_u_max(r, t)))
        return 2.0 * self._prefactor(r) * math.exp(-r * r / (2.0 * t)) * val

    def cdf(self, r: float) -> float:
        return 1.0 - self.sf(r)

    # fixed-order vectorised variants used to build tables

    def _gl(self, r, weight_fn, panels: int, order: int):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        x, w = np.polynomial.legendre.leggauss(order)
        edges = np.linspace(0.0, 1.0, panels + 1)
        # nodes on [0, 1], refined toward 0 where the substitution is steepest
        left, right = edges[:-1] ** 2, edges[1:] ** 2
        nodes = ((right - left)[:, None] * (x + 1.0)[None, :] / 2.0 + left[:, None]).ravel()
        weights = ((right - left)[:, None] * w[None, :] / 2.0).ravel()
        umax = _u_max(r, self.t)[:, None]
        u = umax * nodes[None, :]
        s = _s_of_u(u, r[:, None])
        g = np.exp(-(s * s - r[:, None] ** 2) / (2.0 * self.t)) * _s_over_sinh(s)
        return (weight_fn(u) * g * weights[None, :]).sum(axis=1) * umax[:, 0]

    def pdf_table(self, r, panels: int = 16, order: int = 24):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        val = self._gl(r, lambda u: 2.0 * np.ones_like(u), panels, order)
        return self._prefactor(r) * np.exp(-r * r / (2.0 * self.t)) * np.sinh(r) * val

    def sf_table(self, r, panels: int = 16, order: int = 24):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        val = self._gl(r, lambda u: 2.0 * u * u, panels, order)
        return 2.0 * self._prefactor(r) * np.exp(-r * r / (2.0 * self.t)) * val


# closed-form envelopes of the heat-kernel density and tail

def p_minus(r, t):
    r = np.asarray(r, dtype=float)
    return (1 + t / 12) ** -0.5 / t * np.exp(-r * r / (2 * t) - r * r / 12 - t / 8) * np.sinh(r)


def p_plus(r, t):
    r = np.asarray(r, dtype=float)
    return np.exp(-r * r / (2 * t) - t / 8) * np.sinh(r) / t


def tail_upper_bound(r, t):
    """Gaussian-type bound on ``P(zeta > r)``, valid for ``0 < t < 12``."""
    r = np.asarray(r, dtype=float)
    return (1 - t / 12) ** -1.5 * np.exp(-r * r / (2 * t) + r * r / 12 - t / 8)


def cosh_gap_bounds(r: float, s: float) -> tuple[float, float]:
    """Bounds on ``sqrt(cosh s - cosh r)`` for ``0 <= r <= s``."""
    if r < 0 or r > s:
        raise ValueError("need 0 <= r <= s")
    base = math.sqrt(max(s * s - r * r, 0.0) / 2.0)
    return base, base * math.exp((r * r + s * s) / 24.0)


def log_cosh_bounds(x: float) -> tuple[float, float]:
    """``(x^2/2 - x^4/12, x^2/2)``; the lower value is only a bound for ``|x| <= 1``."""
    return x * x / 2 - x**4 / 12, x * x / 2


def tv_distance(t: float) -> dict[str, float]:
    """L1 and half-L1 distance between the heat-kernel law at ``t`` and ``StepLawY(2/t - 1/2)``."""
    if not 0 < t <= 1:
        raise ValueError("time must lie in (0, 1]")
    law = HeatRadialLaw(t)
    step = StepLawY(gamma_for_time(t))
    upper = float(step.ppf(1 - 1e-15))
    upper = max(upper, math.sqrt(2 * t * _TRUNC) + 1.0)
    # the densities cross once near the bulk; give quad the scale as a breakpoint
    pts = [math.sqrt(t) * c for c in (0.5, 1.0, 2.0, 4.0) if math.sqrt(t) * c < upper]
    val, err = integrate.quad(lambda r: abs(float(step.pdf(r)) - law.pdf(r)), 0.0, upper,
                              points=pts, limit=400, epsabs=1e-12, epsrel=1e-9)
    tail = 2.0 * float(step.sf(upper))
    return {"l1": val, "half_l1": val / 2.0, "error": err + tail}


# monotone coupling of stochastically ordered laws

@dataclass(frozen=True)
class MonotoneCoupling:
    """Coupling ``g(x, u) >= x`` of two stochastically ordered tabulated laws.

    Cells are the intervals of ``grid``; within a cell both laws are uniform
    (piecewise-linear CDFs).  ``stay[j]`` is the probability that ``g`` keeps
    ``x`` in cell ``j``; otherwise ``x`` is pushed through the residual
    quantile map ``F2res^{-1}(F1res(x))``.
    """

    grid: np.ndarray
    eps: float
    stay: np.ndarray
    res1_cdf: np.ndarray
    res2_cdf: np.ndarray

    def __call__(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        scalar = x.ndim == 0 and u.ndim == 0
        x, u = np.broadcast_arrays(np.atleast_1d(x), np.atleast_1d(u))
        out = x.astype(float).copy()
        grid = self.grid
        j = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, len(grid) - 2)
        inside = x < grid[-1]
        move = inside & (u > self.stay[j])
        if np.any(move) and self.eps > 0:
            jm = j[move]
            frac = (x[move] - grid[jm]) / (grid[jm + 1] - grid[jm])
            p = self.res1_cdf[jm] + frac * (self.res1_cdf[jm + 1] - self.res1_cdf[jm])
            y = _inverse_piecewise_linear(self.res2_cdf, grid, p)
            out[move] = np.maximum(y, x[move])
        return float(out[0]) if scalar else out

    def sample_pair(self, rng, x):
        u = rng.random(np.shape(x))
        return self(x, u)


def _inverse_piecewise_linear(cdf, grid, p):
    """Generalised inverse ``sup{y : F(y) < p}`` of a piecewise-linear CDF."""
    k = np.clip(np.searchsorted(cdf, p, side="left"), 1, len(cdf) - 1)
    lo, hi = cdf[k - 1], cdf[k]
    span = hi - lo
    frac = np.where(span > 0, (p - lo) / np.where(span > 0, span, 1.0), 1.0)
    return grid[k - 1] + np.clip(frac, 0.0, 1.0) * (grid[k] - grid[k - 1])


def build_monotone_coupling(grid, F1, F2, tol: float = 1e-8) -> MonotoneCoupling:
    """Monotone coupling of CDF tables ``F1 <= ...`` with ``F2 <= F1`` on ``grid``."""
    grid = np.asarray(grid, dtype=float)
    F1 = np.asarray(F1, dtype=float)
    F2 = np.asarray(F2, dtype=float)
    if np.any(F2 - F1 > tol):
        worst = float(np.max(F2 - F1))
        raise ValueError(f"not stochastically ordered (max violation {worst:.3g})")
    m1 = np.diff(F1)
    m2 = np.diff(F2)
    common = np.minimum(m1, m2)
    eps = float(0.5 * np.abs(m1 - m2).sum())
    with np.errstate(invalid="ignore", divide="ignore"):
        stay = np.where(m1 > 0, common / np.where(m1 > 0, m1, 1.0), 1.0)
    e1 = np.clip(m1 - m2, 0.0, None)
    e2 = np.clip(m2 - m1, 0.0, None)
    norm1, norm2 = e1.sum(), e2.sum()
    res1 = np.concatenate([[0.0], np.cumsum(e1) / norm1]) if norm1 > 0 else np.linspace(0, 1, len(grid))
    res2 = np.concatenate([[0.0], np.cumsum(e2) / norm2]) if norm2 > 0 else np.linspace(0, 1, len(grid))
    return MonotoneCoupling(grid, eps, np.clip(stay, 0.0, 1.0), res1, res2)


def radial_grid(r_max: float, size: int = 4096, kappa: float = 8.0) -> np.ndarray:
    """Grid on ``[0, r_max]`` that is geometric near 0 and nearly uniform further out."""
    i = np.arange(size) / (size - 1)
    return r_max * np.expm1(kappa * i) / math.expm1(kappa)


@functools.lru_cache(maxsize=4096)
def heat_to_step_coupling(gamma: float, size: int = 4096) -> MonotoneCoupling:
    """Coupling of the heat-kernel distance at ``t = 4/(2 gamma + 1)`` onto ``StepLawY(gamma)``."""
    t = 4.0 / (2.0 * gamma + 1.0)
    step = StepLawY(gamma)
    r_max = max(float(step.ppf(1 - 1e-15)), math.sqrt(2 * t * _TRUNC) + 1.0)
    grid = radial_grid(r_max, size)
    F1 = 1.0 - HeatRadialLaw(t).sf_table(grid, panels=8, order=16)
    F1[0] = 0.0
    F2 = np.asarray(step.cdf(grid))
    # close both laws at the right end of the table
    F1[-1] = F2[-1] = 1.0
    return build_monotone_coupling(grid, np.maximum.accumulate(F1), F2)


def table_csv_rows(law: HeatRadialLaw, grid) -> list[tuple[float, float, float]]:
    """Rows ``(r, pdf, cdf)`` for debugging dumps."""
    pdf = law.pdf_table(grid)
    cdf = 1.0 - law.sf_table(grid)
    return [(float(r), float(p), float(c)) for r, p, c in zip(grid, pdf, cdf)]
