"""Seeded hyperbolic Brownian motion, the Beta-step random walk, and time changes.

The Brownian path is stored as its driving noise ``(B1, B2)`` on a uniform base
grid.  The ordinate is exact, ``y = y0 exp(B2(s) - s/2)``; the abscissa is an
Euler sum of ``ybar * dB1`` with ``ybar`` the trapezoid of ``y`` over the base
step.  Off-grid queries insert Brownian-bridge samples of ``(B1, B2)``; inserted
samples are stored, so later queries and refinements never move a point that
was already observed.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from . import hgeom
from .config import TOL
from .hgeom import BoundaryPt, HPoint

_BLOCK = 4096
# two-sided 99% quantile of the standard Cauchy law
_CAUCHY_99 = math.tan(0.495 * math.pi)


class HorizonExceeded(RuntimeError):
    pass


class LimitNotResolved(RuntimeError):
    def __init__(self, msg, y_final):
        super().__init__(msg)
        self.y_final = y_final


_ROLES = {"grid": 0, "bridge": 1, "U": 2, "xi": 3, "walk": 4, "angle": 5}


class RngStreams:
    """Counter-based substreams keyed by ``(master seed, key..., role)``."""

    def __init__(self, master: int):
        self.master = int(master)

    def get(self, role: str, *key: int) -> np.random.Generator:
        words = [self.master, _ROLES[role], *[int(k) for k in key]]
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))

    def uniform(self, role: str, *key: int) -> float:
        return float(self.get(role, *key).random())


class HypBMPath:
    """Standard hyperbolic Brownian motion started at ``start``, refinable on demand."""

    def __init__(self, seed: int, h: float = 1e-3, horizon: float = 0.0,
                 start: HPoint = hgeom.I, cap: float = 5000.0):
        if h <= 0:
            raise ValueError("base step must be positive")
        self.seed = int(seed)
        self.h = float(h)
        self.start = start
        self.cap = float(cap)
        streams = RngStreams(seed)
        self._grid_rng = streams.get("grid")
        self._bridge_rng = streams.get("bridge")
        self._n = 1
        self.b1 = np.zeros(_BLOCK)
        self.b2 = np.zeros(_BLOCK)
        self.x = np.zeros(_BLOCK)
        self.y = np.zeros(_BLOCK)
        self.ybar = np.zeros(_BLOCK)
        self.x[0], self.y[0] = start.x, start.y
        # inserted bridge samples: sorted times and their noise values
        self._extra_t: list[float] = []
        self._extra_b: dict[float, tuple[float, float]] = {}
        self.extend_to(horizon)

    # grid management

    @property
    def horizon(self) -> float:
        return (self._n - 1) * self.h

    @property
    def times(self) -> np.ndarray:
        return np.arange(self._n) * self.h

    def grid_xy(self):
        return self.x[: self._n], self.y[: self._n]

    def _grow(self, size):
        cap = len(self.b1)
        if size <= cap:
            return
        new = max(size, 2 * cap)
        for name in ("b1", "b2", "x", "y", "ybar"):
            arr = getattr(self, name)
            out = np.zeros(new)
            out[:cap] = arr
            setattr(self, name, out)

    def extend_to(self, horizon: float) -> None:
        if horizon > self.cap:
            raise HorizonExceeded(f"requested horizon {horizon:.3g} beyond cap {self.cap:.3g}")
        need = int(math.ceil(horizon / self.h - 1e-9)) + 1
        while self._n < need:
            self._append_block()

    def _append_block(self):
        n0 = self._n
        self._grow(n0 + _BLOCK)
        sq = math.sqrt(self.h)
        inc = self._grid_rng.standard_normal((2, _BLOCK)) * sq
        sl = slice(n0, n0 + _BLOCK)
        self.b1[sl] = self.b1[n0 - 1] + np.cumsum(inc[0])
        self.b2[sl] = self.b2[n0 - 1] + np.cumsum(inc[1])
        t = np.arange(n0, n0 + _BLOCK) * self.h
        self.y[sl] = self.start.y * np.exp(self.b2[sl] - t / 2.0)
        yprev = np.concatenate([[self.y[n0 - 1]], self.y[sl][:-1]])
        ybar = 0.5 * (yprev + self.y[sl])
        self.ybar[n0 - 1: n0 - 1 + _BLOCK] = ybar
        self.x[sl] = self.x[n0 - 1] + np.cumsum(ybar * inc[0])
        self._n = n0 + _BLOCK

    # point evaluation

    def _grid_index(self, s: float):
        i = int(math.floor(s / self.h + 1e-12))
        on_grid = abs(s - i * self.h) <= 1e-13 * max(1.0, s)
        return i, on_grid

    def _noise_at(self, s: float) -> tuple[float, float]:
        if s < 0:
            raise ValueError("negative time")
        if s > self.horizon:
            self.extend_to(s + self.h)
        i, on_grid = self._grid_index(s)
        if on_grid:
            return float(self.b1[i]), float(self.b2[i])
        hit = self._extra_b.get(s)
        if hit is not None:
            return hit
        tl, tr = i * self.h, (i + 1) * self.h
        bl = (self.b1[i], self.b2[i])
        br = (self.b1[i + 1], self.b2[i + 1])
        k = bisect.bisect_left(self._extra_t, s)
        if k > 0 and self._extra_t[k - 1] > tl:
            tl = self._extra_t[k - 1]
            bl = self._extra_b[tl]
        if k < len(self._extra_t) and self._extra_t[k] < tr:
            tr = self._extra_t[k]
            br = self._extra_b[tr]
        lam = (s - tl) / (tr - tl)
        sd = math.sqrt((s - tl) * (tr - s) / (tr - tl))
        z1, z2 = self._bridge_rng.standard_normal(2)
        val = (bl[0] + lam * (br[0] - bl[0]) + sd * z1, bl[1] + lam * (br[1] - bl[1]) + sd * z2)
        self._insert(s, val)
        return val

    def _insert(self, s, val):
        bisect.insort(self._extra_t, s)
        self._extra_b[s] = (float(val[0]), float(val[1]))

    def _xy_from_noise(self, s, b1, b2):
        i, _ = self._grid_index(s)
        y = self.start.y * math.exp(b2 - s / 2.0)
        x = self.x[i] + self.ybar[i] * (b1 - self.b1[i])
        return float(x), float(y)

    def at(self, s: float) -> HPoint:
        b1, b2 = self._noise_at(float(s))
        return HPoint(*self._xy_from_noise(float(s), b1, b2))

    def xy_many(self, s) -> tuple[np.ndarray, np.ndarray]:
        s = np.asarray(s, dtype=float)
        xs = np.empty(s.shape)
        ys = np.empty(s.shape)
        if s.size and s.max() > self.horizon:
            self.extend_to(float(s.max()) + self.h)
        for idx, si in np.ndenumerate(s):
            b1, b2 = self._noise_at(float(si))
            xs[idx], ys[idx] = self._xy_from_noise(float(si), b1, b2)
        return xs, ys

    def pin(self, s: float, p: HPoint) -> None:
        """Record ``p`` as the path value at the (not yet observed) time ``s``."""
        i, on_grid = self._grid_index(s)
        if on_grid or s in self._extra_b:
            raise ValueError("time already observed")
        b2 = math.log(p.y / self.start.y) + s / 2.0
        b1 = self.b1[i] + (p.x - self.x[i]) / self.ybar[i]
        self._insert(s, (b1, b2))

    def known_after(self, s0: float, s1: float):
        """Observed times in ``(s0, s1]`` (grid and inserted), sorted."""
        i0 = int(math.floor(s0 / self.h)) + 1
        i1 = int(math.floor(s1 / self.h + 1e-12))
        grid = np.arange(i0, i1 + 1) * self.h
        lo = bisect.bisect_right(self._extra_t, s0)
        hi = bisect.bisect_right(self._extra_t, s1)
        extra = np.array(self._extra_t[lo:hi])
        return grid, extra

    # hitting times

    def first_hit(self, p: HPoint, rho: float, s0: float, eps: float = TOL.hit_time):
        """First observed crossing of ``d(p, B(s)) >= rho`` after ``s0``, refined to ``eps``.

        The returned endpoint lies at distance exactly ``rho`` from ``p``; it is
        pinned into the path at the returned time.
        """
        d0 = hgeom.dist_h(p, self.at(s0))
        if d0 >= rho:
            return s0, self.at(s0)
        left = s0
        chunk = 2048
        while True:
            s1 = left + chunk * self.h
            if s1 > self.cap:
                raise HorizonExceeded("hitting horizon exceeded")
            if s1 > self.horizon:
                self.extend_to(s1 + self.h)
            grid, extra = self.known_after(left, s1)
            times = np.union1d(grid, extra) if extra.size else grid
            gi = np.rint(times / self.h).astype(int)
            ongrid = np.abs(times - gi * self.h) <= 1e-13 * np.maximum(1.0, times)
            xs = np.where(ongrid, self.x[np.minimum(gi, self._n - 1)], 0.0)
            ys = np.where(ongrid, self.y[np.minimum(gi, self._n - 1)], 1.0)
            for k in np.flatnonzero(~ongrid):
                q = self.at(float(times[k]))
                xs[k], ys[k] = q.x, q.y
            d = hgeom.dist_xy(p.x, p.y, xs, ys)
            above = np.flatnonzero(d >= rho * (1.0 - 1e-12))
            if above.size:
                j = above[0]
                lo = float(times[j - 1]) if j > 0 else left
                hi = float(times[j])
                break
            left = float(times[-1]) if times.size else s1
        while hi - lo > eps:
            mid = 0.5 * (lo + hi)
            if hgeom.dist_h(p, self.at(mid)) >= rho:
                hi = mid
            else:
                lo = mid
        a, b = self.at(lo), self.at(hi)
        da, db = hgeom.dist_h(p, a), hgeom.dist_h(p, b)
        if db <= rho * (1.0 + 1e-12):
            return hi, b
        frac = optimize.brentq(lambda f: hgeom.dist_h(p, hgeom.geodesic_interpolate(a, b, f)) - rho,
                               0.0, 1.0, xtol=1e-15)
        end = hgeom.geodesic_interpolate(a, b, frac)
        sigma = lo + frac * (hi - lo)
        if sigma <= lo or sigma >= hi:
            sigma = 0.5 * (lo + hi) if da < rho else hi
        if sigma in (lo, hi):
            return hi, b
        self.pin(sigma, end)
        return sigma, end

    def fork(self, s: float, seed: int) -> "HypBMPath":
        """Copy of the path observed up to time ``s`` with an independent continuation from ``seed``."""
        keep = min(self._n, int(math.ceil(s / self.h - 1e-9)) + 1)
        other = HypBMPath(seed, self.h, 0.0, self.start, self.cap)
        other._grow(keep)
        for name in ("b1", "b2", "x", "y", "ybar"):
            getattr(other, name)[:keep] = getattr(self, name)[:keep]
        other._n = keep
        last = (keep - 1) * self.h
        for t in self._extra_t:
            if t < last:
                other._insert(t, self._extra_b[t])
        return other

    def to_csv_rows(self):
        x, y = self.grid_xy()
        return [(float(t), float(a), float(b)) for t, a, b in zip(self.times, x, y)]


def simulate_hbm(seed: int, horizon: float, h: float = 1e-3, start: HPoint = hgeom.I) -> HypBMPath:
    return HypBMPath(seed, h=h, horizon=horizon, start=start)


def boundary_limit(path: HypBMPath, tol: float = TOL.boundary_limit,
                   cap: float | None = None) -> tuple[BoundaryPt, float]:
    """Limit point on the real axis and a 99% error radius ``|Cauchy|_{0.99} * y(T)``.

    After time ``T`` the remaining displacement of ``x`` is ``y(T)`` times a
    standard Cauchy variable, by scale invariance of the motion.
    """
    cap = path.cap if cap is None else cap
    while True:
        x, y = path.grid_xy()
        below = np.flatnonzero(y < tol)
        if below.size:
            k = below[0]
            return BoundaryPt((float(x[k]), 1.0)), float(_CAUCHY_99 * y[k])
        if path.horizon + _BLOCK * path.h > cap:
            raise LimitNotResolved("limit not resolved", float(y[-1]))
        path._append_block()


def boundary_limit_below(path: HypBMPath, level: float) -> tuple[BoundaryPt, float, float]:
    """Like :func:`boundary_limit` but also returns the resolution time."""
    eta, radius = boundary_limit(path, level)
    x, y = path.grid_xy()
    k = int(np.flatnonzero(y < level)[0])
    return eta, radius, k * path.h


@dataclass
class RandomWalkPath:
    n: int
    beta: float
    points: list[HPoint]
    eta: BoundaryPt
    zetas: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def gammas(self) -> np.ndarray:
        k = np.arange(self.n - 1)
        return self.beta * (self.n - k - 1) / 2.0

    def step_lengths(self) -> np.ndarray:
        return np.array([hgeom.dist_h(a, b) for a, b in zip(self.points[:-1], self.points[1:])])


def sample_walk(seed: int, n: int, beta: float) -> RandomWalkPath:
    """The Beta-step hyperbolic random walk ``b_0 = i, ..., b_{n-1}`` plus boundary point ``b_n``."""
    if n < 1 or beta <= 0:
        raise ValueError("need n >= 1 and beta > 0")
    rng = RngStreams(seed).get("walk", n)
    pts = [hgeom.I]
    zetas = np.empty(max(n - 1, 0))
    for k in range(n - 1):
        gamma = beta * (n - k - 1) / 2.0
        u = rng.random()
        zeta = -math.expm1(math.log1p(-u) / gamma)
        zetas[k] = zeta
        theta = 2.0 * math.pi * rng.random()
        w = math.sqrt(zeta) * complex(math.cos(theta), math.sin(theta))
        c = pts[-1]
        x, y = hgeom.from_disk_xy(w, c.x, c.y)
        pts.append(HPoint(float(x), float(y)))
    eta = hgeom.boundary_from_disk(2.0 * math.pi * rng.random(), pts[-1])
    return RandomWalkPath(n, beta, pts, eta, zetas)


@dataclass
class DrivingPath:
    """A path ``[0, 1) -> H`` evaluated through the complement ``u = 1 - t``.

    ``evaluate(u)`` returns arrays ``(x, y)``.  Piecewise-constant paths list
    their piece boundaries in ``breaks`` (as values of ``t``).
    """

    kind: str
    evaluate: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]
    breaks: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.evaluate(1.0 - t)


def time_change(path: HypBMPath, beta: float) -> DrivingPath:
    """``t -> B(-(4/beta) log(1 - t))`` on ``[0, 1)``."""
    nu = 4.0 / beta

    def evaluate(u):
        u = np.asarray(u, dtype=float)
        return path.xy_many(-nu * np.log(u))

    return DrivingPath("continuous", evaluate, None, {"beta": beta, "nu": nu, "seed": path.seed})


def original_time(t, beta):
    return -(4.0 / beta) * np.log1p(-np.asarray(t, dtype=float))


def changed_time(s, beta):
    return -np.expm1(-np.asarray(s, dtype=float) * beta / 4.0)


def walk_driving_path(points: list[HPoint], meta: dict | None = None) -> DrivingPath:
    """Piecewise-constant path equal to ``points[j]`` on ``[j/n, (j+1)/n)``."""
    n = len(points)
    xs = np.array([p.x for p in points])
    ys = np.array([p.y for p in points])

    def evaluate(u):
        u = np.asarray(u, dtype=float)
        j = np.clip(np.floor(n * (1.0 - u)).astype(int), 0, n - 1)
        return xs[j], ys[j]

    return DrivingPath("piecewise", evaluate, np.arange(n + 1) / n, dict(meta or {}, n=n))


def constant_path(p: HPoint = hgeom.I) -> DrivingPath:
    def evaluate(u):
        u = np.asarray(u, dtype=float)
        return np.full(u.shape, p.x), np.full(u.shape, p.y)

    return DrivingPath("piecewise", evaluate, np.array([0.0, 1.0]), {"n": 1})


def modulus_report(path: HypBMPath, hs, s_grid) -> list[tuple[float, float]]:
    """Rows ``(h, max_s d(B(s), B(s+h)) / sqrt(h log(2 + (s+1)/h)))``."""
    s_grid = np.asarray(s_grid, dtype=float)
    rows = []
    xa, ya = path.xy_many(s_grid)
    for h in hs:
        if h == 0:
            rows.append((0.0, 0.0))
            continue
        xb, yb = path.xy_many(s_grid + h)
        d = hgeom.dist_xy(xa, ya, xb, yb)
        env = np.sqrt(h * np.log(2.0 + (s_grid + 1.0) / h))
        rows.append((float(h), float(np.max(d / env))))
    return rows
