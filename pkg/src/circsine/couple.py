"""Reading the Beta-step random walk off a single hyperbolic Brownian path.

Steps with ``gamma = beta k / 2`` large use the fixed-time coupling: look at the
motion after ``t = 4 / (2 gamma + 1)``, push its distance ``r`` through the monotone
coupling ``rho = g(r, U)`` and, if ``rho > r``, wait until the distance from the step's
start first reaches ``rho``.  Small-``k`` steps simply wait for the distance to reach
an independently drawn step length ``Y_k``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dist, hgeom
from .hgeom import BoundaryPt, HPoint
from .paths import (DrivingPath, HypBMPath, RngStreams, boundary_limit, time_change,
                    walk_driving_path)


@dataclass(frozen=True)
class SingleStepResult:
    sigma: float
    endpoint: HPoint
    hit_exact: bool
    r: float
    rho: float

    @property
    def disk_radius_sq(self) -> float:
        return math.tanh(self.rho / 2.0) ** 2


def single_step(path: HypBMPath, start: float, gamma: float, u: float) -> SingleStepResult:
    """One coupled step of law ``Beta(1, gamma)`` (squared disk radius) started at time ``start``."""
    if gamma < 1.5:
        raise ValueError("single-step coupling needs gamma >= 3/2")
    t = dist.time_for_gamma(gamma)
    p = path.at(start)
    q = path.at(start + t)
    r = hgeom.dist_h(p, q)
    rho = float(dist.heat_to_step_coupling(gamma)(r, u))
    if rho <= r:
        return SingleStepResult(t, q, True, r, r)
    s_hit, end = path.first_hit(p, rho, start + t)
    return SingleStepResult(s_hit - start, end, False, r, rho)


def k_cut(n: int, beta: float, c: float = 1.0, power: float = 2.0) -> int:
    """Threshold above which steps use the fixed-time coupling."""
    ln = math.log(n) if n > 1 else 0.0
    return max(int(math.ceil(c * ln**power)), int(math.ceil(3.0 / beta)))


@dataclass
class StoppingTimeArray:
    n: int
    beta: float
    taus: np.ndarray
    walk: list[HPoint]
    regime: list[str]
    eta1: BoundaryPt | None
    eta_radius: float
    steps: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def tau(self, k: int) -> float:
        """``tau_{n,k}``; ``k = 0`` gives ``inf``."""
        return math.inf if k == 0 else float(self.taus[k])

    def point(self, k: int) -> HPoint:
        """``B(tau_{n,k})`` for ``1 <= k <= n``."""
        return self.walk[k]

    def walk_points(self) -> list[HPoint]:
        """Walk in forward order ``b_0, ..., b_{n-1}`` with ``b_j = B(tau_{n, n-j})``."""
        return [self.walk[self.n - j] for j in range(self.n)]


def build_tau_array(bm: HypBMPath, streams: RngStreams, n: int, beta: float,
                    kcut: int | None = None, eta_tol: float | None = None,
                    resolve_limit: bool = True) -> StoppingTimeArray:
    if n < 1:
        raise ValueError("n must be >= 1")
    kc = k_cut(n, beta) if kcut is None else kcut
    taus = np.zeros(n + 1)
    walk: list[HPoint | None] = [None] * (n + 1)
    regime = [""] * (n + 1)
    steps = np.zeros(n + 1)
    walk[n] = bm.at(0.0)
    regime[n] = "start"
    for k in range(n - 1, 0, -1):
        gamma = beta * k / 2.0
        start = float(taus[k + 1])
        p = walk[k + 1]
        try:
            if k >= kc:
                res = single_step(bm, start, gamma, streams.uniform("U", k))
                taus[k] = start + res.sigma
                walk[k] = res.endpoint
                regime[k] = "fixed" if res.hit_exact else "fixed-hit"
            else:
                xi = dist.beta_one_inverse(streams.uniform("xi", k), gamma)
                y_k = float(dist.xi_to_length(xi))
                s_hit, end = bm.first_hit(p, y_k, start)
                taus[k] = s_hit
                walk[k] = end
                regime[k] = "tail"
        except RuntimeError as exc:
            raise RuntimeError(f"stopping-time recursion failed at k={k}: {exc}") from exc
        if not taus[k] > taus[k + 1]:
            taus[k] = np.nextafter(taus[k + 1], math.inf)
        steps[k] = hgeom.dist_h(p, walk[k])
    if not resolve_limit:
        return StoppingTimeArray(n, beta, taus, walk, regime, None, math.nan, steps)
    tol = eta_tol if eta_tol is not None else 1e-6
    eta1, radius = boundary_limit(bm, tol)
    return StoppingTimeArray(n, beta, taus, walk, regime, eta1, radius, steps)


@dataclass
class CoupledPair:
    continuous: DrivingPath
    discrete: DrivingPath
    eta0: BoundaryPt
    eta1: BoundaryPt
    taus: StoppingTimeArray
    bm: HypBMPath


def eta_tolerance(beta: float, u_num: float) -> float:
    """Boundary-limit tolerance well below the typical ordinate at ``t = 1 - u_num``."""
    s = (4.0 / beta) * math.log(1.0 / u_num)
    return min(1e-6, 1e-3 * math.exp(-s / 2.0))


def coupled_pair(bm: HypBMPath, streams: RngStreams, n: int, beta: float, kcut: int | None = None,
                 eta_tol: float | None = None) -> CoupledPair:
    arr = build_tau_array(bm, streams, n, beta, kcut, eta_tol)
    discrete = walk_driving_path(arr.walk_points(), {"beta": beta, "seed": bm.seed})
    return CoupledPair(time_change(bm, beta), discrete, hgeom.INF, arr.eta1, arr, bm)


def sup_envelope(n: int, t):
    return np.log(n) ** 2.875 / np.sqrt((1.0 - np.asarray(t, float)) * n)


def deviation_report(pair: CoupledPair, t_grid) -> list[dict]:
    """Per-``t`` rows of ``d(B(t), B_n(t))``, its envelope and their ratio."""
    t = np.asarray(t_grid, dtype=float)
    u = 1.0 - t
    xa, ya = pair.continuous.evaluate(u)
    xb, yb = pair.discrete.evaluate(u)
    d = hgeom.dist_xy(np.asarray(xa), np.asarray(ya), np.asarray(xb), np.asarray(yb))
    n = pair.taus.n
    env = sup_envelope(n, t)
    return [{"n": n, "t": float(ti), "value": float(di), "envelope": float(ei), "ratio": float(di / ei)}
            for ti, di, ei in zip(t, d, env)]


def clock_report(arr: StoppingTimeArray) -> list[dict]:
    """Rows comparing ``tau_{n,k}`` with ``(4/beta) log(n/k)``."""
    rows = []
    for k in range(1, arr.n + 1):
        clock = (4.0 / arr.beta) * math.log(arr.n / k)
        rows.append({"n": arr.n, "k": k, "value": float(arr.taus[k] - clock),
                     "envelope": math.log(arr.n) ** 4.5 / k})
    return rows
