"""Experiment drivers behind the command-line subcommands.

Every driver takes an :class:`ExperimentConfig` and returns a :class:`Report` holding
CSV tables, SVG figures and named checks.  Checks tagged with a criterion number
belong to the acceptance suite; the rest are diagnostics.
"""
from __future__ import annotations

import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Callable

import numpy as np
from scipy import stats

from . import couple, dirac, dist, hgeom, io, paths, spectrum
from .config import ExperimentConfig
from .hgeom import HPoint


class UsageError(ValueError):
    """Configuration that cannot describe a meaningful run."""


@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""
    criterion: int | None = None
    hard: bool = True

    def line(self) -> str:
        tag = f"[{self.criterion}] " if self.criterion is not None else ""
        return f"{'PASS' if self.passed else 'FAIL'} {tag}{self.name}: {self.detail}"


@dataclass
class Table:
    columns: list[str]
    rows: list[dict]


@dataclass
class Report:
    command: str
    tables: dict[str, Table] = field(default_factory=dict)
    figures: dict[str, io.Svg] = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)
    replicas: list[dict] = field(default_factory=list)
    numerical_failure: bool = False

    def check(self, name, passed, detail="", criterion=None, hard=True) -> Check:
        c = Check(name, bool(passed), detail, criterion, hard)
        self.checks.append(c)
        return c

    def table(self, name, columns, rows) -> None:
        self.tables[name] = Table(list(columns), list(rows))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.hard)

    def exit_code(self) -> int:
        if self.numerical_failure:
            return 2
        return 0 if self.passed else 3


# replica plumbing


def replica_seed(master: int, *key: int) -> int:
    return int(np.random.SeedSequence([int(master), *map(int, key)]).generate_state(1)[0])


def _guarded(fn: Callable, item):
    try:
        return {"status": "ok", "value": fn(item)}
    except (RuntimeError, ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return {"status": "failed", "error": f"{type(exc).__name__}: {exc}",
                "trace": traceback.format_exc(limit=3)}


def run_replicas(fn: Callable, items, workers: int = 1) -> list[dict]:
    """Ordered map with per-item failure capture; ``workers > 1`` uses a process pool."""
    items = list(items)
    job = partial(_guarded, fn)
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(job, items))
    return [job(it) for it in items]


def _collect(report: Report, label: str, items, results, max_fail_frac: float = 0.1) -> list:
    ok = []
    for item, res in zip(items, results):
        rec = {"group": label, "replica": item if isinstance(item, int) else repr(item), "status": res["status"]}
        if res["status"] != "ok":
            rec["error"] = res["error"]
        else:
            ok.append(res["value"])
        report.replicas.append(rec)
    n_fail = len(results) - len(ok)
    if results and n_fail > max_fail_frac * len(results):
        report.numerical_failure = True
        report.check(f"{label}: replica failures", False, f"{n_fail}/{len(results)} replicas failed")
    return ok


def _ks_detail(res) -> str:
    return f"KS D={res.statistic:.4f} p={res.pvalue:.4g}"


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise UsageError(msg)


def quad_grid(cfg: ExperimentConfig, multiple_of: int = 1, extra_breaks=()) -> dirac.QuadGrid:
    """Grid with about ``nodes_target`` nodes whose panels align with ``j / multiple_of``."""
    per = max(1, round(cfg.nodes_target / (multiple_of * cfg.nodes_per_panel)))
    return dirac.make_grid(pieces=multiple_of * per, nodes_per_panel=cfg.nodes_per_panel,
                           u_num=cfg.u_num, extra_breaks=extra_breaks, tail_nodes=cfg.tail_nodes)


# heatkernel: comparison of the heat radial law with the Beta step law


def cmd_heatkernel(cfg: ExperimentConfig) -> Report:
    _require(len(cfg.t_grid) > 0, "t_grid is empty")
    _require(cfg.r_points >= 2, "r_points must be at least 2")
    rep = Report("heatkernel")
    rows = []
    slack = 1e-8
    for t in sorted(cfg.t_grid):
        row = {"t": t, "gamma": dist.gamma_for_time(t)}
        try:
            row.update(_heat_row(t, cfg.r_points, slack))
            row["status"] = "ok"
        except (dist.QuadratureError, ValueError, ArithmeticError) as exc:
            row["status"] = f"failed: {exc}"
            rep.numerical_failure = True
        rows.append(row)
    cols = ["t", "gamma", "r_max", "dom_violation", "l1", "half_l1", "l1_bound",
            "sandwich_low_violation", "sandwich_high_violation", "tail_bound_violation",
            "dom_pass", "l1_pass", "sandwich_pass", "status"]
    rep.table("heatkernel", cols, rows)
    ok = [r for r in rows if r["status"] == "ok"]
    rep.check("domination 1-F_zeta <= 1-F_Y", all(r["dom_pass"] for r in ok) and len(ok) == len(rows),
              f"max violation {max((r['dom_violation'] for r in ok), default=math.nan):.3g} (slack {slack:g})", 1)
    rep.check("L1 distance <= 3t", all(r["l1_pass"] for r in ok) and len(ok) == len(rows),
              "; ".join(f"t={r['t']:g}: {r['l1']:.4f}" for r in ok), 1)
    l1 = [r["l1"] for r in ok]
    rep.check("L1 column monotone in t", all(np.diff(l1) > 0), "", hard=False)

    crows = _cosh_rows(slack)
    rep.table("sandwich_cosh", ["kind", "x", "s", "value", "lower", "upper", "violation"], crows)
    worst = max(r["violation"] for r in crows)
    rep.check("density sandwich p- <= p_zeta <= p+", all(r["sandwich_pass"] for r in ok) and len(ok) == len(rows),
              f"max violation {max((max(r['sandwich_low_violation'], r['sandwich_high_violation']) for r in ok), default=math.nan):.3g}", 2)
    rep.check("tail bound on 1-F_zeta", all(r["tail_bound_violation"] <= slack for r in ok) and len(ok) == len(rows),
              f"max violation {max((r['tail_bound_violation'] for r in ok), default=math.nan):.3g}", 2)
    rep.check("cosh-gap and log-cosh bounds", worst <= slack, f"max violation {worst:.3g}", 2)
    return rep


def _heat_row(t: float, points: int, slack: float) -> dict:
    law = dist.HeatRadialLaw(t)
    step = dist.StepLawY(dist.gamma_for_time(t))
    r_max = float(max(step.ppf(1.0 - 1e-12), 8.0 * math.sqrt(t) + t))
    r = np.linspace(0.0, r_max, points)
    sf_z = law.sf_table(r)
    sf_y = step.sf(r)
    dom = float(np.max(sf_z - sf_y))
    tv = dist.tv_distance(t)
    rp = r[1:]
    pz = law.pdf_table(rp)
    low = float(np.max(dist.p_minus(rp, t) - pz))
    high = float(np.max(pz - dist.p_plus(rp, t)))
    tail = float(np.max(sf_z[1:] - dist.tail_upper_bound(rp, t)))
    return {"r_max": r_max, "dom_violation": dom, "l1": tv["l1"], "half_l1": tv["half_l1"], "l1_bound": 3 * t,
            "sandwich_low_violation": low, "sandwich_high_violation": high, "tail_bound_violation": tail,
            "dom_pass": dom <= slack, "l1_pass": tv["l1"] <= 3 * t,
            "sandwich_pass": max(low, high) <= slack}


def _cosh_rows(slack: float) -> list[dict]:
    rows = []
    grid = np.linspace(0.0, 6.0, 61)
    for i, a in enumerate(grid):
        for b in grid[i:]:
            val = math.sqrt(2.0 * math.sinh((b + a) / 2.0) * math.sinh((b - a) / 2.0))
            lo, hi = dist.cosh_gap_bounds(a, b)
            rows.append({"kind": "cosh_gap", "x": a, "s": b, "value": val, "lower": lo, "upper": hi,
                         "violation": max(lo - val, val - hi) / max(1.0, val)})
    for x in np.linspace(0.0, 1.0, 201):
        val = float(np.logaddexp(x, -x) - math.log(2.0))
        lo, hi = dist.log_cosh_bounds(x)
        rows.append({"kind": "log_cosh", "x": x, "s": None, "value": val, "lower": lo, "upper": hi,
                     "violation": max(lo - val, val - hi)})
    for x in np.linspace(1.0, 30.0, 59):
        val = float(np.logaddexp(x, -x) - math.log(2.0))
        _, hi = dist.log_cosh_bounds(x)
        rows.append({"kind": "log_cosh_upper", "x": x, "s": None, "value": val, "lower": None, "upper": hi,
                     "violation": val - hi})
    return rows


# couple-diag: coupling diagnostics


def _single_step_replica(args):
    master, gamma, i = args
    bm = paths.HypBMPath(replica_seed(master, 3, i))
    u = paths.RngStreams(master).uniform("U", 0, i)
    res = couple.single_step(bm, 0.0, gamma, u)
    w = hgeom.to_disk(res.endpoint, hgeom.I).w
    return {"i": i, "sigma": res.sigma, "radius_sq": abs(w) ** 2, "angle": math.atan2(w.imag, w.real),
            "hit_exact": res.hit_exact, "r": res.r, "rho": res.rho}


def _walk_replica(args):
    master, n, beta, kcut, i = args
    seed = replica_seed(master, 4, i)
    arr = couple.build_tau_array(paths.HypBMPath(seed), paths.RngStreams(seed), n, beta, kcut,
                                 resolve_limit=False)
    return {"steps": arr.steps[1:n].copy(), "dtau": np.diff(arr.taus[1:][::-1]).copy(), "regime": arr.regime[1:n]}


def _deviation_replica(args):
    master, n_list, beta, t_grid, kcut_c, kcut_p, u_num, i = args
    seed = replica_seed(master, 5, i)
    bm = paths.HypBMPath(seed)
    streams = paths.RngStreams(seed)
    tol = couple.eta_tolerance(beta, u_num)
    out = []
    for n in n_list:
        kc = couple.k_cut(n, beta, kcut_c, kcut_p)
        pair = couple.coupled_pair(bm, streams, n, beta, kc, tol)
        dev = couple.deviation_report(pair, t_grid)
        tn = 1.0 - math.log(n) ** 6 / n if n > 1 else 0.0
        inside = [r for r in dev if r["t"] <= tn] or dev[:1]
        out.append({"n": n, "rows": dev, "clock": couple.clock_report(pair.taus),
                    "sup_dev": max(r["value"] for r in dev), "sup_ratio": max(r["ratio"] for r in inside)})
    return out


def cmd_couple_diag(cfg: ExperimentConfig) -> Report:
    _require(cfg.step_replicas > 0 and cfg.walk_replicas > 0, "replica counts must be positive")
    _require(cfg.gamma >= 1.5, "gamma must be at least 3/2")
    rep = Report("couple-diag")
    zs = cfg.confidence_sigma

    # single step
    items = [(cfg.seed, cfg.gamma, i) for i in range(cfg.step_replicas)]
    ok = _collect(rep, "single_step", range(cfg.step_replicas),
                  run_replicas(_single_step_replica, items, cfg.workers))
    rep.table("single_step", ["i", "sigma", "radius_sq", "angle", "hit_exact", "r", "rho"], ok)
    t_fix = dist.time_for_gamma(cfg.gamma)
    if ok:
        rad = np.array([r["radius_sq"] for r in ok])
        ks = stats.kstest(rad, stats.beta(1.0, cfg.gamma).cdf)
        rep.check("|B(sigma)|^2 ~ Beta(1, gamma)", ks.pvalue > 0.01, _ks_detail(ks), 3)
        exact = np.array([r["hit_exact"] for r in ok], float)
        p_hat = exact.mean()
        se = math.sqrt(max(p_hat * (1 - p_hat), 1.0 / len(ok)) / len(ok))
        bound = 1.0 - 3.0 / cfg.gamma
        rep.check("P(sigma = 4/(2 gamma + 1)) >= 1 - 3/gamma", p_hat >= bound - zs * se,
                  f"p_hat={p_hat:.4f} bound={bound:.4f} stderr={se:.2g}", 3)
        viol = int(sum(r["sigma"] < t_fix for r in ok))
        rep.check("sigma >= 4/(2 gamma + 1) pathwise", viol == 0, f"{viol} violations in {len(ok)}", 3)
        counts = np.histogram(np.mod([r["angle"] for r in ok], 2 * math.pi), bins=16, range=(0, 2 * math.pi))[0]
        chi = stats.chisquare(counts)
        rep.check("endpoint angle uniform", chi.pvalue > 0.01, f"chi2 p={chi.pvalue:.4g}", hard=False)
        rep.summary.update(single_step_p_exact=p_hat, single_step_ks_p=ks.pvalue)

    # walk marginals
    n, beta = cfg.walk_n, cfg.beta
    _require(n >= 2, "walk_n must be at least 2")
    kc = couple.k_cut(n, beta, cfg.kcut_c, cfg.kcut_p)
    items = [(cfg.seed, n, beta, kc, i) for i in range(cfg.walk_replicas)]
    ok = _collect(rep, "walk", range(cfg.walk_replicas), run_replicas(_walk_replica, items, cfg.workers))
    if ok:
        steps = np.array([r["steps"] for r in ok])  # column k-1 holds the step of index k
        ks_idx = np.arange(1, n)
        pit = np.empty_like(steps)
        for j, k in enumerate(ks_idx):
            pit[:, j] = dist.StepLawY(beta * k / 2.0).cdf(steps[:, j])
        buckets = _k_buckets(n)
        rows = []
        for lo, hi in buckets:
            sel = (ks_idx >= lo) & (ks_idx <= hi)
            res = stats.kstest(pit[:, sel].ravel(), "uniform")
            rows.append({"k_lo": lo, "k_hi": hi, "count": int(pit[:, sel].size), "ks_stat": res.statistic,
                         "p_value": res.pvalue, "regime": "fixed" if lo >= kc else ("tail" if hi < kc else "mixed")})
        per_k = []
        for j, k in enumerate(ks_idx):
            res = stats.kstest(pit[:, j], "uniform")
            per_k.append({"k": int(k), "gamma": beta * k / 2.0, "ks_stat": res.statistic, "p_value": res.pvalue,
                          "mean_step": float(steps[:, j].mean())})
        rep.table("walk_buckets", ["k_lo", "k_hi", "count", "ks_stat", "p_value", "regime"], rows)
        rep.table("walk_per_k", ["k", "gamma", "ks_stat", "p_value", "mean_step"], per_k)
        level = 0.01 / len(buckets)
        pooled = stats.kstest(pit.ravel(), "uniform")
        rep.check("coupled step lengths ~ StepLawY per k-bucket", all(r["p_value"] > level for r in rows),
                  f"min bucket p={min(r['p_value'] for r in rows):.4g} (Bonferroni level {level:.3g})", 4)
        rep.check("coupled step lengths ~ StepLawY pooled", pooled.pvalue > 0.01, _ks_detail(pooled), 4)
        dtau = np.array([r["dtau"] for r in ok])
        crow = []
        for j in range(dtau.shape[1] - 1):
            a, b = dtau[:, j], dtau[:, j + 1]
            if np.ptp(a) == 0 or np.ptp(b) == 0:
                continue
            rho = float(np.corrcoef(a, b)[0, 1])
            crow.append({"k": int(n - 1 - j), "corr": rho, "stderr": 1.0 / math.sqrt(len(ok))})
        frac = float(np.mean([abs(r["corr"]) < zs * r["stderr"] for r in crow])) if crow else 1.0
        rep.table("dtau_correlation", ["k", "corr", "stderr"], crow)
        rep.check("consecutive increments uncorrelated", frac >= 0.95,
                  f"{frac:.1%} of lags within {zs:g} stderr", hard=False)

    # deviation and clock tables
    dev_n = [m for m in cfg.n_list]
    t_grid = 1.0 - 2.0 ** -np.arange(0, 13)
    t_grid[0] = 0.0
    reps = min(cfg.replicas, 10)
    items = [(cfg.seed, dev_n, beta, t_grid, cfg.kcut_c, cfg.kcut_p, cfg.u_num, i) for i in range(reps)]
    ok = _collect(rep, "deviation", range(reps), run_replicas(_deviation_replica, items, cfg.workers))
    drows, crows, sup = [], [], {m: [] for m in dev_n}
    for i, per in enumerate(ok):
        for rec in per:
            sup[rec["n"]].append(rec["sup_dev"])
            drows += [dict(r, replica=i) for r in rec["rows"]]
            crows += [dict(r, replica=i) for r in rec["clock"]]
    rep.table("deviation", ["replica", "n", "t", "value", "envelope", "ratio"], drows)
    rep.table("clock", ["replica", "n", "k", "value", "envelope"], crows)
    med = [float(np.median(sup[m])) for m in dev_n if sup[m]]
    rep.summary["median_sup_deviation"] = dict(zip(dev_n, med))
    big = [m for m in dev_n if m >= 64]
    if len(big) >= 2 and ok:
        mb = [float(np.median(sup[m])) for m in big]
        rep.check("median sup-deviation decreases in n", all(np.diff(mb) < 0),
                  " ".join(f"n={m}:{v:.3g}" for m, v in zip(big, mb)), hard=False)
    return rep


def _k_buckets(n: int) -> list[tuple[int, int]]:
    edges = sorted({1, *[k for k in (2, 4, 8, 16, 32, 64, 128, 256) if k < n], n})
    return [(lo, hi - 1) for lo, hi in zip(edges[:-1], edges[1:])]


# spectrum: dual-method oracle, finite-ensemble law, density


def circ_spec(walk: paths.RandomWalkPath) -> dirac.DiracSpec:
    return dirac.make_spec(paths.walk_driving_path(walk.points, {"beta": walk.beta}), hgeom.INF, walk.eta)


def _dual_replica(args):
    master, n, beta, nodes, kmax, i = args
    walk = paths.sample_walk(replica_seed(master, 6, i), n, beta)
    spec = circ_spec(walk)
    per_piece = max(1, round(nodes / (16 * n)))
    grid = dirac.make_grid(pieces=n, nodes_per_panel=16, panels_per_piece=per_piece, u_num=1e-8, tail_nodes=8)
    tr = spectrum.eigs_transfer(spec, K=max(kmax, 2 * n))
    ny = spectrum.eigs_nystrom(dirac.build_kernel(spec, grid), K=kmax)
    cmp = spectrum.match_and_compare(tr.window(kmax), ny.window(kmax))
    keep = np.abs(cmp.k) <= kmax
    period = spectrum.detect_period(tr, n)
    return {"k": cmp.k[keep], "lam_transfer": np.array([tr.as_dict()[k] for k in cmp.k[keep]]),
            "rel": cmp.rel[keep], "N": grid.size, "period": period}


def _law_replica(args):
    master, n, beta, i = args
    walk = paths.sample_walk(replica_seed(master, 7, i), n, beta)
    tr = spectrum.eigs_transfer(circ_spec(walk), K=n + 1)
    d = tr.as_dict()
    period = spectrum.detect_period(tr, n)
    gap = d[2] - d[1]
    return {"gap": gap, "period": period, "stat": min(gap, period - gap) / n}


def _lln_replica(args):
    master, beta, K, grid_args, u_num, i = args
    seed = replica_seed(master, 8, i)
    bm = paths.HypBMPath(seed)
    eta1, _ = paths.boundary_limit(bm, couple.eta_tolerance(beta, u_num))
    spec = dirac.make_spec(paths.time_change(bm, beta), hgeom.INF, eta1)
    res = spectrum.eigs_nystrom(dirac.build_kernel(spec, dirac.make_grid(**grid_args)), K)
    d = res.as_dict()
    return {"beta": beta, "spacing": (d[K] - d[-K]) / (2 * K), "lam1": d[1], "lam0": d[0]}


def sample_gap_density(rng: np.random.Generator, beta: float, size: int) -> np.ndarray:
    """Rejection samples of ``theta`` on ``[0, pi]`` with density proportional to ``sin(theta/2)^beta``."""
    out = []
    while sum(len(o) for o in out) < size:
        th = rng.uniform(0.0, math.pi, 2 * size)
        acc = rng.random(2 * size) < np.sin(th / 2.0) ** beta
        out.append(th[acc])
    return np.concatenate(out)[:size]


def cmd_spectrum(cfg: ExperimentConfig) -> Report:
    _require(cfg.dual_replicas > 0 and cfg.law_replicas > 0 and cfg.lln_replicas > 0,
             "replica counts must be positive")
    rep = Report("spectrum")
    kmax = 5
    n = cfg.dual_n
    items = [(cfg.seed, n, cfg.beta, cfg.dual_nodes, kmax, i) for i in range(cfg.dual_replicas)]
    ok = _collect(rep, "dual", range(cfg.dual_replicas), run_replicas(_dual_replica, items, cfg.workers))
    rows = []
    for i, r in enumerate(ok):
        rows += [{"replica": i, "n": n, "k": int(k), "lam_transfer": float(l), "rel_diff": float(e), "N": r["N"]}
                 for k, l, e in zip(r["k"], r["lam_transfer"], r["rel"])]
    rep.table("dual_method", ["replica", "n", "k", "lam_transfer", "rel_diff", "N"], rows)
    worst = max((r["rel_diff"] for r in rows), default=math.inf)
    full = all(len(r["k"]) == 2 * kmax + 1 for r in ok) and len(ok) == cfg.dual_replicas
    rep.check("Nystrom vs transfer, |k| <= 5", full and worst < 1e-3, f"max relative difference {worst:.3g}", 5)
    periods = [r["period"] / (2 * math.pi * n) for r in ok]
    rep.summary["dual_period_over_2pi_n"] = float(np.mean(periods)) if periods else math.nan

    n2 = 2
    items = [(cfg.seed, n2, cfg.beta, i) for i in range(cfg.law_replicas)]
    ok = _collect(rep, "law", range(cfg.law_replicas), run_replicas(_law_replica, items, cfg.workers))
    rep.table("gap_law", ["replica", "gap", "period", "stat"], [dict(r, replica=i) for i, r in enumerate(ok)])
    if ok:
        ref = sample_gap_density(paths.RngStreams(cfg.seed).get("angle", 2), cfg.beta, 20000)
        ks = stats.ks_2samp([r["stat"] for r in ok], ref)
        period = float(np.mean([r["period"] for r in ok]))
        rep.summary["detected_period_over_2pi"] = period / (2 * math.pi)
        rep.check("n=2 gap statistic vs circular-ensemble density", ks.pvalue > 0.01,
                  f"{_ks_detail(ks)}; detected period = {period / (2 * math.pi):.6f} x 2pi", 6)

    grid_args = dict(pieces=max(1, cfg.nodes_target // cfg.nodes_per_panel), nodes_per_panel=cfg.nodes_per_panel,
                     u_num=cfg.u_num, tail_nodes=cfg.tail_nodes)
    rows = []
    detail = []
    good = True
    for beta in cfg.betas:
        items = [(cfg.seed, beta, cfg.window, grid_args, cfg.u_num, i) for i in range(cfg.lln_replicas)]
        ok = _collect(rep, f"lln_beta{beta:g}", range(cfg.lln_replicas),
                      run_replicas(_lln_replica, items, cfg.workers))
        rows += [dict(r, replica=i) for i, r in enumerate(ok)]
        mean = float(np.mean([r["spacing"] for r in ok])) if ok else math.nan
        rel = abs(mean - 2 * math.pi) / (2 * math.pi)
        good &= rel < 0.1
        detail.append(f"beta={beta:g}: {mean:.4f} ({rel:.1%})")
    rep.table("sine_spacing", ["replica", "beta", "spacing", "lam1", "lam0"], rows)
    rep.check("Sine mean spacing within 10% of 2pi", good, "; ".join(detail), 11)
    return rep


# converge: main rate, Hoffman-Wielandt and certificates


def _escape(path, grid_u, nu, z0, eta1, extra_u=()):
    u = np.concatenate([np.asarray(grid_u, float), np.asarray(extra_u, float)])
    x, y = path.evaluate(u)
    return -nu * np.log(u), np.asarray(x, float), np.asarray(y, float)


def _best_hs2(s, x, y, eta1, nu, T, u0, u1, M=None):
    alpha = 0.5
    hi = min(alpha, 1.0 / nu)
    eps_grid = np.linspace(0.0, hi, 41)[1:-1]

    def obj(b, eps):
        try:
            return dirac.hs2_certificate(b, eps, alpha, nu, T, u0, u1, hgeom.I, M)
        except ValueError:
            return math.inf

    fit = dirac.escape_fit(s, x, y, hgeom.I, eta1, alpha, eps_grid, obj)
    return fit, obj(fit.b, fit.eps)


def certificate_rows(grid, ks, kc, sine, circ, spec, nu, T) -> dict:
    """Measured truncation and approximation distances next to their certificates."""
    u0, u1 = spec.u0, spec.u1
    eta1 = spec.eta1
    v = 1.0 - T
    out = {"T": T}
    # truncation of the continuous kernel
    out["trunc_sine"] = dirac.hs_distance_sq(ks, dirac.truncate(ks, T))
    s, x, y = _escape(sine, grid.u, nu, hgeom.I, eta1)
    fit, cert = _best_hs2(s, x, y, eta1, nu, T, u0, u1)
    out.update(cert_trunc_sine=cert, b_sine=fit.b, eps_sine=fit.eps)
    # truncation of the piecewise kernel, tail frozen at T up to distance M
    keep = grid.t <= T
    s, x, y = _escape(circ, grid.u[keep], nu, hgeom.I, eta1, [v])
    xt, yt = circ.evaluate(np.array([v]))
    xa, ya = circ.evaluate(grid.u[~keep])
    m_tail = float(np.max(hgeom.dist_xy(np.asarray(xa), np.asarray(ya), xt[0], yt[0]), initial=0.0))
    out["trunc_circ"] = dirac.hs_distance_sq(kc, dirac.truncate(kc, T))
    fit_c, cert_c = _best_hs2(s, x, y, eta1, nu, T, u0, u1, m_tail)
    out.update(cert_trunc_circ=cert_c, M_tail=m_tail)
    # approximation on [0, T]
    out["approx"] = dirac.hs_distance_sq(dirac.truncate(ks, T), dirac.truncate(kc, T))
    delta, M = dirac.fit_delta_m(grid.u[keep], dirac.sinh_gap(sine, circ, grid.u[keep]))
    s, x, y = _escape(sine, grid.u[keep], nu, hgeom.I, eta1, [v])
    best = None
    for eps in np.linspace(0.0, min(0.5, 0.5 / nu), 41)[1:-1]:
        dev = dirac.geodesic_deviation(s, x, y, hgeom.I, eta1, 0.5)
        b = float(max(np.max(dev - eps * s), 0.0))
        c = dirac.hs3_certificate(grid, T, delta, M, b, eps, 0.5, nu, u0, u1)
        if best is None or c.bound < best.bound:
            best = c
    out.update(cert_approx=best.bound, closed_form_approx=best.closed_form, delta=delta, M=M)
    out["pass"] = bool(out["trunc_sine"] <= out["cert_trunc_sine"] and out["trunc_circ"] <= out["cert_trunc_circ"]
                       and out["approx"] <= out["cert_approx"])
    return out


def _converge_replica(args):
    cfg_d, i = args
    cfg = ExperimentConfig.from_dict(cfg_d)
    beta = cfg.beta
    nu = 4.0 / beta
    seed = replica_seed(cfg.seed, 9, i)
    bm = paths.HypBMPath(seed, h=cfg.base_step)
    streams = paths.RngStreams(seed)
    tol = couple.eta_tolerance(beta, cfg.u_num)
    grid = quad_grid(cfg, max(cfg.n_list), cfg.truncations)
    out = {"replica": i, "rows": [], "certs": []}
    ks = sine = sine_eigs = None
    for n in cfg.n_list:
        kc_ = couple.k_cut(n, beta, cfg.kcut_c, cfg.kcut_p)
        pair = couple.coupled_pair(bm, streams, n, beta, kc_, tol)
        if ks is None:
            sine = pair.continuous
            sspec = dirac.make_spec(sine, pair.eta0, pair.eta1)
            ks = dirac.build_kernel(sspec, grid)
            sine_eigs = spectrum.eigs_nystrom(ks, cfg.window)
            integ = dirac.integrability_check(sspec, grid)
            out["integrable"] = integ.finite
        cspec = dirac.make_spec(pair.discrete, pair.eta0, pair.eta1)
        kc = dirac.build_kernel(cspec, grid)
        d2 = dirac.hs_distance_sq(ks, kc)
        ce = spectrum.eigs_nystrom(kc, cfg.window)
        cmp = spectrum.match_and_compare(sine_eigs, ce)
        small = np.abs(cmp.k) <= 5
        out["rows"].append({"replica": i, "n": n, "hs_dist_sq": d2, "sum_sq_mu": cmp.sum_sq_mu,
                            "hw_pass": bool(cmp.sum_sq_mu <= d2 + 1e-6), "max_dlam_k5": float(cmp.dlam[small].max()),
                            "lam1_sine": sine_eigs.as_dict()[1], "lam1_circ": ce.as_dict()[1], "N": grid.size})
        if n in cfg.n_list[-2:]:
            for T in cfg.truncations:
                out["certs"].append(dict(certificate_rows(grid, ks, kc, sine, pair.discrete, cspec, nu, T),
                                         replica=i, n=n))
    return out


CERT_COLUMNS = ["replica", "n", "T", "trunc_sine", "cert_trunc_sine", "b_sine", "eps_sine", "trunc_circ",
                "cert_trunc_circ", "M_tail", "approx", "cert_approx", "closed_form_approx", "delta", "M", "pass"]


def cmd_converge(cfg: ExperimentConfig) -> Report:
    _require(cfg.replicas > 0, "replicas must be positive")
    _require(all(0 < T < 1 for T in cfg.truncations), "truncations must lie in (0, 1)")
    rep = Report("converge")
    cfg_d = cfg.to_dict()
    items = [(cfg_d, i) for i in range(cfg.replicas)]
    ok = _collect(rep, "converge", range(cfg.replicas), run_replicas(_converge_replica, items, cfg.workers))
    rows = [r for o in ok for r in o["rows"]]
    certs = [c for o in ok for c in o["certs"]]
    rep.table("converge", ["replica", "n", "hs_dist_sq", "sum_sq_mu", "hw_pass", "max_dlam_k5",
                           "lam1_sine", "lam1_circ", "N"], rows)
    rep.table("certificates", CERT_COLUMNS, certs)
    med = {n: float(np.median([r["hs_dist_sq"] for r in rows if r["n"] == n])) for n in cfg.n_list if rows}
    rep.table("converge_median", ["n", "median_hs_dist_sq", "median_max_dlam_k5"],
              [{"n": n, "median_hs_dist_sq": med[n],
                "median_max_dlam_k5": float(np.median([r["max_dlam_k5"] for r in rows if r["n"] == n]))}
               for n in med])
    hw_fail = sum(not r["hw_pass"] for r in rows)
    worst = max((r["sum_sq_mu"] - r["hs_dist_sq"] for r in rows), default=math.nan)
    rep.check("Hoffman-Wielandt on every replica", hw_fail == 0 and bool(rows),
              f"{hw_fail} violations in {len(rows)} rows; max(sum - HS^2) = {worst:.3g}", 7)
    if len(med) >= 2:
        ns = np.array(sorted(med))
        slope = float(np.polyfit(np.log(ns), np.log([med[n] for n in ns]), 1)[0])
        rep.summary["slope"] = slope
        rep.check("log-log slope of median HS^2 <= -0.8", slope <= -0.8, f"slope = {slope:.3f}", 8)
        rep.figures["converge"] = io.loglog_plot(ns, {"median HS^2": [med[n] for n in ns],
                                                     "1/n": [med[ns[0]] * ns[0] / n for n in ns]},
                                                 "HS distance squared vs n", "n", "median")
    if certs:
        bad = sum(not c["pass"] for c in certs)
        rep.check("measured distances <= certificates", bad == 0, f"{bad} violations in {len(certs)} instances", 10)
    integ = [o.get("integrable", False) for o in ok]
    rep.check("integrability of the continuous kernel", all(integ), f"{sum(integ)}/{len(integ)} finite", hard=False)
    return rep


# betadep: shared Brownian motion across beta


def _betadep_replica(args):
    cfg_d, betas, i = args
    cfg = ExperimentConfig.from_dict(cfg_d)
    seed = replica_seed(cfg.seed, 10, i)
    bm = paths.HypBMPath(seed, h=cfg.base_step)
    eta1, _ = paths.boundary_limit(bm, couple.eta_tolerance(min(betas), cfg.u_num))
    grid = dirac.make_grid(pieces=max(1, cfg.nodes_target // cfg.nodes_per_panel),
                           nodes_per_panel=cfg.nodes_per_panel, u_num=cfg.u_num, tail_nodes=cfg.tail_nodes)
    ref = None
    rows = []
    for beta in betas:
        spec = dirac.make_spec(paths.time_change(bm, beta), hgeom.INF, eta1)
        k = dirac.build_kernel(spec, grid)
        ev = spectrum.eigs_nystrom(k, cfg.window)
        if ref is None:
            ref = (k, ev)
            continue
        d2 = dirac.hs_distance_sq(ref[0], k)
        cmp = spectrum.match_and_compare(ref[1], ev)
        rows.append({"replica": i, "beta": beta, "delta": abs(4.0 / beta - 4.0 / betas[0]), "hs_dist": math.sqrt(d2),
                     "hs_dist_sq": d2, "sum_sq_mu": cmp.sum_sq_mu})
    return rows


def cmd_betadep(cfg: ExperimentConfig) -> Report:
    _require(cfg.replicas > 0, "replicas must be positive")
    _require(all(0 < d < 1 for d in cfg.deltas), "deltas must lie in (0, 1)")
    rep = Report("betadep")
    b1 = cfg.beta
    deltas = sorted(cfg.deltas)
    betas = [b1] + [4.0 / (4.0 / b1 + d) for d in deltas]
    items = [(cfg.to_dict(), betas, i) for i in range(cfg.replicas)]
    ok = _collect(rep, "betadep", range(cfg.replicas), run_replicas(_betadep_replica, items, cfg.workers))
    rows = [r for o in ok for r in o]
    for r in rows:
        r["hw_pass"] = bool(r["sum_sq_mu"] <= r["hs_dist_sq"] + 1e-6)
        r["stated_pass"] = bool(r["sum_sq_mu"] <= r["hs_dist"] + 1e-6)
    rep.table("betadep", ["replica", "beta", "delta", "hs_dist", "hs_dist_sq", "sum_sq_mu", "hw_pass", "stated_pass"],
              rows)
    if not rows:
        return rep
    d = np.array(deltas)
    med = np.array([np.median([r["hs_dist_sq"] for r in rows if abs(r["delta"] - x) < 1e-12 * max(1, x)])
                    for x in d])
    shape = d * np.log(1.0 / d)
    # minimax fit of c in log space: the factor criterion is a sup-norm statement
    logr = np.log(med / shape)
    c = float(np.exp(0.5 * (logr.max() + logr.min())))
    ratio = med / (c * shape)
    rep.table("betadep_fit", ["delta", "median_hs_dist_sq", "fit", "ratio"],
              [{"delta": x, "median_hs_dist_sq": m, "fit": c * s, "ratio": q} for x, m, s, q in zip(d, med, shape, ratio)])
    rep.summary["fit_constant"] = c
    rep.check("median HS^2 within factor 3 of c delta log(1/delta)", bool(np.all((ratio <= 3) & (ratio >= 1 / 3))),
              f"c = {c:.4g}; ratios " + " ".join(f"{q:.2f}" for q in ratio), 9)
    bad = sum(not r["stated_pass"] for r in rows)
    bad_hw = sum(not r["hw_pass"] for r in rows)
    rep.check("eigenvalue sum <= HS distance on every replica", bad == 0 and bad_hw == 0,
              f"{bad} violations of sum <= HS, {bad_hw} of sum <= HS^2, in {len(rows)} rows", 9)
    rep.check("HS distance decreases as delta -> 0", bool(np.all(np.diff(med) > 0)), "", hard=False)
    rep.figures["betadep"] = io.loglog_plot(d, {"median HS^2": med, "c delta log(1/delta)": c * shape},
                                            "beta dependence", "delta", "HS^2")
    return rep


# validate: Brownian-motion appendix suite


LOWER_PAIRS = [(0.5, 1.0), (1.0, 1.0), (1.0, 1.5), (2.0, 2.0)]
UPPER_PAIRS = [(0.05, 1.2), (0.1, 1.5), (0.2, 2.5)]
MODULUS_H = [1e-4, 1e-3, 1e-2, 1e-1]


def _tails_replica(args):
    master, i = args
    bm = paths.HypBMPath(replica_seed(master, 11, i), horizon=2.0)
    x, y = bm.grid_xy()
    d = hgeom.dist_xy(0.0, 1.0, x, y)
    run_max = np.maximum.accumulate(d)
    idx = lambda t: int(round(t / bm.h))
    return {"lower": [run_max[idx(t)] <= a for t, a in LOWER_PAIRS],
            "upper": [run_max[idx(t)] >= a for t, a in UPPER_PAIRS],
            "d_half": float(d[idx(0.5)]), "angle": float(np.angle(hgeom.to_disk_xy(x[idx(1.0)], y[idx(1.0)], 0.0, 1.0))),
            "logy": float(math.log(y[idx(1.0)]))}


def _escape_replica(args):
    master, i = args
    bm = paths.HypBMPath(replica_seed(master, 12, i), horizon=200.0)
    p = bm.at(200.0)
    return hgeom.dist_h(hgeom.I, p) / 200.0


def _modulus_replica(args):
    master, i = args
    bm = paths.HypBMPath(replica_seed(master, 13, i), horizon=11.0)
    s = np.linspace(0.0, 10.0, 201)
    rows = paths.modulus_report(bm, MODULUS_H, s)
    xa, ya = bm.xy_many(s)
    lin = []
    for h in MODULUS_H:
        xb, yb = bm.xy_many(s + h)
        lin.append(float(np.max(hgeom.dist_xy(xa, ya, xb, yb) / h)))
    return {"ratios": [r[1] for r in rows], "linear": lin}


def _cauchy_replica(args):
    master, i = args
    eta, radius = paths.boundary_limit(paths.HypBMPath(replica_seed(master, 14, i)))
    return {"eta": eta.value, "radius": radius}


def cmd_validate(cfg: ExperimentConfig) -> Report:
    _require(cfg.replicas > 0, "replicas must be positive")
    rep = Report("validate")
    zs = cfg.confidence_sigma
    n_tail = 20 * cfg.replicas
    ok = _collect(rep, "tails", range(n_tail),
                  run_replicas(_tails_replica, [(cfg.seed, i) for i in range(n_tail)], cfg.workers))
    rows = []
    if ok:
        N = len(ok)
        lower = np.array([r["lower"] for r in ok], float).mean(axis=0)
        upper = np.array([r["upper"] for r in ok], float).mean(axis=0)
        for kind, pairs, ps in (("lower", LOWER_PAIRS, lower), ("upper", UPPER_PAIRS, upper)):
            for (t, a), p in zip(pairs, ps):
                if kind == "lower":
                    bound = 4.0 / math.pi * math.exp(-math.pi**2 * t / (8 * a * a))
                else:
                    bound = 16 * math.sqrt(t) / (a * math.sqrt(math.pi)) * math.exp(-a * a / (16 * t))
                se = math.sqrt(max(p * (1 - p), 1.0 / N) / N)
                rows.append({"kind": kind, "t": t, "a": a, "p_hat": p, "bound": bound, "stderr": se,
                             "pass": bool(p <= bound + zs * se)})
        rep.table("tail_bounds", ["kind", "t", "a", "p_hat", "bound", "stderr", "pass"], rows)
        rep.check("max-distance tail bounds", all(r["pass"] for r in rows),
                  f"within {zs:g} stderr over {N} paths; max p_hat - bound = "
                  f"{max(r['p_hat'] - r['bound'] for r in rows):.3g}", 12)
        d = np.array([r["d_half"] for r in ok])
        t = 0.5
        law = dist.HeatRadialLaw(t)
        ks = stats.kstest(d, lambda r: np.array([law.cdf(float(v)) for v in np.atleast_1d(r)]))
        rep.check("distance at t=0.5 follows the heat radial law", ks.pvalue > 0.01, _ks_detail(ks), hard=False)
        ks = stats.kstest([r["logy"] for r in ok], stats.norm(-0.5, 1.0).cdf)
        rep.check("log y(1) ~ Normal(-1/2, 1)", ks.pvalue > 0.01, _ks_detail(ks), hard=False)
        ks = stats.kstest(np.mod([r["angle"] for r in ok], 2 * math.pi) / (2 * math.pi), "uniform")
        rep.check("disk angle of B(1) uniform", ks.pvalue > 0.01, _ks_detail(ks), hard=False)
        # stochastic ordering |B1(t)| <= d <= |W2(t)| + t/2 at the level of CDFs
        r = np.linspace(0.01, 4.0, 80)
        emp = np.searchsorted(np.sort(d), r, side="right") / N
        se = np.sqrt(np.maximum(emp * (1 - emp), 1.0 / N) / N)
        upper_cdf = 2 * stats.norm.cdf(r / math.sqrt(t)) - 1
        lower_cdf = np.where(r > t / 2, 1 - np.exp(-(r - t / 2) ** 2 / (2 * t)), 0.0)
        good = np.all(emp <= upper_cdf + zs * se) and np.all(emp >= lower_cdf - zs * se)
        rep.check("distance sandwiched between 1-D and 2-D Brownian radii", good, "", hard=False)

    n_esc = 4 * cfg.replicas
    ok = _collect(rep, "escape", range(n_esc),
                  run_replicas(_escape_replica, [(cfg.seed, i) for i in range(n_esc)], cfg.workers))
    if ok:
        m = float(np.mean(ok))
        rep.table("escape", ["replica", "speed"], [{"replica": i, "speed": v} for i, v in enumerate(ok)])
        rep.check("escape speed at t=200 within 10% of 1/2", abs(m - 0.5) < 0.05, f"mean speed {m:.4f} over {len(ok)}", 12)

    n_mod = 2 * cfg.replicas
    ok = _collect(rep, "modulus", range(n_mod),
                  run_replicas(_modulus_replica, [(cfg.seed, i) for i in range(n_mod)], cfg.workers))
    if ok:
        ratios = np.array([r["ratios"] for r in ok])
        lin = np.array([r["linear"] for r in ok])
        C = float(ratios.max())
        rep.summary["modulus_constant"] = C
        rep.table("modulus", ["h", "max_ratio", "median_ratio", "max_linear_ratio"],
                  [{"h": h, "max_ratio": float(ratios[:, j].max()), "median_ratio": float(np.median(ratios[:, j])),
                    "max_linear_ratio": float(lin[:, j].max())} for j, h in enumerate(MODULUS_H)])
        rep.check("modulus-of-continuity ratio bounded", math.isfinite(C) and C <= 20.0,
                  f"C = {C:.3f} over {len(ok)} paths", 12)
        med_lin = np.median(lin, axis=0)
        rep.check("linear envelope ratio blows up as h -> 0", bool(np.all(np.diff(med_lin) < 0)),
                  " ".join(f"{v:.3g}" for v in med_lin), hard=False)

    n_c = 10 * cfg.replicas
    ok = _collect(rep, "boundary", range(n_c),
                  run_replicas(_cauchy_replica, [(cfg.seed, i) for i in range(n_c)], cfg.workers))
    if ok:
        ks = stats.kstest([r["eta"] for r in ok], "cauchy")
        rep.check("boundary limit ~ standard Cauchy", ks.pvalue > 0.01, _ks_detail(ks), hard=False)
        rmax = max(r["radius"] for r in ok)
        rep.check("boundary limit error radius < 1e-4", rmax < 1e-4, f"max radius {rmax:.3g}", hard=False)
    return rep


# figure


def cmd_figure(cfg: ExperimentConfig) -> Report:
    _require(cfg.figure_n >= 1, "figure_n must be at least 1")
    rep = Report("figure")
    n, beta = cfg.figure_n, cfg.beta
    bm = paths.HypBMPath(cfg.seed, h=cfg.base_step)
    streams = paths.RngStreams(cfg.seed)
    arr = couple.build_tau_array(bm, streams, n, beta, couple.k_cut(n, beta, cfg.kcut_c, cfg.kcut_p),
                                 couple.eta_tolerance(beta, cfg.u_num))
    s_end = arr.tau(1) if n > 1 else 1.0
    s = np.linspace(0.0, s_end * 1.05 + 0.5, 4000)
    x, y = bm.xy_many(s)
    w = hgeom.to_disk_xy(x, y, 0.0, 1.0)
    svg = io.Svg(640, 640)
    cx = cy = 320.0
    R = 300.0
    svg.circle(cx, cy, R, stroke="#888", width=1.0)
    svg.polyline(cx + R * w.real, cy - R * w.imag, stroke="#1f4e79", width=0.6, opacity=0.8)
    pts = [arr.point(k) for k in range(n, 0, -1)]
    wv = hgeom.to_disk_xy(np.array([p.x for p in pts]), np.array([p.y for p in pts]), 0.0, 1.0)
    if n > 1:
        svg.polyline(cx + R * wv.real, cy - R * wv.imag, stroke="#c0504d", width=1.4)
    for z in wv:
        svg.circle(cx + R * z.real, cy - R * z.imag, 3.0, fill="#c0504d", stroke="#c0504d")
    eb = complex(hgeom.to_disk_xy(arr.eta1.value, 0.0, 0.0, 1.0)) if not arr.eta1.is_infinite else 1j
    ang = math.atan2(eb.imag, eb.real)
    svg.circle(cx + R * math.cos(ang), cy - R * math.sin(ang), 6.0, fill="#4f8f3a", stroke="#4f8f3a")
    svg.text(12, 20, f"n = {n}, beta = {beta:g}, seed = {cfg.seed}", 12)
    rep.figures["figure"] = svg
    rep.table("walk", ["k", "tau", "x", "y", "regime"],
              [{"k": k, "tau": arr.tau(k), "x": arr.point(k).x, "y": arr.point(k).y, "regime": arr.regime[k]}
               for k in range(n, 0, -1)])
    xt, yt = bm.xy_many(np.array([arr.tau(k) for k in range(1, n + 1)]))
    on_trace = all(abs(a - p.x) < 1e-12 and abs(b - p.y) < 1e-12 * max(1, p.y)
                   for a, b, p in zip(xt, yt, [arr.point(k) for k in range(1, n + 1)]))
    rep.check("walk vertices lie on the trace at tau times", on_trace, "", hard=False)
    return rep


COMMANDS: dict[str, Callable[[ExperimentConfig], Report]] = {
    "heatkernel": cmd_heatkernel,
    "couple-diag": cmd_couple_diag,
    "spectrum": cmd_spectrum,
    "converge": cmd_converge,
    "betadep": cmd_betadep,
    "figure": cmd_figure,
    "validate": cmd_validate,
}

# per-command defaults layered under the user's JSON and overrides
DEFAULTS: dict[str, dict[str, Any]] = {
    "heatkernel": {},
    "couple-diag": {"n_list": [64, 128, 256, 512], "replicas": 10},
    "spectrum": {"nodes_per_panel": 16, "nodes_target": 1024},
    "converge": {"nodes_per_panel": 2, "nodes_target": 1024},
    "betadep": {"replicas": 20, "nodes_per_panel": 8, "nodes_target": 512},
    "figure": {},
    "validate": {"replicas": 50},
}


def default_config(command: str, **overrides) -> ExperimentConfig:
    if command not in COMMANDS:
        raise UsageError(f"unknown command {command!r}")
    data = ExperimentConfig(experiment=command).to_dict()
    data.update(DEFAULTS[command])
    data.update(overrides)
    return ExperimentConfig.from_dict(data)
