import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from circsine import dist, hgeom, paths
from circsine.hgeom import HPoint


def test_streams_reproducible_and_distinct():
    a = paths.RngStreams(7)
    b = paths.RngStreams(7)
    assert a.uniform("U", 3) == b.uniform("U", 3)
    assert a.uniform("U", 3) != a.uniform("xi", 3)
    assert a.uniform("U", 3) != a.uniform("U", 4)
    assert a.uniform("U", 3) != paths.RngStreams(8).uniform("U", 3)


def test_path_starts_at_i_and_is_deterministic():
    p = paths.HypBMPath(11, horizon=2.0)
    q = paths.HypBMPath(11, horizon=2.0)
    assert p.at(0.0) == hgeom.I
    assert np.array_equal(p.grid_xy()[0], q.grid_xy()[0])
    assert p.at(1.2345) == q.at(1.2345)
    assert np.all(np.diff(p.times) > 0) and np.all(p.grid_xy()[1] > 0)


def test_ordinate_is_exact_exponential_of_noise():
    p = paths.HypBMPath(2, horizon=3.0)
    x, y = p.grid_xy()
    assert np.allclose(np.log(y), p.b2[: len(y)] - p.times / 2, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 5), min_size=1, max_size=20))
def test_refinement_never_moves_observed_points(times):
    p = paths.HypBMPath(5, horizon=6.0)
    x0, y0 = (a.copy() for a in p.grid_xy())
    first = [p.at(t) for t in times]
    again = [p.at(t) for t in times]
    assert first == again
    x1, y1 = p.grid_xy()
    assert np.array_equal(x0, x1[: len(x0)]) and np.array_equal(y0, y1[: len(y0)])


def test_bridge_points_lie_between_neighbours_in_law():
    # bridge midpoint of B2 over one base step has variance h/4
    vals = []
    for seed in range(400):
        p = paths.HypBMPath(seed, horizon=0.01)
        s = 0.5 * p.h
        b1, b2 = p._noise_at(s)
        vals.append(b2 - 0.5 * (p.b2[0] + p.b2[1]))
    assert stats.kstest(np.array(vals) / math.sqrt(p.h / 4), "norm").pvalue > 0.01


def test_log_y_is_normal():
    t = 0.5
    ly = [math.log(paths.HypBMPath(s, horizon=t).at(t).y) for s in range(1000)]
    assert stats.kstest(ly, stats.norm(-t / 2, math.sqrt(t)).cdf).pvalue > 0.01


def test_distance_law_at_half():
    t = 0.5
    law = dist.HeatRadialLaw(t)
    r = np.linspace(0, 6, 3001)
    cdf = 1 - law.sf_table(r)
    d = [hgeom.dist_h(hgeom.I, paths.HypBMPath(1000 + s, horizon=t).at(t)) for s in range(2000)]
    assert stats.kstest(d, lambda v: np.interp(v, r, cdf)).pvalue > 0.01


def test_first_hit_lands_on_the_sphere():
    p = paths.HypBMPath(21)
    start = p.at(0.3)
    s, end = p.first_hit(start, 0.8, 0.3)
    assert s > 0.3
    assert hgeom.dist_h(start, end) == pytest.approx(0.8, abs=1e-9)
    assert p.at(s) == end or hgeom.dist_h(p.at(s), end) < 1e-9
    # no earlier observed point is beyond the radius
    grid, extra = p.known_after(0.3, s - 1e-12)
    for t in np.concatenate([grid, extra]):
        assert hgeom.dist_h(start, p.at(float(t))) < 0.8 * (1 + 1e-9)


def test_fork_keeps_prefix():
    p = paths.HypBMPath(4, horizon=3.0)
    p.at(1.23456)
    q = p.fork(1.5, seed=99)
    for t in (0.0, 0.7, 1.23456, 1.5):
        assert q.at(t) == p.at(t)
    assert q.at(2.5) != p.at(2.5)


def test_pin_rejects_observed_time():
    p = paths.HypBMPath(1, horizon=1.0)
    with pytest.raises(ValueError):
        p.pin(0.5, HPoint(0.0, 1.0))


def test_horizon_cap():
    p = paths.HypBMPath(1, cap=1.0)
    with pytest.raises(paths.HorizonExceeded):
        p.extend_to(2.0)


def test_boundary_limit_radius_and_stability():
    for seed in range(30):
        p = paths.HypBMPath(seed)
        eta, radius = paths.boundary_limit(p, 1e-6)
        assert radius < 1e-4
        finer, _ = paths.boundary_limit(p, 1e-9)
        assert abs(finer.value - eta.value) <= radius


def test_boundary_limit_cap():
    p = paths.HypBMPath(3, cap=5.0)
    with pytest.raises(paths.LimitNotResolved) as info:
        paths.boundary_limit(p, 1e-12)
    assert info.value.y_final > 0


def test_boundary_limit_immediate_near_boundary():
    p = paths.HypBMPath(3, start=HPoint(0.25, 1e-9))
    eta, radius = paths.boundary_limit(p, 1e-6)
    assert eta.value == pytest.approx(0.25) and radius < 1e-6


def test_boundary_limit_is_cauchy():
    etas = [paths.boundary_limit(paths.HypBMPath(500 + s), 1e-4)[0].value for s in range(1000)]
    assert stats.kstest(etas, "cauchy").pvalue > 0.01


def test_sample_walk_n1():
    w = paths.sample_walk(1, 1, 2.0)
    assert w.points == [hgeom.I]
    assert not w.eta.is_infinite or w.eta.is_infinite


@given(st.integers(0, 10**6), st.integers(2, 12), st.floats(0.5, 6))
@settings(max_examples=30)
def test_walk_steps_match_zetas(seed, n, beta):
    w = paths.sample_walk(seed, n, beta)
    assert w.points[0] == hgeom.I
    expected = np.log((1 + np.sqrt(w.zetas)) / (1 - np.sqrt(w.zetas)))
    ok = w.zetas < 1 - 1e-9
    assert np.allclose(w.step_lengths()[ok], expected[ok], rtol=1e-6, atol=1e-9)
    assert np.allclose(w.gammas, beta * (n - np.arange(n - 1) - 1) / 2)


def test_walk_step_laws():
    n, beta = 50, 2.0
    steps = np.array([paths.sample_walk(s, n, beta).step_lengths() for s in range(600)])
    gam = beta * (n - np.arange(n - 1) - 1) / 2
    pit = np.column_stack([dist.StepLawY(g).cdf(steps[:, j]) for j, g in enumerate(gam)])
    for lo, hi in ((0, 10), (10, 30), (30, 49)):
        assert stats.kstest(pit[:, lo:hi].ravel(), "uniform").pvalue > 0.01 / 3


def test_time_change_examples():
    bm = paths.HypBMPath(8, horizon=3.0)
    b = paths.time_change(bm, 2.0)
    x, y = b(np.array([0.0]))
    assert (x[0], y[0]) == (0.0, 1.0)
    x, y = b(np.array([1 - math.exp(-1)]))
    p = bm.at(2.0)
    assert x[0] == pytest.approx(p.x, abs=1e-12) and y[0] == pytest.approx(p.y, rel=1e-12)


@given(st.floats(0, 1 - 1e-9), st.floats(0.5, 8))
def test_time_change_roundtrip(t, beta):
    assert float(paths.changed_time(paths.original_time(t, beta), beta)) == pytest.approx(t, abs=1e-14)


def test_walk_driving_path_pieces():
    pts = [HPoint(0, 1), HPoint(1, 2), HPoint(-1, 0.5)]
    g = paths.walk_driving_path(pts)
    x, y = g(np.array([0.0, 0.34, 0.99]))
    assert list(x) == [0.0, 1.0, -1.0] and list(y) == [1.0, 2.0, 0.5]
    assert np.allclose(g.breaks, [0, 1 / 3, 2 / 3, 1])


def test_modulus_report():
    bm = paths.HypBMPath(6, horizon=5.0)
    rows = paths.modulus_report(bm, [0.0, 1e-3, 1e-2], np.linspace(0, 3, 31))
    assert rows[0] == (0.0, 0.0)
    assert all(0 < r < 20 for _, r in rows[1:])
