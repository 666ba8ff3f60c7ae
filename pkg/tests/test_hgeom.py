import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from circsine import hgeom
from circsine.hgeom import INF, BoundaryPt, HPoint, Isometry

xs = st.floats(-20, 20)
ys = st.floats(1e-3, 1e3)
points = st.builds(HPoint, xs, ys)
reals = st.floats(-5, 5)


@st.composite
def isometries(draw):
    a, b, c = draw(reals), draw(reals), draw(reals)
    d = draw(reals)
    det = a * d - b * c
    if det <= 0.1:
        a, b, c, d = 1.0 + abs(a), b, 0.0, 1.0 + abs(d)
    return Isometry.normalized(a, b, c, d)


def test_distance_closed_form():
    assert hgeom.dist_h(HPoint(0, 1), HPoint(0, math.e)) == pytest.approx(1.0, rel=1e-14)
    # d(i, x + i) = 2 asinh(x / 2)
    assert hgeom.dist_h(HPoint(0, 1), HPoint(2.0, 1)) == pytest.approx(2 * math.asinh(1.0), rel=1e-14)


@given(points, points)
def test_distance_symmetric_nonnegative(p, q):
    d = hgeom.dist_h(p, q)
    assert d >= 0
    assert d == pytest.approx(hgeom.dist_h(q, p), rel=1e-12, abs=1e-12)


@given(points, points, points)
def test_triangle_inequality(p, q, r):
    assert hgeom.dist_h(p, r) <= hgeom.dist_h(p, q) + hgeom.dist_h(q, r) + 1e-9


@settings(max_examples=200)
@given(isometries(), points, points)
def test_isometry_invariance(Q, p, q):
    d = hgeom.dist_h(p, q)
    d2 = hgeom.dist_h(Q(p), Q(q))
    assert d2 == pytest.approx(d, rel=1e-7, abs=1e-7)


@given(isometries(), points)
def test_inverse_and_compose(Q, p):
    back = Q.inverse()(Q(p))
    assert hgeom.dist_h(back, p) < 1e-6
    assert hgeom.dist_h(Q.compose(Q.inverse())(p), p) < 1e-6


def test_determinant_checked():
    with pytest.raises(ValueError):
        Isometry(2.0, 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        Isometry.normalized(1.0, 0.0, 0.0, -1.0)


def _horo_limit(eta, a, b):
    if eta.is_infinite:
        far = HPoint(0.0, 1e9)
    else:
        far = HPoint(eta.value, 1e-9)
    return hgeom.dist_h(a, far) - hgeom.dist_h(b, far)


@given(points, points, st.one_of(st.just(None), st.floats(-3, 3)))
def test_horodistance_is_limit_of_distance_differences(a, b, q):
    eta = INF if q is None else BoundaryPt.at(q)
    if not eta.is_infinite and min(abs(a.x - q) + a.y, abs(b.x - q) + b.y) < 1e-2:
        return
    assert hgeom.horodist(eta, a, b) == pytest.approx(_horo_limit(eta, a, b), abs=1e-5)


@given(points, isometries())
def test_horodistance_covariance(a, Q):
    eta = BoundaryPt.at(0.7)
    lhs = hgeom.horodist(Q.boundary(eta), Q(a), Q(hgeom.I))
    assert lhs == pytest.approx(hgeom.horodist(eta, a), abs=1e-6)


@given(points, points)
def test_disk_roundtrip(p, c):
    d = hgeom.to_disk(p, c)
    assert d.radius < 1
    back = hgeom.from_disk(d, c)
    assert hgeom.dist_h(back, p) < 1e-6
    assert hgeom.to_disk(c, c).radius == pytest.approx(0.0, abs=1e-12)


@given(points, points)
def test_disk_radius_matches_distance(p, c):
    r = hgeom.to_disk(p, c).radius
    if r > 1 - 1e-9:
        return
    assert math.log((1 + r) / (1 - r)) == pytest.approx(hgeom.dist_h(p, c), rel=1e-6, abs=1e-9)


@given(points, st.one_of(st.just(None), st.floats(-5, 5)))
def test_canonical_isometry(z0, q):
    eta = INF if q is None else BoundaryPt.at(q)
    Q = hgeom.canonical_isometry(z0, eta)
    assert hgeom.dist_h(Q(z0), hgeom.I) < 1e-6
    v1, v2 = Q.boundary(eta).vec
    assert abs(v2) <= 1e-9 * abs(v1)


@given(points, st.floats(-5, 5), st.floats(0.1, 2), st.floats(0, 10))
def test_geodesic_speed_and_direction(z0, q, speed, t):
    eta = BoundaryPt.at(q)
    p = hgeom.geodesic_point(z0, eta, speed, t)
    assert hgeom.dist_h(z0, p) == pytest.approx(speed * t, abs=1e-6 * (1 + speed * t))
    # moving toward eta lowers the horocyclic distance at unit rate
    assert hgeom.horodist(eta, p, z0) == pytest.approx(-speed * t, abs=1e-6 * (1 + speed * t))


def test_geodesic_vectorised_matches_scalar():
    z0, eta = HPoint(0.3, 2.0), BoundaryPt.at(-1.0)
    t = np.linspace(0, 5, 7)
    x, y = hgeom.geodesic_xy(z0, eta, 0.5, t)
    for ti, xi, yi in zip(t, x, y):
        p = hgeom.geodesic_point(z0, eta, 0.5, ti)
        assert (xi, yi) == pytest.approx((p.x, p.y), rel=1e-12, abs=1e-12)


@given(points, points, st.floats(0, 1))
def test_geodesic_interpolate(p, q, f):
    m = hgeom.geodesic_interpolate(p, q, f)
    d = hgeom.dist_h(p, q)
    if d > 30:
        return
    assert hgeom.dist_h(p, m) == pytest.approx(f * d, abs=1e-6 * (1 + d))
    assert hgeom.dist_h(m, q) == pytest.approx((1 - f) * d, abs=1e-6 * (1 + d))


def test_invalid_points_rejected():
    with pytest.raises(ValueError):
        HPoint(0.0, 0.0)
    with pytest.raises(ValueError):
        HPoint(0.0, -1.0)
