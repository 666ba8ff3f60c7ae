import math

import numpy as np
import pytest
from scipy import stats

from circsine import couple, dist, hgeom, paths


def test_single_step_rejects_small_gamma():
    with pytest.raises(ValueError):
        couple.single_step(paths.HypBMPath(1), 0.0, 1.0, 0.5)


@pytest.mark.parametrize("gamma", [1.5, 4.0, 10.0, 60.0])
def test_single_step_invariants(gamma):
    t = dist.time_for_gamma(gamma)
    for seed in range(40):
        res = couple.single_step(paths.HypBMPath(seed), 0.0, gamma, paths.RngStreams(seed).uniform("U", 0))
        assert res.sigma >= t
        assert res.rho >= res.r
        assert res.hit_exact == (res.sigma == t)
        assert 0 <= hgeom.to_disk(res.endpoint).radius ** 2 < 1
        assert hgeom.dist_h(hgeom.I, res.endpoint) == pytest.approx(res.rho, abs=1e-8)


def test_single_step_law_small_sample():
    gamma = 6.0
    r2 = []
    for i in range(1500):
        res = couple.single_step(paths.HypBMPath(10_000 + i), 0.0, gamma, paths.RngStreams(3).uniform("U", 0, i))
        r2.append(hgeom.to_disk(res.endpoint).radius ** 2)
    assert stats.kstest(r2, stats.beta(1, gamma).cdf).pvalue > 0.01


def test_single_step_replay_with_other_continuation():
    # the stopping time depends only on the path up to sigma
    for seed in range(15):
        bm = paths.HypBMPath(seed)
        u = paths.RngStreams(seed).uniform("U", 1)
        res = couple.single_step(bm, 0.2, 10.0, u)
        other = bm.fork(0.2 + res.sigma, seed=seed + 1000)
        again = couple.single_step(other, 0.2, 10.0, u)
        assert again.sigma == res.sigma and again.endpoint == res.endpoint


def test_tau_array_replay_with_other_continuation():
    bm = paths.HypBMPath(77)
    st = paths.RngStreams(77)
    arr = couple.build_tau_array(bm, st, 32, 2.0, resolve_limit=False)
    other = bm.fork(arr.tau(1), seed=4242)
    again = couple.build_tau_array(other, st, 32, 2.0, resolve_limit=False)
    assert np.array_equal(arr.taus, again.taus)


@pytest.mark.parametrize("n,beta", [(1, 2.0), (2, 1.0), (16, 2.0), (40, 4.0)])
def test_tau_array_structure(n, beta):
    bm = paths.HypBMPath(n)
    arr = couple.build_tau_array(bm, paths.RngStreams(n), n, beta)
    assert arr.tau(n) == 0.0 and arr.tau(0) == math.inf
    assert np.all(np.diff(arr.taus[1:][::-1]) > 0)
    for k in range(1, n + 1):
        p = bm.at(arr.tau(k))
        assert hgeom.dist_h(p, arr.point(k)) < 1e-9
    assert arr.walk_points()[0] == hgeom.I
    kc = couple.k_cut(n, beta)
    assert all(arr.regime[k] == "tail" for k in range(1, min(kc, n)))
    assert all(arr.regime[k] in ("fixed", "fixed-hit") for k in range(kc, n))
    assert arr.eta_radius < 1e-4


def test_tail_steps_equal_drawn_lengths_and_do_not_depend_on_n():
    beta = 2.0
    for seed in range(5):
        st = paths.RngStreams(seed)
        by_n = {}
        for n in (8, 16, 32):
            arr = couple.build_tau_array(paths.HypBMPath(seed), st, n, beta, kcut=n, resolve_limit=False)
            by_n[n] = arr.steps
            for k in range(1, n):
                xi = dist.beta_one_inverse(st.uniform("xi", k), beta * k / 2)
                assert arr.steps[k] == pytest.approx(float(dist.xi_to_length(xi)), abs=1e-8)
        # the drawn length of step k comes from the stream keyed by k alone
        for k in range(1, 8):
            assert by_n[8][k] == pytest.approx(by_n[32][k], abs=1e-8)


def test_k_cut():
    assert couple.k_cut(512, 2.0) == math.ceil(math.log(512) ** 2)
    assert couple.k_cut(2, 0.1) == 30
    assert couple.k_cut(1, 2.0) == 2


def test_coupled_pair_starts_together():
    bm = paths.HypBMPath(12)
    pair = couple.coupled_pair(bm, paths.RngStreams(12), 32, 2.0)
    for path in (pair.continuous, pair.discrete):
        x, y = path(np.array([0.0]))
        assert (float(x[0]), float(y[0])) == (0.0, 1.0)
    assert pair.eta0.is_infinite
    assert len(pair.discrete.breaks) == 33


def test_deviation_report_rows():
    bm = paths.HypBMPath(13)
    pair = couple.coupled_pair(bm, paths.RngStreams(13), 64, 2.0)
    rows = couple.deviation_report(pair, np.array([0.0, 0.5, 0.9]))
    assert rows[0]["value"] == 0.0 and rows[0]["ratio"] == 0.0
    assert all(math.isfinite(r["envelope"]) for r in rows)
    clock = couple.clock_report(pair.taus)
    assert clock[-1]["k"] == 64 and clock[-1]["value"] == 0.0
