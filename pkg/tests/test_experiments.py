import numpy as np
import pytest

from circsine import experiments as E


def run(command, **overrides):
    cfg = E.default_config(command, **overrides)
    cfg.validate()
    return E.COMMANDS[command](cfg)


def criteria(rep):
    return {c.criterion for c in rep.checks if c.criterion is not None}


def test_default_config_rejects_unknown_command():
    with pytest.raises(E.UsageError):
        E.default_config("nope")


def test_quad_grid_aligns_with_pieces():
    g = E.quad_grid(E.default_config("converge", nodes_target=256), multiple_of=8, extra_breaks=(0.9,))
    t_edges = 1.0 - g.edges
    for j in range(1, 8):
        assert np.any(np.isclose(t_edges, j / 8, rtol=0, atol=1e-15))
    assert np.any(np.isclose(t_edges, 0.9))


def test_k_buckets_cover_all_steps():
    buckets = E._k_buckets(40)
    covered = [k for lo, hi in buckets for k in range(lo, hi + 1)]
    assert covered == sorted(set(covered))
    assert covered[0] == 1 and covered[-1] == 39


def test_gap_density_sampler_range():
    x = E.sample_gap_density(np.random.default_rng(0), 2.0, 2000)
    assert np.all((x >= 0) & (x <= np.pi))
    # density proportional to sin^2(theta/2) has mean pi/2 + 2/pi
    assert np.mean(x) == pytest.approx(np.pi / 2 + 2 / np.pi, abs=0.06)


def test_smoke_couple_diag():
    rep = run("couple-diag", n_list=[16, 32], replicas=2, step_replicas=300, walk_n=16, walk_replicas=100)
    assert {"single_step", "walk_buckets", "walk_per_k", "deviation", "clock"} <= set(rep.tables)
    assert criteria(rep) == {3, 4}
    assert not rep.numerical_failure


def test_smoke_spectrum():
    rep = run("spectrum", dual_n=4, dual_nodes=2000, dual_replicas=2, law_replicas=100,
              lln_replicas=2, nodes_target=256)
    assert {"dual_method", "gap_law", "sine_spacing"} <= set(rep.tables)
    assert criteria(rep) == {5, 6, 11}
    assert rep.summary["dual_period_over_2pi_n"] == pytest.approx(1.0, abs=1e-6)
    assert rep.summary["detected_period_over_2pi"] == pytest.approx(2.0, abs=1e-6)


def test_smoke_converge():
    rep = run("converge", n_list=[8, 16, 32], replicas=2, nodes_target=256)
    assert criteria(rep) == {7, 8, 10}
    assert "slope" in rep.summary and "converge_median" in rep.tables
    for r in rep.tables["certificates"].rows:
        assert r["trunc_sine"] <= r["cert_trunc_sine"]
        assert r["trunc_circ"] <= r["cert_trunc_circ"]
        assert r["approx"] <= r["cert_approx"]


def test_converge_single_n_has_no_slope():
    rep = run("converge", n_list=[16], replicas=2, nodes_target=128)
    assert "slope" not in rep.summary
    assert 8 not in criteria(rep)


def test_smoke_betadep():
    rep = run("betadep", replicas=2, deltas=[0.01, 0.1], nodes_target=128)
    assert criteria(rep) == {9}
    assert rep.summary["fit_constant"] > 0


def test_smoke_validate():
    rep = run("validate", replicas=3)
    assert criteria(rep) == {12}
    assert {"tail_bounds", "escape", "modulus"} <= set(rep.tables)


def test_validate_tail_bounds_hold_at_five_sigma():
    rep = run("validate", replicas=3, confidence_sigma=5.0)
    assert all(c.passed for c in rep.checks if c.criterion == 12)


def test_validate_rejects_zero_replicas():
    with pytest.raises(ValueError):
        run("validate", replicas=0)


def test_smoke_figure_deterministic():
    a = run("figure", figure_n=6)
    b = run("figure", figure_n=6)
    assert a.figures["figure"].render() == b.figures["figure"].render()
    assert a.exit_code() == 0
