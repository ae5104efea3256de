import math

import pytest
from hypothesis import given, settings, strategies as st

from cexlab.appendix import (_transfer_ok, expected_hitting_time, hyperbola_report, lower_hyperbola_solve,
                             transfer_delta, transfer_report, transfer_eps, two_weight_counterexample,
                             upper_hyperbola_bound, upper_hyperbola_search, walk_hit_monte_carlo,
                             walk_hit_probability, walks_report)


@given(st.integers(1, 12), st.integers(1, 12))
@settings(max_examples=30, deadline=None)
def test_walk_gamblers_ruin(a, b):
    assert walk_hit_probability(a, b) == pytest.approx(a / (a + b), abs=1e-12)
    assert expected_hitting_time(a, b) == pytest.approx(a * b, rel=1e-10)


def test_walk_monte_carlo_deterministic_across_threads():
    one = walk_hit_monte_carlo(3, 5, 20_000, seed=11, threads=1)
    many = walk_hit_monte_carlo(3, 5, 20_000, seed=11, threads=4)
    assert one == many
    est, se = one
    assert abs(est - 3 / 8) <= 4 * se
    with pytest.raises(ValueError):
        walk_hit_probability(0, 2)


def test_lower_hyperbola_reference_point():
    # 1/b + 1/(2 - b) = 2.5 gives b^2 - 2b + 0.8 = 0
    a1, b1, a2, b2 = lower_hyperbola_solve(1.25, 1.0, 2.0)
    assert b1 == pytest.approx(1 - math.sqrt(0.2), rel=1e-12)
    assert b2 == pytest.approx(1 + math.sqrt(0.2), rel=1e-12)
    assert a1 * b1 == pytest.approx(1.0) and a2 * b2 == pytest.approx(1.0)


@given(st.floats(1.1, 6.0), st.floats(-3.0, 3.0), st.floats(0.0, 3.0))
@settings(max_examples=50, deadline=None)
def test_lower_hyperbola_identities(p, ly, lx):
    y = math.exp(ly)
    x = y ** (1 - p) * math.exp(lx)
    a1, b1, a2, b2 = lower_hyperbola_solve(x, y, p)
    assert a1 * b1 ** (p - 1) == pytest.approx(1.0, rel=1e-9)
    assert a2 * b2 ** (p - 1) == pytest.approx(1.0, rel=1e-9)
    assert (a1 + a2) / 2 == pytest.approx(x, rel=1e-9)
    assert (b1 + b2) / 2 == pytest.approx(y, rel=1e-12)


def test_lower_hyperbola_rejects_points_below():
    with pytest.raises(ValueError):
        lower_hyperbola_solve(0.5, 1.0, 2.0)


def test_upper_hyperbola():
    sup, ok = upper_hyperbola_bound(2.0, 0.5, 0.5, 2.0, 2.0, 25 / 16)
    # symmetric chord: the maximum sits at the midpoint (1.25, 1.25)
    assert ok and sup == pytest.approx(25 / 16, rel=1e-9)
    with pytest.raises(ValueError):
        upper_hyperbola_bound(2.0, 2.0, 0.5, 2.0, 2.0, 1.0)
    for p in (1.5, 2.0, 3.0):
        assert upper_hyperbola_search(p, 300, 0)["worst_ratio"] <= 2 ** p


def test_two_weight_example():
    rep = two_weight_counterexample(2.0)
    assert rep.passed, rep.checks
    # |H(f sigma)|^p w ~ pi^-p / t, so the L^p norm grows like pi^-p ln T
    assert rep.values["slope"] == pytest.approx(1.0, abs=0.01)
    # t^2 |H(1_[0,1))(t)|^2 decreases to pi^-2 from above
    assert rep.values["tail_ratio_min"] == pytest.approx(math.pi ** -2, rel=1e-5)
    assert rep.values["tail_ratio_min"] >= math.pi ** -2
    assert 1.0 <= rep.values["sampled_ap"] < math.inf
    with pytest.raises(ValueError):
        two_weight_counterexample(1.0)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_transfer_constants(p):
    eps = transfer_eps(p)
    assert (1 + eps) ** (p / 2) == pytest.approx(1.25, rel=1e-14)
    delta = transfer_delta(eps)
    assert 0 < delta < 0.25 and _transfer_ok(delta, eps) and not _transfer_ok(delta * 1.001, eps)


@pytest.mark.parametrize("report", [walks_report, hyperbola_report, transfer_report])
def test_reports_pass(report):
    rep = report(0)
    assert rep.passed, rep.checks
