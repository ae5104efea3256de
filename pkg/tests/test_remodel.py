import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cexlab.characteristics import ap_components
from cexlab.dyadic import ROOT, DyadicInterval, distribution, frozen_measure, from_array, to_array, zip_trees
from cexlab.large_step import damage_mult_node
from cexlab.remodel import (MIN_FREQUENCY, Schedule, averaged_counterparts, boundary_averages, decomposition_defect,
                            enumerate_starting, identity_defect, node_average_set, periodise, quasi_periodise_avg,
                            remodel_iterate, second_diff)

arrays = st.integers(2, 4).flatmap(
    lambda n: st.lists(st.floats(-100.0, 100.0), min_size=2 ** n, max_size=2 ** n))


def _quad(seed, n=8):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.2, 5.0, n)
    s = 1 / w * rng.uniform(1.0, 2.0, n)
    f, g = rng.normal(size=n), rng.normal(size=n)
    return zip_trees(*(from_array(list(a)) for a in (w, s, f, g)))


@given(arrays, st.integers(0, 4))
@settings(max_examples=30, deadline=None)
def test_periodise_tiles(vals, N):
    t = from_array(vals)
    n = t.depth
    out = to_array(periodise(t, ROOT, N), n + N)
    assert out == pytest.approx(list(np.tile(vals, 2 ** N)), abs=1e-9)


@given(st.integers(3, 4).flatmap(lambda n: st.lists(st.floats(-100.0, 100.0), min_size=2 ** n, max_size=2 ** n)))
@settings(max_examples=30, deadline=None)
def test_second_diff_against_arrays(vals):
    t = from_array(vals)
    I = DyadicInterval(1, 1)
    a = np.array(vals)
    half = a[len(a) // 2:]
    q = half.reshape(4, -1).mean(axis=1) - half.mean()
    want = [0.0] * 4 + list(q)
    assert to_array(second_diff(t, I), 3) == pytest.approx(want, abs=1e-9)


@given(arrays, st.integers(MIN_FREQUENCY, 6))
@settings(max_examples=30, deadline=None)
def test_quasi_periodisation_layout_and_identity(vals, N):
    t = from_array(vals)
    a = np.array(vals)
    quarters = a.reshape(4, -1).mean(axis=1)
    got = to_array(quasi_periodise_avg(t, ROOT, N), N + 2)
    want = [a.mean()] * 4 + list(np.tile(quarters, 2 ** N - 2)) + [a.mean()] * 4
    assert got == pytest.approx(want, abs=1e-9)
    assert identity_defect(t.root, N) <= 1e-12 * max(1.0, float(np.max(np.abs(a))))


@pytest.mark.parametrize("seed", range(4))
def test_remodel_is_rearrangement_with_same_averages(seed):
    q = _quad(seed)
    state = remodel_iterate(q, Schedule(), K=2, chase_bits=12, limit=True)
    out = state.tree
    din, dout = distribution(q), distribution(out)
    assert set(din) == set(dout)
    assert max(abs(din[k] - dout[k]) for k in din) <= 1e-12
    assert node_average_set(out.root) <= node_average_set(q.root)
    assert ap_components(out, 2.0)[0] == pytest.approx(ap_components(q, 2.0)[0], rel=1e-12)
    assert damage_mult_node(out.root, 2, 3) == pytest.approx(damage_mult_node(q.root, 2, 3), rel=1e-10)
    assert max(state.stats["decomposition_defect"]) <= 1e-12 * 10


@pytest.mark.parametrize("seed", range(3))
def test_boundary_averages_equal_root(seed):
    q = _quad(seed)
    state = remodel_iterate(q, Schedule(), K=2, chase_bits=12)
    for I, avg in boundary_averages(state, 12):
        assert avg == pytest.approx(q.root.avg, abs=1e-12), I


def test_limit_surrogate_freezes_residual_cells():
    q = _quad(5)
    state = remodel_iterate(q, Schedule(), K=2, chase_bits=12, limit=True)
    assert 0 < frozen_measure(state.limit) <= state.residual_measure
    assert state.residual_measure <= 2 ** -10
    assert frozen_measure(state.tree) == 0
    assert state.limit.mean == pytest.approx(q.root.avg, abs=1e-12)


def test_averaged_counterparts_start_and_telescope():
    q = _quad(1)
    xs = averaged_counterparts(q, Schedule(), K=2, chase_bits=12)
    assert len(xs) == 3 and xs[0].mean == q.root.avg
    for x in xs:
        assert x.mean == pytest.approx(q.root.avg, abs=1e-12)
    assert max(decomposition_defect(q, Schedule(), 2, 12)) <= 1e-11


def test_enumeration_reproduces_schedule():
    q = _quad(2)
    pick = {}

    def choose(si, previous):
        N = 3 + (len(previous) % 2)
        pick[si.interval.key] = N
        return N

    starting = enumerate_starting(q.root, 2, choose, chase_bits=10, chase_levels=1)
    keys = [(s.interval.gen, s.interval.idx) for s in starting]
    assert keys == sorted(keys)
    sched = Schedule(overrides={k: v for k, v in pick.items()})
    state = remodel_iterate(q, sched, K=2, chase_bits=10, chase_levels=1)
    recorded = {s.interval.key: s.N for s in state.starting}
    chosen = {s.interval.key: s.N for s in starting}
    assert recorded == chosen


def test_schedule_validation():
    with pytest.raises(ValueError):
        Schedule(default=2).frequency(None, 1, 0)
    with pytest.raises(ValueError):
        remodel_iterate(_quad(0), K=0)
    assert Schedule.from_json({"default": 4, "1:0": 5}).overrides == {"1:0": 5}
