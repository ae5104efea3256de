import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cexlab.characteristics import ap_components
from cexlab.dyadic import AdaptiveTree, DyadicInterval, from_array, to_array, zip_trees
from cexlab.large_step import F, G, LargeStepParams, build_quad, damage_shift_node
from cexlab.pipelines import (extend_to_line, hilbert_example, line_tree, mirror_node, direct_sum_example,
                              truncated_shift_damage, two_valued_seed, two_valued_weight, window_checks)

arrays = st.integers(1, 4).flatmap(
    lambda n: st.lists(st.floats(0.1, 10.0), min_size=2 ** n, max_size=2 ** n))


@given(arrays)
@settings(max_examples=25, deadline=None)
def test_mirror_and_line_tree(vals):
    t = from_array(vals)
    n = t.depth
    mir = AdaptiveTree(1, mirror_node(t.root), t.cap)
    assert to_array(mir, n) == list(reversed(vals))
    # cells -2, -1, 0, 1: translate on even cells, reflect on odd ones
    assert to_array(line_tree(t, 2), n + 2) == vals + vals[::-1] + vals + vals[::-1]


@given(arrays)
@settings(max_examples=25, deadline=None)
def test_extend_to_line_is_even_and_two_periodic(vals):
    t = from_array(vals)
    Fl = extend_to_line(t, W=2)
    xs = np.linspace(0.013, 0.987, 16)  # avoids dyadic breakpoints
    unit = Fl(xs)
    assert Fl(-xs) == pytest.approx(unit)  # reflection about 0
    assert Fl(2 - xs) == pytest.approx(unit)  # reflection about 1
    assert Fl(xs + 2) == pytest.approx(unit)
    assert Fl(np.array([-2.5, 3.5])).tolist() == [0.0, 0.0]
    with pytest.raises(ValueError):
        extend_to_line(t, W=0)


def test_window_checks_against_arrays():
    w = [1.0, 2.0, 4.0, 3.0]
    s = [1 / x for x in w]
    t = zip_trees(from_array(w), from_array(s))
    wc = window_checks(t, 2.0, m=2)
    # end cells of the unit copy: w gives |1 - 3| at j = 2, sigma at most |1 - 1/3|
    assert wc["integer_boundary_defect"] == pytest.approx(max(abs(3.0 - 1.0), abs(1 / 3 - 1.0)))
    halves = [zip_trees(from_array(w + w[::-1]), from_array(s + s[::-1]))]
    assert wc["ap_window"] == pytest.approx(ap_components(halves[0], 2.0)[0])
    sym = zip_trees(from_array([1.0, 2.0, 2.0, 1.0]), from_array([1.0, 0.5, 0.5, 1.0]))
    assert window_checks(sym, 2.0)["integer_boundary_defect"] == 0.0


def test_truncated_damage_converges_to_full():
    quad = build_quad(LargeStepParams(2.0, 4.0), "shift")
    full = damage_shift_node(quad.root, F, G)
    assert truncated_shift_damage(quad.root, quad.depth + 1) == pytest.approx(full, rel=1e-12)
    assert truncated_shift_damage(quad.root, 0) == 0.0


@pytest.mark.parametrize("allocation", ["measure", "geometric"])
def test_small_hilbert_example(allocation):
    rep, art = hilbert_example(M=3.0, K=1, allocation=allocation)
    assert rep.passed, rep.checks
    v = rep.values
    assert v["pairing"] == pytest.approx(v["main_term"] + v["cross_sum"], abs=1e-9)
    assert v["sum_abs_T"] <= v["eps_prime"]
    assert v["normalized_pairing"] > 0
    assert min(int(N) for N in v["frequencies"]) >= 3


def test_hilbert_example_validation():
    with pytest.raises(ValueError):
        hilbert_example(M=1.0)


@pytest.mark.parametrize("p,Q", [(2.0, 4.0), (3.0, 16.0)])
def test_two_valued_seed(p, Q):
    seed, (a1, b1, a2, b2) = two_valued_seed(p, Q)
    for a, b in ((a1, b1), (a2, b2)):
        assert a * b ** (p - 1) == pytest.approx(1.0, rel=1e-12)
    assert ap_components(seed, p)[0] == pytest.approx(Q, rel=1e-12)
    with pytest.raises(ValueError):
        two_valued_seed(p, 1.0)


def test_two_valued_weight_small():
    rep, art = two_valued_weight(2.0, 4.0, d=4)
    c = rep.checks
    assert c["two_values"] and c["characteristic_window"] and c["window_matches_unit"] and c["seed_characteristic"]
    assert rep.leftover_measure <= 2 ** -6
    assert rep.values["d_chosen"] == 4


def test_direct_sum_small_copies():
    rep, art = direct_sum_example(k_max=3, K=1, M_of_k=lambda k: 3.0 + k)
    c = rep.checks
    assert c["unit_means"] and c["boundary_averages"] and c["copies_pass"]
    assert rep.ap_dyadic <= 1.2
    glued = art["glued"]
    assert glued.mean == pytest.approx((1.0, 1.0), abs=1e-14)
    for k in (1, 2, 3):
        node = glued.node_at(DyadicInterval(k, 1))
        assert node.avg == pytest.approx((1.0, 1.0), abs=1e-14)
    with pytest.raises(ValueError):
        direct_sum_example(k_max=0)
