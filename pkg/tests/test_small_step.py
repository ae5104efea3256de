from fractions import Fraction

import pytest
from hypothesis import assume, given, settings, strategies as st

from cexlab.appendix import expected_hitting_time, walk_hit_probability
from cexlab.characteristics import ap_components, smoothness_node
from cexlab.dyadic import ROOT, AdaptiveTree, Branch, Leaf, distribution, frozen_measure, from_array, node_haar
from cexlab.large_step import F, G, S, W, LargeStepParams, build_quad, damage_mult_node, damage_shift_node
from cexlab.small_step import (default_cap, intermediate_mass, small_step_transform, small_step_triangle_transform,
                               stopping_family, triangle_stopping)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_stopping_masses(d):
    fam = stopping_family(ROOT, d)
    assert fam.total() == 1
    left = float(fam.leftover)
    assert left <= 1e-5
    assert abs(float(fam.plus) - 0.5) <= left
    assert fam.plus == fam.minus  # symmetric walk
    assert abs(intermediate_mass(ROOT, d) - expected_hitting_time(d)) <= 1e-3 * d * d
    assert abs(intermediate_mass(ROOT, d) - d * d) <= 1e-3 * d * d


@pytest.mark.parametrize("d", [1, 2, 4])
def test_stopping_intervals_match_masses(d):
    fam = stopping_family(ROOT, d, depth_cap=12)
    ivs = fam.intervals()
    assert sum((I.measure for I in ivs["plus"]), Fraction(0)) == fam.plus
    assert sum((I.measure for I, _ in ivs["leftover"]), Fraction(0)) == fam.leftover
    # the hit probability of the uncapped walk is the absorbing-chain value
    assert float(fam.plus) <= walk_hit_probability(d, d) + 1e-15


def test_triangle_stopping_even_generations():
    fam = triangle_stopping(ROOT, 2, depth_cap=12)
    assert fam.total() == 1
    for name, ivs in fam.intervals().items():
        for I in ivs:
            J = I[0] if isinstance(I, tuple) else I
            assert J.gen % 2 == 0


def _pair_tree(a, b, c, e):
    """Two-level positive tree with leaves a, b | c, e."""
    return from_array([a, b, c, e])


@given(st.lists(st.floats(0.1, 10.0), min_size=4, max_size=4), st.sampled_from([2, 4, 8]))
@settings(max_examples=25, deadline=None)
def test_sibling_ratio_bound(vals, d):
    t = _pair_tree(*vals)
    out = small_step_transform(t, d)
    s_in = smoothness_node(t.root, "dyadic")
    s_out = smoothness_node(out.root, "dyadic")
    assert s_out <= 1 + (s_in - 1) / d + 1e-12


@given(st.lists(st.floats(0.1, 10.0), min_size=4, max_size=4), st.sampled_from([2, 4]))
@settings(max_examples=20, deadline=None)
def test_rearrangement_of_level_sets(vals, d):
    assume(len(set(vals)) == 4)
    t = _pair_tree(*vals)
    out = small_step_transform(t, d)
    din, dout = distribution(t), distribution(out)
    lost = 0.0
    for v, m in din.items():
        got = dout.get(v, 0.0)
        assert got <= m + 1e-15
        lost += m - got
    assert lost == pytest.approx(frozen_measure(out), abs=1e-12)
    assert out.mean[0] == pytest.approx(t.mean[0], rel=1e-12)


def test_leftover_matches_stopping_family():
    t = from_array([1.0, 3.0])
    out = small_step_transform(t, 3, depth_cap=10)
    assert frozen_measure(out) == pytest.approx(float(stopping_family(ROOT, 3, 10).leftover), abs=1e-15)


def test_d_one_is_identity():
    t = from_array([1.0, 2.0, 5.0, 3.0])
    out = small_step_transform(t, 1)
    assert out.root.left.avg == t.root.left.avg and out.depth == t.depth


def test_damage_equality_and_characteristic():
    p = 2.0
    quad = build_quad(LargeStepParams(p, 4.0), "mult")
    out = small_step_transform(quad, 4)
    din = damage_mult_node(quad.root, F, G)
    dout = damage_mult_node(out.root, F, G)
    leftover = frozen_measure(out)
    assert leftover < 0.02
    assert abs(dout / din - 1) <= 2 * leftover + 1e-12
    assert ap_components(out, p)[0] <= 2 ** p * ap_components(quad, p)[0]


def _odd_generation_max(root, comps):
    seen, worst, stack = set(), 0.0, [(root, 0)]
    while stack:
        node, par = stack.pop()
        if (id(node), par) in seen or node.__class__ is Leaf:
            continue
        seen.add((id(node), par))
        if par:
            h = node_haar(node)
            worst = max(worst, max(abs(h[c]) for c in comps))
        stack += [(node.left, 1 - par), (node.right, 1 - par)]
    return worst


def test_triangle_protects_shift_pairing():
    quad = build_quad(LargeStepParams(2.0, 4.0), "shift")
    out = small_step_triangle_transform(quad, 2)
    assert _odd_generation_max(out.root, (W, S, G)) <= 1e-12 * abs(quad.root.avg[W])
    ratio = damage_shift_node(out.root, F, G) / damage_shift_node(quad.root, F, G)
    assert ratio >= 0.2 - 1e-6


def test_triangle_shape_rejected():
    bad = AdaptiveTree(4, Branch(Leaf((1.0, 1.0, 0.0, 0.0)),
                                 Branch(Leaf((1.0, 1.0, 0.0, 0.0)),
                                        Branch(Leaf((2.0, 1.0, 0.0, 0.0)), Leaf((1.0, 2.0, 0.0, 0.0))))))
    with pytest.raises(ValueError):
        small_step_triangle_transform(bad, 2)
    with pytest.raises(ValueError):
        small_step_transform(bad, 0)


def test_default_cap_grows_quadratically():
    assert default_cap(8) == 8 * 8 ** 2 + 16 and default_cap(3) == 88
