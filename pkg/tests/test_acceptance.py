"""Acceptance criteria 1-12.

Each criterion prints one PASS/FAIL line.  Floors marked "locked" were
measured on the first green run and guard against regressions.  Criteria 10
and 11 contain one part that does not hold at desk scale; that part is a
strict xfail, the remaining parts must pass.
"""
import math
import time

import numpy as np
import pytest
from scipy import integrate, stats

from cexlab.appendix import (PowerPair, hyperbola_report, lower_hyperbola_solve, two_weight_counterexample,
                             walk_hit_probability)
from cexlab.characteristics import ap_components, smoothness_node
from cexlab.dyadic import ROOT, distribution, frozen_measure, from_array, node_haar, zip_trees
from cexlab.hilbert import hilbert_lemma_report
from cexlab.large_step import (F, G, S, W, LargeStepParams, build_quad, damage_mult_node, damage_shift_node,
                               large_step_report)
from cexlab.pipelines import hilbert_example, direct_sum_example, two_valued_weight
from cexlab.remodel import Schedule, boundary_averages, node_average_set, remodel_iterate
from cexlab.small_step import intermediate_mass, small_step_transform, small_step_triangle_transform, \
    stopping_family

VERDICTS: dict[int, str] = {}

# locked floors and ceilings
LARGE_STEP_FLOOR = 1.40  # normalized damage / M; measured 1.421 .. 1.491
TRIANGLE_FLOOR = 0.2 - 1e-6  # measured 0.318 (d = 4), 0.299 (d = 8)
HILBERT_FLOOR = 0.025  # normalized pairing / M; measured 0.0530 (M = 4), 0.0288 (M = 8)
DIRECT_SUM_AP_CEIL = 1.2  # measured 1.122
DIRECT_SUM_FLOOR = 0.015  # ratio_k / k^(1/2); measured 0.0646, 0.0354, 0.0243, 0.0180
TWO_WEIGHT_CEIL = {1.5: 1.2, 2.0: 2.05, 3.0: 12.0}  # measured 1.155, 1.997, 11.74


def verdict(n: int, ok: bool, detail: str):
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    VERDICTS[n] = line
    print(line)
    assert ok, line


def _timed(fn, *args, **kw):
    t = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t


# --------------------------------------------------------------------------


def test_criterion_01_large_step_growth():
    t0 = time.perf_counter()
    Ms = [4.0, 8.0, 16.0, 32.0]
    raw, norm = [], []
    for M in Ms:
        quad = build_quad(LargeStepParams(2.0, M))
        raw.append(damage_mult_node(quad.root, F, G))
        norm.append(large_step_report(LargeStepParams(2.0, M)).values["normalized_damage"])
    elapsed = time.perf_counter() - t0
    slope = float(np.polyfit(np.log(Ms), np.log(raw), 1)[0])
    floor = min(n / M for n, M in zip(norm, Ms))
    ok = abs(slope - 2.0) <= 0.2 and floor >= LARGE_STEP_FLOOR and elapsed < 1.0
    verdict(1, ok, f"slope={slope:.4f} min(normalized/M)={floor:.4f} time={elapsed:.2f}s")


def test_criterion_02_characteristic_window():
    t0 = time.perf_counter()
    worst = []
    ok = True
    for p in (1.5, 2.0, 3.0):
        for M in (4.0, 16.0):
            ap = ap_components(build_quad(LargeStepParams(p, M)), p)[0]
            ok &= M <= ap <= 4 * M * math.e
            worst.append(ap / M)
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 1.0
    verdict(2, ok, f"ap/M in [{min(worst):.3f}, {max(worst):.3f}] (window [1, {4 * math.e:.3f}]) time={elapsed:.2f}s")


def test_criterion_03_hyperbola_truncation():
    rep = hyperbola_report(0)
    a1, b1, a2, b2 = lower_hyperbola_solve(1.25, 1.0, 2.0)
    # 1/b + 1/(2 - b) = 5/2 is the quadratic b^2 - 2b + 4/5 = 0
    ref = abs(b1 - (1 - math.sqrt(0.2))) <= 1e-10 and abs(b2 - (1 + math.sqrt(0.2))) <= 1e-10
    ok = rep.checks["lower_identities"] and ref and abs(a1 * b1 - 1) <= 1e-10 and abs((a1 + a2) / 2 - 1.25) <= 1e-10
    verdict(3, ok, f"residual={rep.values['lower_worst_residual']:.2e} b1={b1:.12f}")


def test_criterion_04_small_step_generic():
    p = 2.0
    quad = build_quad(LargeStepParams(p, 4.0), "mult")
    out, elapsed = _timed(small_step_transform, quad, 8)
    leftover = frozen_measure(out)
    rel = abs(damage_mult_node(out.root, F, G) / damage_mult_node(quad.root, F, G) - 1)
    s_in = max(smoothness_node(quad.root, "dyadic", c) for c in (W, S))
    s_out = max(smoothness_node(out.root, "dyadic", c) for c in (W, S))
    ap_in, ap_out = ap_components(quad, p)[0], ap_components(out, p)[0]
    ok = (leftover < 1e-3 and rel <= 2e-3 and s_out <= 1 + (s_in - 1) / 8 + 1e-12
          and ap_out <= 2 ** p * ap_in and elapsed < 10)
    verdict(4, ok, f"leftover={leftover:.2e} damage_rel={rel:.2e} S_out={s_out:.4f} "
                   f"bound={1 + (s_in - 1) / 8:.4f} ap_out/ap_in={ap_out / ap_in:.3f} time={elapsed:.2f}s")


def test_criterion_05_stopping_laws():
    ok, parts = True, []
    for d in (1, 2, 3):
        fam = stopping_family(ROOT, d, depth_cap=120)
        stopped = float(fam.stopped)
        plus = float(fam.plus)
        mass = intermediate_mass(ROOT, d)
        ok &= abs(stopped - 1) <= 1e-6 and abs(plus - 0.5) <= 1e-6 and abs(mass - d * d) <= 1e-3
        parts.append(f"d={d}: 1-stopped={1 - stopped:.1e} mass={mass:.6f}")
    for a, b in ((1, 1), (1, 2), (3, 5)):
        ok &= abs(walk_hit_probability(a, b) - a / (a + b)) <= 1e-12
    verdict(5, ok, "; ".join(parts))


def _odd_generation_max(root, comps):
    seen, worst, stack = set(), 0.0, [(root, 0)]
    while stack:
        node, par = stack.pop()
        if (id(node), par) in seen or node.__class__.__name__ == "Leaf":
            continue
        seen.add((id(node), par))
        if par:
            h = node_haar(node)
            worst = max(worst, max(abs(h[c]) for c in comps))
        stack += [(node.left, 1 - par), (node.right, 1 - par)]
    return worst


def test_criterion_06_triangle_variant():
    quad = build_quad(LargeStepParams(2.0, 4.0), "shift")
    base = damage_shift_node(quad.root, F, G)
    scale = max(abs(v) for v in quad.root.avg)
    ok, parts = True, []
    for d in (4, 8):
        out = small_step_triangle_transform(quad, d)
        odd = _odd_generation_max(out.root, (W, S, G))
        ratio = damage_shift_node(out.root, F, G) / base
        ok &= odd <= 1e-12 * scale and ratio >= TRIANGLE_FLOOR
        parts.append(f"d={d}: odd={odd:.1e} ratio={ratio:.4f}")
    verdict(6, ok, "; ".join(parts))


def _cascade(delta, depth, rng):
    """Positive cell values with sibling ratios at most 1 + delta."""
    a = np.ones(1)
    t = delta / (2 + delta)
    for _ in range(depth):
        u = rng.uniform(-t, t, len(a))
        a = np.stack([a * (1 - u), a * (1 + u)], 1).ravel()
    return a


def test_criterion_07_remodel_invariants():
    t0 = time.perf_counter()
    p = 2.0
    quad = build_quad(LargeStepParams(p, 4.0), "mult")
    st = remodel_iterate(quad, Schedule(), K=2)
    out = st.tree
    din, dout = distribution(quad), distribution(out)
    multiset = set(din) == set(dout) and max(abs(din[k] - dout[k]) for k in din) <= 1e-12
    avg_sets = node_average_set(out.root) <= node_average_set(quad.root)
    boundary = max(max(abs(x - y) for x, y in zip(a, quad.root.avg)) for _, a in boundary_averages(st))
    dmg = abs(damage_mult_node(out.root, F, G) - damage_mult_node(quad.root, F, G))
    ap_same = ap_components(out, p)[0] == ap_components(quad, p)[0]
    rng = np.random.default_rng(2024)
    smooth_ok, worst = True, 0.0
    for delta in (0.05, 0.1, 0.2, 0.5, 1.0):
        w = _cascade(delta, 6, rng)
        tree = zip_trees(from_array(list(w)), from_array(list(1 / w)))
        s_in = max(smoothness_node(tree.root, "dyadic", c) for c in (0, 1))
        rs = remodel_iterate(tree, Schedule(), K=2, chase_bits=20, limit=True)
        for t in (rs.tree, rs.limit):
            ssd = max(smoothness_node(t.root, "strong_dyadic", c) for c in (0, 1))
            worst = max(worst, math.log(ssd) / math.log(s_in))
            smooth_ok &= ssd <= s_in ** 3 * (1 + 1e-12)
    elapsed = time.perf_counter() - t0
    ok = multiset and avg_sets and boundary <= 1e-12 and dmg <= 1e-12 * damage_mult_node(quad.root, F, G) \
        and ap_same and smooth_ok and elapsed < 30
    verdict(7, ok, f"boundary={boundary:.1e} damage_diff={dmg:.1e} ap_equal={ap_same} "
                   f"max log S^sd/log S^d={worst:.3f} (bound 3) time={elapsed:.2f}s")


def test_criterion_08_hilbert_engine():
    rep = hilbert_lemma_report(seed=0, pairs=50)
    v = rep.values
    verdict(8, rep.passed, f"c={v.get('c', float('nan')):.10f} checks={sum(rep.checks.values())}/{len(rep.checks)}")


def test_criterion_09_end_to_end_hilbert():
    ok, parts = True, []
    t0 = time.perf_counter()
    for M in (4.0, 8.0):
        rep, _ = hilbert_example(p=2.0, M=M, K=2)
        v = rep.values
        c = rep.checks
        ok &= (c["decomposition_identity"] and c["cross_terms_within_eps"] and c["main_term_vs_damage"]
               and v["ratio_to_M"] >= HILBERT_FLOOR and rep.passed)
        parts.append(f"M={M:g}: normalized={v['normalized_pairing']:.4f} ratio={v['ratio_to_M']:.4f} "
                     f"sum|T|={v['sum_abs_T']:.3f}<=eps'={v['eps_prime']:.2f}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300
    verdict(9, ok, "; ".join(parts) + f" time={elapsed:.0f}s")


@pytest.fixture(scope="module")
def direct_sum():
    rep, _ = direct_sum_example(p=2.0, k_max=4, K=2)
    return rep


def test_criterion_10_direct_sum_floors(direct_sum):
    rep = direct_sum
    v = rep.values
    ok = (rep.checks["unit_means"] and rep.checks["boundary_averages"] and rep.checks["copies_pass"]
          and rep.ap_dyadic <= DIRECT_SUM_AP_CEIL and min(v["ratio_scaled"]) >= DIRECT_SUM_FLOOR)
    # not a criterion line of its own: the verdict for 10 is printed by the trend test
    assert ok, (rep.checks, rep.ap_dyadic, v["ratio_scaled"])


@pytest.mark.xfail(strict=True, reason="K = 2 truncation keeps the pairing bounded while sqrt(<w><sigma>) "
                                       "grows with M; see the decisions ledger")
def test_criterion_10_direct_sum_trend(direct_sum):
    rep = direct_sum
    v = rep.values
    floors = (rep.checks["unit_means"] and rep.ap_dyadic <= DIRECT_SUM_AP_CEIL
              and min(v["ratio_scaled"]) >= DIRECT_SUM_FLOOR)
    rho = float(stats.spearmanr(range(1, 5), v["ratio_scaled"])[0])
    scaled = ", ".join(f"{x:.4f}" for x in v["ratio_scaled"])
    verdict(10, floors and rho >= 0, f"ratio_k/k^(1/2)=[{scaled}] spearman={rho:.2f} ap={rep.ap_dyadic:.4f} "
                          f"mean_defect={v['mean_defect']:.1e}")


@pytest.fixture(scope="module")
def two_valued():
    return {(p, Q): two_valued_weight(p, Q, eps=1.0, d_max=8)[0] for Q in (4.0, 16.0) for p in (2.0, 3.0)}


def test_criterion_11_two_valued_structure(two_valued):
    for (p, Q), rep in two_valued.items():
        assert rep.checks["two_values"], (p, Q)
        assert len(rep.values["values_w"]) == 2 and len(rep.values["values_sigma"]) == 2
        assert Q * (1 - 1e-12) <= rep.ap_dyadic <= 2 ** p * 1.25 * Q, (p, Q, rep.ap_dyadic)


@pytest.mark.xfail(strict=True, reason="S^sd - 1 decays like 1/d; 1 + eps needs d in the hundreds; "
                                       "see the decisions ledger")
def test_criterion_11_two_valued_smoothness(two_valued):
    ok, parts = True, []
    for (p, Q), rep in sorted(two_valued.items()):
        struct = rep.checks["two_values"] and Q * (1 - 1e-12) <= rep.ap_dyadic <= 2 ** p * 1.25 * Q
        ok &= struct and rep.s_strong_dyadic <= 2.0
        parts.append(f"p={p:g},Q={Q:g}: ap={rep.ap_dyadic:.3f} S^sd={rep.s_strong_dyadic:.3f} d={rep.values['d_chosen']}")
    verdict(11, ok, "; ".join(parts))


def test_criterion_12_two_weight_appendix():
    ok, parts = True, []
    for p in (1.5, 2.0, 3.0):
        rep = two_weight_counterexample(p, T_list=(1e2, 1e4, 1e6), n=10_000, seed=0)
        ap, slope = rep.values["sampled_ap"], rep.values["slope"]
        ok &= rep.passed and ap <= TWO_WEIGHT_CEIL[p] and abs(slope - 1) <= 0.1
        # the closed-form averages agree with quadrature of the densities
        pair = PowerPair(p)
        for a, b in ((-3.0, 0.5), (0.2, 7.0), (-20.0, 40.0)):
            pts = [x for x in (-1.0, 0.0, 1.0) if a < x < b]
            wq = integrate.quad(lambda t: abs(t) ** (p - 1), a, b, points=pts)[0] / (b - a)
            sq = integrate.quad(lambda t: 1.0 if abs(t) <= 1 else abs(t) ** (-p / (p - 1)), a, b, points=pts)[0] / (b - a)
            ok &= abs(float(pair.product(a, b)) - wq * sq ** (p - 1)) <= 1e-8 * wq * sq ** (p - 1)
        parts.append(f"p={p:g}: sampled_ap={ap:.4f} slope={slope:.4f}")
    verdict(12, ok, "; ".join(parts))
