"""End-to-end constructions: the smooth one-weight Hilbert example, the
direct-sum two-weight example, two-valued weights and the reflect-periodic
extension to the line."""
from __future__ import annotations

import logging
import math
from collections import Counter

import numpy as np
from scipy import stats

from .appendix import lower_hyperbola_solve
from .characteristics import Report, ap_components, smoothness_node
from .dyadic import (AdaptiveTree, Branch, DEFAULT_CAP, DyadicInterval, J_n, Leaf, constant, frozen_measure,
                     from_pieces, graft, map_nodes, node_haar, rebuild, unique_nodes)
from .hilbert import StepFunctionR, constant_c, pair, pair_cells
from .large_step import F, G, S, W, LargeStepParams, build_quad, damage_shift_node, quad_norms
from .remodel import Schedule, enumerate_starting, remodel_iterate
from .small_step import small_step_transform, small_step_triangle_transform

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# extension to the line


def mirror_node(node):
    """x -> 1 - x on the unit interval (children swapped at every level)."""

    def expand(n):
        if n.__class__ is Leaf:
            return n
        return (n.right, n.left)

    return rebuild(node, expand, {})


def extend_to_line(tree: AdaptiveTree, W: int = 1, k: int = 0) -> StepFunctionR:
    """Component k on [-W, W + 1): translates on even unit cells, reflections on odd ones."""
    if W < 1:
        raise ValueError("window radius must be a positive integer")
    base = StepFunctionR.from_tree(tree, k, merge=False)
    bps, vals = base.breakpoints, base.values
    rb, rv = (1.0 - bps)[::-1], vals[::-1]
    out_b, out_v = [], []
    for cell in range(-W, W + 1):
        b, v = (bps, vals) if cell % 2 == 0 else (rb, rv)
        out_b.append(cell + b[:-1])
        out_v.append(v)
    out_b.append(np.array([W + 1.0]))
    return StepFunctionR(np.concatenate(out_b), np.concatenate(out_v)).merged()


def line_tree(tree: AdaptiveTree, m: int = 2) -> AdaptiveTree:
    """The extension on [-2^(m-1), 2^(m-1)) rescaled to [0, 1)."""
    if m < 1:
        raise ValueError("m must be at least 1")
    mir = mirror_node(tree.root)
    cells = [tree.root if c % 2 == 0 else mir for c in range(-2 ** (m - 1), 2 ** (m - 1))]
    while len(cells) > 1:
        cells = [Branch(cells[i], cells[i + 1]) for i in range(0, len(cells), 2)]
    return AdaptiveTree(tree.dim, cells[0], tree.cap + m)


def window_checks(tree: AdaptiveTree, p: float, m: int = 2, depth: int = 12,
                  iw: int = 0, isg: int = 1) -> dict:
    """Characteristic, strong smoothness and integer-endpoint averages on the window."""
    wt = line_tree(tree, m)
    # the window root is not a dyadic interval of the line; its two halves are
    halves = [AdaptiveTree(tree.dim, wt.root.left, wt.cap), AdaptiveTree(tree.dim, wt.root.right, wt.cap)]
    ap_window = max(ap_components(h, p, iw, isg)[0] for h in halves)
    ap_unit = ap_components(tree, p, iw, isg)[0]
    ssd_window = max(smoothness_node(wt.root, "strong_dyadic", c) for c in (iw, isg))
    ssd_unit = max(smoothness_node(tree.root, "strong_dyadic", c) for c in (iw, isg))
    # reflection matches the two sides of an integer by construction; the left and
    # right end averages of the unit copy must also agree for the window to look periodic
    worst = 0.0
    for j in range(min(depth, tree.depth) + 1):
        a = _node_at(tree.root, DyadicInterval(j, (1 << j) - 1))
        b = _node_at(tree.root, DyadicInterval(j, 0))
        worst = max(worst, max(abs(x - y) for x, y in zip(a.avg, b.avg)))
    return {"ap_window": ap_window, "ap_unit": ap_unit, "ssd_window": ssd_window, "ssd_unit": ssd_unit,
            "integer_boundary_defect": worst}


def _node_at(root, I: DyadicInterval):
    node = root
    for bit in I.path():
        if node.__class__ is Leaf:
            return node
        node = node.right if bit else node.left
    return node


# --------------------------------------------------------------------------
# Hilbert example


def _odd_generation_zero(root, comps, rtol: float = 1e-12) -> bool:
    """Haar coefficients of the given components vanish on odd generations (up to rounding)."""
    tol = [rtol * max(1.0, abs(root.avg[c])) for c in range(len(root.avg))]
    seen = set()
    stack = [(root, 0)]
    while stack:
        node, parity = stack.pop()
        if (id(node), parity) in seen or node.__class__ is Leaf:
            continue
        seen.add((id(node), parity))
        if parity:
            h = node_haar(node)
            if any(abs(h[c]) > tol[c] for c in comps):
                return False
        stack += [(node.left, 1 - parity), (node.right, 1 - parity)]
    return True


def truncated_shift_damage(root, generations: int, kf: int = F, kg: int = G) -> float:
    """sum over generations < `generations` of |I| (D_I g)(D_{I+} f - D_{I-} f)."""

    def walk(node, gen):
        if node.__class__ is Leaf or gen >= generations:
            return 0.0
        dg = node_haar(node)[kg]
        df = node_haar(node.right)[kf] - node_haar(node.left)[kf]
        own = dg * df * 2.0 ** -gen
        return own + walk(node.left, gen + 1) + walk(node.right, gen + 1)

    return walk(root, 0)


def _doubling(budget: int) -> list[int]:
    out, N = [], 3
    while 2 ** N <= budget:
        out.append(N)
        N *= 2
    if not out:
        raise ValueError("budget admits no frequency")
    return out


class _CrossTerms:
    """Running sums of the contributions in rank order and the cross terms T_k."""

    def __init__(self, f0: float, g0: float):
        self.f0, self.g0 = f0, g0
        self.fs: list[tuple] = []
        self.gs: list[tuple] = []
        self._cat = None
        self.T: list[float] = []
        self.main: list[float] = []

    def _sums(self):
        if self._cat is None:
            cat = []
            for parts in (self.fs, self.gs):
                if parts:
                    cat.append(tuple(np.concatenate([x[i] for x in parts]) for i in range(3)))
                else:
                    cat.append((np.zeros(0),) * 3)
            self._cat = cat
        return self._cat

    def cross(self, df, dg) -> float:
        """T for a new contribution (df, dg) against everything already added."""
        sf, sg = self._sums()
        one = (np.zeros(1), np.ones(1))
        t = pair_cells(*df, *one, np.array([self.g0]))
        t += pair_cells(*one, np.array([self.f0]), *dg)
        t += pair_cells(*df, *sg)
        t += pair_cells(*sf, *dg)
        return t

    def add(self, df, dg, t: float):
        self.fs.append(df)
        self.gs.append(dg)
        self._cat = None
        self.T.append(t)
        self.main.append(pair_cells(*df, *dg))


def hilbert_example(p: float = 2.0, M: float = 4.0, d: int = 2, K: int = 2, budget: int = 2 ** 14,
                    chase_levels: int = 1, chase_bits: int = 30, allocation: str = "measure",
                    target: str = "tight", cap: int = DEFAULT_CAP, seed: int = 0) -> tuple[Report, dict]:
    """Large-step shift pair -> triangle small step -> remodeling with selected frequencies.

    Frequencies are chosen so the cross terms stay below a target: eps' itself
    (target="eps_prime") or min(eps', c/2 * truncated damage) ("tight").  The
    target is split over starting intervals in proportion to their measure
    ("measure") or as eps/2^(k+1) in rank order ("geometric").

    Returns the report and the artifacts (trees, remodel state, starting intervals).
    """
    params = LargeStepParams(p, M)
    if allocation not in ("measure", "geometric"):
        raise ValueError(f"unknown allocation {allocation!r}")
    if target not in ("tight", "eps_prime"):
        raise ValueError(f"unknown target {target!r}")
    candidates = _doubling(budget)
    rep = Report("hilbert", {"p": p, "M": M, "N_large": params.N, "d": d, "K": K, "budget": budget,
                             "chase_levels": chase_levels, "chase_bits": chase_bits,
                             "allocation": allocation, "target": target, "seed": seed})
    quad = build_quad(params, "shift", cap)
    nf0, ng0 = quad_norms(quad, p)
    C_p = damage_shift_node(quad.root, F, G) / (nf0 * ng0 * M)

    tri = small_step_triangle_transform(quad, d)
    rep.check("odd_generation_nonsplitting", _odd_generation_zero(tri.root, (W, S, G)))
    nf, ng = quad_norms(tri, p)
    rep.norms.update(f=nf, g=ng, f_large_step=nf0, g_large_step=ng0)
    c = constant_c()
    eps_prime = c * C_p / 2 * M * nf * ng
    damage_trunc = truncated_shift_damage(tri.root, 2 * K)
    eps_sel = eps_prime if target == "eps_prime" else min(eps_prime, 0.5 * c * damage_trunc)
    rep.damages.update(shift_truncated=damage_trunc, shift_large_step=C_p * M * nf0 * ng0)
    rep.values.update(c=c, C_p=C_p, eps_prime=eps_prime, eps_select=eps_sel)

    f0, g0 = tri.root.avg[F], tri.root.avg[G]
    acc = _CrossTerms(f0, g0)
    chosen: dict[int, tuple] = {}
    shortfalls = []

    def cells(si, N):
        return si.cells(F, N), si.cells(G, N)

    def catch_up(out):
        while len(acc.T) < len(out):
            si = out[len(acc.T)]
            if id(si) in chosen:
                df, dg, t = chosen.pop(id(si))
            else:
                df, dg = cells(si, si.N)
                t = acc.cross(df, dg)
            acc.add(df, dg, t)

    def choose(si, out):
        catch_up(out)
        k = len(out)
        if allocation == "measure":
            tgt = eps_sel * float(si.interval.length) * 3 / (8 * K)
        else:
            tgt = eps_sel / 2 ** (k + 1)
        for N in candidates:
            df, dg = cells(si, N)
            t = acc.cross(df, dg)
            if abs(t) <= tgt:
                break
        else:
            shortfalls.append({"rank": k, "interval": si.interval.key, "N": N, "T": t, "target": tgt})
        chosen[id(si)] = (df, dg, t)
        return N

    out = enumerate_starting(tri.root, K, choose, chase_bits, chase_levels)
    catch_up(out)
    schedule = Schedule(overrides={si.interval.key: si.N for si in out if si.N})
    state = remodel_iterate(tri, schedule, K, chase_bits, chase_levels=chase_levels, verify=True)

    planned = sorted((si.interval.key, si.N) for si in out)
    built = sorted((si.interval.key, si.N) for si in state.starting)
    rep.check("enumeration_consistent", planned == built)

    xf = StepFunctionR.from_tree(state.averaged, F)
    xg = StepFunctionR.from_tree(state.averaged, G)
    direct = pair(xf, xg)
    main = math.fsum(acc.main)
    cross = math.fsum(acc.T)
    sum_abs_T = math.fsum(abs(t) for t in acc.T)
    first = -math.fsum(m for si, m in zip(out, acc.main) if si.step == 1)
    root = tri.root
    first_bound = c * node_haar(root)[G] * node_haar(root.right)[F]

    rep.values.update(pairing=direct, main_term=main, cross_sum=cross, sum_abs_T=sum_abs_T,
                      decomposition=main + cross, first_step_main=first, first_step_bound=first_bound,
                      starting_intervals=len(out), terminal_intervals=sum(1 for si in out if si.N == 0),
                      frequencies={str(k): v for k, v in sorted(Counter(si.N for si in out if si.N).items())},
                      shortfalls=len(shortfalls), residual_measure=state.residual_measure,
                      normalized_pairing=abs(direct) / (nf * ng),
                      ratio_to_M=abs(direct) / (nf * ng) / M)
    rep.values["main_over_damage"] = -main / (c * damage_trunc) if damage_trunc else float("nan")
    rep.leftover_measure = frozen_measure(tri)
    rep.check("decomposition_identity", abs(direct - (main + cross)) <= 1e-6)
    rep.check("cross_terms_within_eps", sum_abs_T <= eps_prime)
    rep.check("main_term_first_step", first >= first_bound - 1e-8)
    rep.check("main_term_vs_damage", -main >= c * damage_trunc - 1e-6)
    rep.check("frequency_budget", not shortfalls)
    log.info("hilbert M=%s: pairing %.6g, main %.6g, sum|T| %.3g", M, direct, main, sum_abs_T)
    art = {"quad": quad, "triangle": tri, "state": state, "starting": out, "shortfalls": shortfalls,
           "T": acc.T, "main": acc.main}
    return rep, art


# --------------------------------------------------------------------------
# direct sum


def direct_sum_example(p: float = 2.0, k_max: int = 4, d: int = 2, K: int = 2, budget: int = 2 ** 14,
                       chase_levels: int = 1, M_of_k=None, cap: int = DEFAULT_CAP,
                       seed: int = 0) -> tuple[Report, dict]:
    """Normalized copies of the Hilbert example with M_k = 4k glued on J_k = [2^-k, 2^-k+1)."""
    if not 1 <= k_max <= 6:
        raise ValueError("k_max must lie in 1..6")
    M_of_k = M_of_k or (lambda k: 4.0 * k)
    pp = p / (p - 1)
    rep = Report("direct_sum", {"p": p, "k_max": k_max, "d": d, "K": K, "budget": budget,
                             "chase_levels": chase_levels, "seed": seed})
    placements, ratios, per_k, arts = {}, [], [], []
    mean_defect, boundary_defect = 0.0, 0.0
    for k in range(1, k_max + 1):
        M = M_of_k(k)
        try:
            sub, art = hilbert_example(p, M, d, K, budget, chase_levels, cap=cap, seed=seed)
        except Exception as exc:  # noqa: BLE001 - the copy index is the useful context
            raise RuntimeError(f"copy k={k} (M={M}) failed: {exc}") from exc
        st = art["state"]
        wk, sk = st.tree.root.avg[W], st.tree.root.avg[S]
        node = map_nodes(st.tree.root, lambda v, wk=wk, sk=sk: (v[W] / wk, v[S] / sk))
        placements[J_n(k)] = node
        mean_defect = max(mean_defect, abs(node.avg[0] - 1), abs(node.avg[1] - 1))
        boundary_defect = max(boundary_defect, _boundary_defect(node, _chase_depth(art["starting"])))
        ratio = sub.values["normalized_pairing"] * sk ** (-1 / pp) * wk ** (-1 / p)
        ratios.append(ratio)
        per_k.append({"k": k, "M": M, "normalized_pairing": sub.values["normalized_pairing"],
                      "w_mean": wk, "sigma_mean": sk, "ratio": ratio, "ratio_scaled": ratio / k ** (1 / pp),
                      "pass": sub.passed})
        arts.append(sub)
    base = constant((1.0, 1.0), cap)
    glued = graft(base, placements, max(cap, 1 + max(n.height for n in placements.values()) + k_max))
    ap, arg = ap_components(glued, p)
    rep.ap_dyadic, rep.ap_argmax = ap, arg
    scaled = [r / k ** (1 / pp) for k, r in enumerate(ratios, 1)]
    rho = float(stats.spearmanr(np.arange(1, k_max + 1), scaled)[0]) if k_max > 2 else float("nan")
    ssd = max(smoothness_node(glued.root, "strong_dyadic", c) for c in (0, 1))
    rep.s_strong_dyadic = ssd
    rep.values.update(per_k=per_k, ratio=ratios, ratio_scaled=scaled, spearman=rho,
                      mean_defect=mean_defect, boundary_defect=boundary_defect,
                      transfer_bound=1.25 * ap)
    rep.check("unit_means", mean_defect <= 1e-14)
    rep.check("boundary_averages", boundary_defect <= 1e-12)
    rep.check("copies_pass", all(x["pass"] for x in per_k))
    rep.check("no_decreasing_trend", not rho < 0)
    return rep, {"glued": glued, "copies": arts}


def _chase_depth(starting) -> int:
    """Depth down to which the boundary cells of the step-1 chase keep the mean."""
    left = sum(si.N for si in starting if si.step == 1 and si.N and si.interval.idx == 0)
    right = sum(si.N for si in starting if si.step == 1 and si.N and si.interval.idx == (1 << si.interval.gen) - 1)
    return min(left, right)


def _boundary_defect(node, depth: int) -> float:
    m = node.avg
    worst = 0.0
    for j in range(depth + 1):
        for I in (DyadicInterval(j, 0), DyadicInterval(j, (1 << j) - 1)):
            a = _node_at(node, I).avg
            worst = max(worst, max(abs(x - y) for x, y in zip(a, m)))
    return worst


# --------------------------------------------------------------------------
# two-valued weights


def two_valued_seed(p: float, Q: float, cap: int = DEFAULT_CAP) -> tuple[AdaptiveTree, tuple]:
    """(w, sigma) equal to (a1, b1) on [0, 1/2) and (a2, b2) on [1/2, 1), mean (A0, B0)."""
    if not Q > 1:
        raise ValueError("Q must exceed 1")
    if not p > 1:
        raise ValueError("p must exceed 1")
    A0 = Q ** (1 / p)
    B0 = (Q / A0) ** (1 / (p - 1))
    a1, b1, a2, b2 = lower_hyperbola_solve(A0, B0, p)
    seed = from_pieces([(DyadicInterval(1, 0), (a1, b1)), (DyadicInterval(1, 1), (a2, b2))], cap)
    return seed, (a1, b1, a2, b2)


def _value_set(root, k: int) -> set:
    return {n.values[k] for n in unique_nodes(root) if n.__class__ is Leaf and not n.frozen}


def two_valued_weight(p: float = 2.0, Q: float = 4.0, eps: float = 1.0, d: int | None = None,
                      d_max: int = 8, chase_bits: int = 12, window: int = 2,
                      cap: int = DEFAULT_CAP) -> tuple[Report, dict]:
    """Two-leaf seed -> small step of order d -> full-depth remodeling -> extension.

    With d unset, the smallest d in 4, 8, 16, ... (up to d_max) whose small
    step output has S^d <= (1 + eps)^(1/3) is used; otherwise d_max, flagged.
    """
    seed, (a1, b1, a2, b2) = two_valued_seed(p, Q, cap)
    rep = Report("two_valued", {"p": p, "Q": Q, "eps": eps, "d": d, "d_max": d_max,
                                "chase_bits": chase_bits, "window": window})
    ap_seed = ap_components(seed, p)[0]
    rep.values.update(a1=a1, b1=b1, a2=a2, b2=b2, ap_seed=ap_seed)
    rep.check("seed_characteristic", abs(ap_seed - Q) <= 1e-12 * Q)
    goal = (1 + eps) ** (1 / 3)
    tried = []
    for dd in ([d] if d is not None else [x for x in (4, 8, 16, 32, 64) if x <= max(d_max, 4)]):
        small = small_step_transform(seed, dd)
        sd = max(smoothness_node(small.root, "dyadic", c) for c in (0, 1))
        tried.append({"d": dd, "s_dyadic": sd})
        if sd <= goal:
            break
    rep.values["d_chosen"] = dd
    rep.values["d_search"] = tried
    rep.check("small_step_target", sd <= goal)
    st = remodel_iterate(small, Schedule(), K=small.depth // 2 + 1, chase_bits=chase_bits, verify=False,
                         limit=True)
    out = st.limit
    vals_w, vals_s = _value_set(out.root, 0), _value_set(out.root, 1)
    rep.values.update(values_w=sorted(vals_w), values_sigma=sorted(vals_s),
                      residual_measure=st.residual_measure, nodes=out.node_count(), depth=out.depth)
    rep.leftover_measure = frozen_measure(out)
    rep.check("two_values", vals_w == {a1, a2} and vals_s == {b1, b2})
    wc = window_checks(out, p, window)
    rep.ap_dyadic = wc["ap_window"]
    rep.s_strong_dyadic = wc["ssd_window"]
    rep.values.update(wc)
    rep.check("characteristic_window", Q * (1 - 1e-12) <= wc["ap_window"] <= 2 ** p * 1.25 * Q)
    rep.check("window_matches_unit", abs(wc["ap_window"] - wc["ap_unit"]) <= 1e-12 * wc["ap_unit"]
              and abs(wc["ssd_window"] - wc["ssd_unit"]) <= 1e-12 * wc["ssd_unit"])
    rep.check("strong_smoothness", wc["ssd_window"] <= 1 + eps)
    return rep, {"seed": seed, "small": small, "state": st, "output": out}
