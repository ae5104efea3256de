"""Power-like dyadic weights with hyperbola truncation, the two test-function
pairs, and the Haar multiplier / Haar shift damage forms."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .appendix import lower_hyperbola_solve
from .characteristics import Report, ap_components, weighted_norm_node
from .dyadic import (AdaptiveTree, DEFAULT_CAP, I_n, J_n, Leaf, fold, from_pieces, node_haar,
                     zip_nodes, zip_trees)

W, S, F, G = 0, 1, 2, 3


@dataclass(frozen=True)
class LargeStepParams:
    """p > 1, M > 2; beta = 1 - 1/(2Me); N the least index with sum_{n<=N} 2^{n(beta-1)} >= M."""

    p: float
    M: float
    N: int | None = None

    def __post_init__(self):
        if not self.p > 1:
            raise ValueError("p must exceed 1")
        if not self.M > 2:
            raise ValueError("M must exceed 2")
        if self.N is None:
            object.__setattr__(self, "N", least_N(self.M))
        elif self.N < 1:
            raise ValueError("N must be a positive integer")

    @property
    def beta(self) -> float:
        return 1 - 1 / (2 * self.M * math.e)

    @property
    def ratio(self) -> float:
        return 2 ** (self.beta - 1)

    @property
    def dual_exponent(self) -> float:
        """gamma with sigma = 2^{n(gamma+1)} on J_n."""
        return -self.beta / (self.p - 1) - 1

    @property
    def depth(self) -> int:
        return self.N + 2


def least_N(M: float) -> int:
    r = 2 ** (-1 / (2 * M * math.e))
    s, n = 1.0, 0
    while s < M:
        n += 1
        s += r ** n
    return n


def geometric_sum(params: LargeStepParams) -> float:
    r = params.ratio
    return sum(r ** n for n in range(params.N + 1))


def infinite_averages(params: LargeStepParams, k: int) -> tuple[float, float]:
    """<w>_{I_k}, <sigma>_{I_k} for the untruncated weights."""
    r = params.ratio
    rho = 2 ** params.dual_exponent
    return 2 ** k * r ** (k + 1) / (1 - r), 2 ** k * rho ** (k + 1) / (1 - rho)


def truncation(params: LargeStepParams) -> tuple[tuple[float, float], tuple[float, float]]:
    """((w, sigma) on J_{N+2}, (w, sigma) on I_{N+2}), the smaller w on J_{N+2}."""
    x, y = infinite_averages(params, params.N + 1)
    a1, b1, a2, b2 = lower_hyperbola_solve(x, y, params.p)
    if a1 > a2:
        a1, b1, a2, b2 = a2, b2, a1, b1
    return (a1, b1), (a2, b2)


def build_weights(params: LargeStepParams, cap: int = DEFAULT_CAP) -> AdaptiveTree:
    """(w, sigma) on the partition J_1, ..., J_{N+2}, I_{N+2}."""
    if params.depth > cap:
        raise ValueError(f"depth {params.depth} exceeds cap {cap}")
    b, p = params.beta, params.p
    pieces = [(J_n(n), (2 ** (n * b), 2 ** (-n * b / (p - 1)))) for n in range(1, params.N + 2)]
    lo, hi = truncation(params)
    pieces.append((J_n(params.N + 2), lo))
    pieces.append((I_n(params.N + 2), hi))
    return from_pieces(pieces, cap)


def build_mult_pair(params: LargeStepParams, weights: AdaptiveTree) -> tuple[AdaptiveTree, AdaptiveTree]:
    """f = sum (-1)^{n-1} 1_{J_n} (its I_{N+1} average below truncation), g = -w."""
    N = params.N
    pieces = [(J_n(n), ((-1.0) ** (n - 1),)) for n in range(1, N + 2)]
    pieces.append((I_n(N + 1), ((-1.0) ** (N + 1) / 3,)))
    f = from_pieces(pieces, weights.cap)
    return f, _negated(weights)


def build_shift_pair(params: LargeStepParams, weights: AdaptiveTree) -> tuple[AdaptiveTree, AdaptiveTree]:
    """f = sum_{n <= N+1} h_{J_n}, g = -w."""
    N = params.N
    pieces = []
    for n in range(1, N + 2):
        lo, hi = J_n(n).children()
        pieces += [(lo, (-1.0,)), (hi, (1.0,))]
    pieces.append((I_n(N + 1), (0.0,)))
    f = from_pieces(pieces, max(weights.cap, N + 2))
    return f, _negated(weights)


def _negated(weights: AdaptiveTree) -> AdaptiveTree:
    from .dyadic import map_nodes
    return AdaptiveTree(1, map_nodes(weights.root, lambda v: (-v[0],)), weights.cap)


def damage_mult_node(root, kf: int, kg: int) -> float:
    """sum |I| |D_I f| |D_I g| over the nodes of a joint tree."""

    def br(n, a, b):
        h = node_haar(n)
        return abs(h[kf]) * abs(h[kg]) + 0.5 * (a + b)

    return fold(root, lambda n: 0.0, br)


def damage_shift_node(root, kf: int, kg: int) -> float:
    """sum |I| (D_I g)(D_{I+} f - D_{I-} f) over the nodes of a joint tree."""

    def br(n, a, b):
        dg = node_haar(n)[kg]
        df = node_haar(n.right)[kf] - node_haar(n.left)[kf]
        return dg * df + 0.5 * (a + b)

    return fold(root, lambda n: 0.0, br)


def damage_mult(f: AdaptiveTree, g: AdaptiveTree) -> float:
    return damage_mult_node(zip_nodes(f.root, g.root), 0, f.dim)


def damage_shift(f: AdaptiveTree, g: AdaptiveTree) -> float:
    return damage_shift_node(zip_nodes(f.root, g.root), 0, f.dim)


def build_quad(params: LargeStepParams, variant: str = "mult", cap: int = DEFAULT_CAP) -> AdaptiveTree:
    """(w, sigma, f, g) jointly refined."""
    weights = build_weights(params, cap)
    if variant == "mult":
        f, g = build_mult_pair(params, weights)
    elif variant == "shift":
        f, g = build_shift_pair(params, weights)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return zip_trees(weights, f, g)


def quad_norms(quad: AdaptiveTree, p: float) -> tuple[float, float]:
    """||f||_{L^p(sigma)} and ||g||_{L^{p'}(w)} for bold f = f sigma, g = g w."""
    pp = p / (p - 1)
    return weighted_norm_node(quad.root, p, F, S), weighted_norm_node(quad.root, pp, G, W)


def large_step_report(params: LargeStepParams, variant: str = "mult", cap: int = DEFAULT_CAP) -> Report:
    quad = build_quad(params, variant, cap)
    p, M, N = params.p, params.M, params.N
    rep = Report("large_step", {"p": p, "M": M, "N": N, "beta": params.beta, "variant": variant,
                                "c0": 1.0})
    rep.ap_dyadic, rep.ap_argmax = ap_components(quad, p)
    dm = damage_mult_node(quad.root, F, G)
    ds = damage_shift_node(quad.root, F, G)
    rep.damages.update(mult=dm, shift=ds)
    nf, ng = quad_norms(quad, p)
    rep.norms.update(f=nf, g=ng)
    main = dm if variant == "mult" else ds
    rep.values["normalized_damage"] = main / (nf * ng)
    rep.values["w_total"] = quad.root.avg[W]
    rep.values["geometric_sum"] = geometric_sum(params)

    (a1, b1), (a2, b2) = truncation(params)
    rep.values["truncation"] = [a1, b1, a2, b2]
    rep.check("hyperbola_endpoints", max(abs(a1 * b1 ** (p - 1) - 1), abs(a2 * b2 ** (p - 1) - 1)) <= 1e-10)
    rep.check("N_minimal", geometric_sum(params) >= M)
    lo_ap = fold(quad.root, lambda n: n.values[W] * n.values[S] ** (p - 1),
                 lambda n, a, b: min(a, b, n.avg[W] * n.avg[S] ** (p - 1)))
    rep.check("jensen", lo_ap >= 1 - 1e-10)
    window, negative = True, True
    for n in range(N + 2):
        node = quad.node_at(I_n(n))
        if n <= N:
            v = node.avg[W] * node.avg[S] ** (p - 1)
            window &= M * (1 - 1e-12) <= v <= 4 * M * math.e * (1 + 1e-12)
        negative &= node_haar(node)[W] < 0
    rep.check("window_on_I_n", window)
    rep.check("haar_w_negative_on_I_n", negative)
    rep.check("ap_window", M * (1 - 1e-12) <= rep.ap_dyadic <= 4 * M * math.e * (1 + 1e-12))
    return rep
