"""A_p characteristics, smoothness constants, weighted norms and
Poisson probes for trees on [0,1) and for weights on the line."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import betainc

from .dyadic import AdaptiveTree, DyadicInterval, Leaf, fold, zip_nodes


def _ap_node(root, p: float, iw: int = 0, isg: int = 1):
    """Sup of <w><s>^{p-1} over all nodes with (gen, idx) of the first maximiser."""

    def leaf(n):
        w, s = n.values[iw], n.values[isg]
        if w <= 0 or s <= 0:
            raise ValueError("nonpositive weight value")
        return (w * s ** (p - 1), 0, 0)

    def br(n, a, b):
        best = (n.avg[iw] * n.avg[isg] ** (p - 1), 0, 0)
        ca = (a[0], a[1] + 1, a[2])
        cb = (b[0], b[1] + 1, b[2] + (1 << b[1]))
        for c in (ca, cb):
            if c[0] > best[0] or (c[0] == best[0] and (c[1], c[2]) < (best[1], best[2])):
                best = c
        return best

    return fold(root, leaf, br)


def ap_dyadic(w: AdaptiveTree, sigma: AdaptiveTree, p: float) -> tuple[float, DyadicInterval]:
    """Dyadic joint characteristic sup_I <w>_I <sigma>_I^{p-1} and its argmax.

    Ties go to the smallest generation, then the smallest index.
    """
    if p <= 1:
        raise ValueError("p must exceed 1")
    root = zip_nodes(w.root, sigma.root)
    v, g, i = _ap_node(root, p)
    return v, DyadicInterval(g, i)


def ap_components(tree: AdaptiveTree, p: float, iw: int = 0, isg: int = 1) -> tuple[float, DyadicInterval]:
    """Same as ap_dyadic for two components of one tree (e.g. a Quad)."""
    v, g, i = _ap_node(tree.root, p, iw, isg)
    return v, DyadicInterval(g, i)


def _ratio(x: float, y: float) -> float:
    if x <= 0 or y <= 0:
        raise ValueError("nonpositive weight average")
    return x / y if x > y else y / x


def smoothness_node(root, kind: str = "dyadic", k: int = 0) -> float:
    if kind == "dyadic":
        def br(n, a, b):
            return max(a, b, _ratio(n.left.avg[k], n.right.avg[k]))

        def leaf(n):
            if n.values[k] <= 0:
                raise ValueError("nonpositive weight value")
            return 1.0

        return fold(root, leaf, br)
    if kind != "strong_dyadic":
        raise ValueError(f"unknown smoothness kind {kind!r}")

    memo: dict[tuple[int, int], float] = {}

    def cross(x, y) -> float:
        # worst ratio between the right spine below x and the left spine below y;
        # a leaf keeps standing in for all of its own descendants
        path = []
        acc = 1.0
        while True:
            key = (id(x), id(y))
            if key in memo:
                acc = memo[key]
                break
            path.append((key, x, y))
            xl, yl = x.__class__ is Leaf, y.__class__ is Leaf
            if xl and yl:
                break
            x, y = (x if xl else x.right), (y if yl else y.left)
        for key, a, b in reversed(path):
            acc = max(acc, _ratio(a.avg[k], b.avg[k]))
            memo[key] = acc
        return acc

    def leaf(n):
        if n.values[k] <= 0:
            raise ValueError("nonpositive weight value")
        return 1.0

    def br(n, a, b):
        return max(a, b, cross(n.left, n.right))

    return fold(root, leaf, br)


def smoothness(w: AdaptiveTree, kind: str = "dyadic", k: int = 0) -> float:
    """Dyadic (siblings) or strong dyadic (all adjacent equal-length pairs) constant."""
    return smoothness_node(w.root, kind, k)


def doubling_dyadic(w: AdaptiveTree, k: int = 0) -> float:
    """sup over parent/child pairs of w(parent)/w(child) = 2<w>_P/<w>_child."""

    def br(n, a, b):
        return max(a, b, 2 * n.avg[k] / n.left.avg[k], 2 * n.avg[k] / n.right.avg[k])

    return fold(w.root, lambda n: 2.0, br)


def weighted_norm(bold: AdaptiveTree, weight: AdaptiveTree, q: float, kb: int = 0, kw: int = 0) -> float:
    """||bold/weight||_{L^q(weight)} by an exact leafwise sum."""
    root = zip_nodes(bold.root, weight.root)
    return weighted_norm_node(root, q, kb, bold.dim + kw)


def weighted_norm_node(root, q: float, kb: int, kw: int) -> float:
    def leaf(n):
        b, w = n.values[kb], n.values[kw]
        if w <= 0:
            raise ValueError("nonpositive weight value")
        return abs(b / w) ** q * w

    return fold(root, leaf, lambda n, a, b: 0.5 * (a + b)) ** (1.0 / q)


def check_duality(tree: AdaptiveTree, p: float, iw: int = 0, isg: int = 1, tol: float = 1e-9) -> tuple[float, float, bool]:
    """[w,s]_{A_p}^{p'-1} against [s,w]_{A_p'} computed independently."""
    pp = p / (p - 1)
    a, _ = ap_components(tree, p, iw, isg)
    b, _ = ap_components(tree, pp, isg, iw)
    lhs = a ** (pp - 1)
    return lhs, b, abs(lhs - b) <= tol * max(1.0, abs(b))


# --------------------------------------------------------------------------
# weights on the line


class LineWeight:
    """A locally integrable piecewise-constant weight on R."""

    def integral(self, a: float, b: float) -> float:
        raise NotImplementedError

    def average(self, a: float, b: float) -> float:
        return self.integral(a, b) / (b - a)

    def poisson(self, lam: complex, p: float, tol: float = 1e-4) -> tuple[float, bool]:
        raise NotImplementedError


def kernel_total(p: float) -> float:
    """Integral over R of b^{p-1}/|x - lam|^p; independent of lam."""
    return float(beta_fn(0.5, (p - 1) / 2))


def _upper_mass(x, a: float, b: float, p: float):
    """Kernel mass of [x, +inf) for x >= a (vectorised)."""
    x = np.asarray(x, dtype=float)
    c2 = b * b / ((x - a) ** 2 + b * b)
    return 0.5 * kernel_total(p) * betainc((p - 1) / 2, 0.5, c2)


def kernel_mass(x0, x1, a: float, b: float, p: float):
    """Mass of the Poisson-like kernel on [x0, x1), vectorised and cancellation-free."""
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    half = 0.5 * kernel_total(p)

    def up(x):  # mass of [x, inf)
        xp = np.where(x >= a, x, 2 * a - x)
        m = _upper_mass(xp, a, b, p)
        return np.where(x >= a, m, 2 * half - m)

    right = x0 >= a
    left = x1 <= a
    out = np.where(right, up(x0) - up(x1), 0.0)
    # mirror cells on the left of a to keep the subtraction on the small side
    m0 = _upper_mass(np.where(left, 2 * a - x1, a), a, b, p)
    m1 = _upper_mass(np.where(left, 2 * a - x0, a), a, b, p)
    out = np.where(left, m0 - m1, out)
    mid = ~(right | left)
    if np.any(mid):
        out = np.where(mid, 2 * half - _upper_mass(np.where(mid, x1, a), a, b, p) - _upper_mass(np.where(mid, 2 * a - x0, a), a, b, p), out)
    return out


class StepWeight(LineWeight):
    """Finitely many cells plus constant tails to the left and right."""

    def __init__(self, breakpoints, values, left_tail: float, right_tail: float):
        self.x = np.asarray(breakpoints, dtype=float)
        self.v = np.asarray(values, dtype=float)
        if len(self.x) != len(self.v) + 1 or np.any(np.diff(self.x) <= 0):
            raise ValueError("bad breakpoints")
        self.lt = float(left_tail)
        self.rt = float(right_tail)
        self.cum = np.concatenate([[0.0], np.cumsum(self.v * np.diff(self.x))])

    def _prefix(self, t: float) -> float:
        # integral from x[0] to t (negative for t < x[0])
        x = self.x
        if t <= x[0]:
            return (t - x[0]) * self.lt
        if t >= x[-1]:
            return self.cum[-1] + (t - x[-1]) * self.rt
        j = int(np.searchsorted(x, t, side="right")) - 1
        return self.cum[j] + (t - x[j]) * self.v[j]

    def integral(self, a: float, b: float) -> float:
        return self._prefix(b) - self._prefix(a)

    def poisson(self, lam: complex, p: float, tol: float = 1e-4) -> tuple[float, bool]:
        a, b = lam.real, lam.imag
        masses = kernel_mass(self.x[:-1], self.x[1:], a, b, p)
        total = float(np.dot(masses, self.v))
        right = _upper_mass(max(self.x[-1], a), a, b, p) if self.x[-1] >= a else kernel_total(p) - _upper_mass(2 * a - self.x[-1], a, b, p)
        left = _upper_mass(2 * a - self.x[0], a, b, p) if self.x[0] <= a else kernel_total(p) - _upper_mass(self.x[0], a, b, p)
        return total + self.rt * float(right) + self.lt * float(left), True


class TreeLine(LineWeight):
    """Reflect-periodic extension of one component of a tree on [0,1).

    On [k, k+1) the weight is w(x - k) for even k and w(k + 1 - x) for odd k.
    """

    MAX_DESCENT = 62

    def __init__(self, tree: AdaptiveTree, k: int = 0):
        self.tree = tree
        self.k = k
        self.mean = tree.root.avg[k]

    def value_at(self, x: float) -> float:
        c = math.floor(x)
        u = x - c
        if c % 2:
            u = 1.0 - u
            if u >= 1.0:
                u = math.nextafter(1.0, 0.0)
        node = self.tree.root
        while node.__class__ is not Leaf:
            if u < 0.5:
                node, u = node.left, 2 * u
            else:
                node, u = node.right, 2 * u - 1
        return node.values[self.k]

    def prefix(self, u: float) -> float:
        """Integral of the tree component over [0, u], 0 <= u <= 1."""
        if u <= 0:
            return 0.0
        if u >= 1:
            return self.mean
        node, lo, ln, acc = self.tree.root, 0.0, 1.0, 0.0
        k = self.k
        for _ in range(self.MAX_DESCENT):
            if node.__class__ is Leaf:
                return acc + (u - lo) * node.values[k]
            half = 0.5 * ln
            if u < lo + half:
                node, ln = node.left, half
            else:
                acc += half * node.left.avg[k]
                node, lo, ln = node.right, lo + half, half
        return acc + (u - lo) * node.avg[k]

    def _cell_integral(self, c: int, u0: float, u1: float) -> float:
        if c % 2 == 0:
            return self.prefix(u1) - self.prefix(u0)
        return self.prefix(1 - u0) - self.prefix(1 - u1)

    def integral(self, a: float, b: float) -> float:
        if b < a:
            return -self.integral(b, a)
        ca, cb = math.floor(a), math.floor(b)
        if ca == cb:
            return self._cell_integral(ca, a - ca, b - ca)
        total = self._cell_integral(ca, a - ca, 1.0)
        total += (cb - ca - 1) * self.mean
        total += self._cell_integral(cb, 0.0, b - cb)
        return total

    def poisson(self, lam: complex, p: float, tol: float = 1e-4, max_nodes: int = 2_000_000) -> tuple[float, bool]:
        """Kernel integral with relative error at most about 2*tol.

        A node is replaced by its average once the kernel varies by less than
        tol relative to its minimum on the node; the error is then at most
        2*tol times the node's true contribution.  Whole periods far away are
        replaced by the mean: the extension is symmetric about odd integers, so
        the first-order term vanishes and the second-order one is below tol.
        """
        a, b = lam.real, lam.imag
        k = self.k

        def kern(r):
            return b ** (p - 1) / (r * r + b * b) ** (p / 2)

        # |K''| <= p(p+1) K / r^2, so periods with r^2 >= p(p+1)/tol are flat enough
        R = max(2.0 * b, math.sqrt(p * (p + 1) / tol)) + 2.0
        j_lo = math.floor((a - R) / 2)
        j_hi = math.floor((a + R) / 2) + 1
        lo_x, hi_x = 2.0 * j_lo, 2.0 * j_hi
        total = self.mean * float(_upper_mass(hi_x, a, b, p) + _upper_mass(2 * a - lo_x, a, b, p))
        cells = np.arange(2 * j_lo, 2 * j_hi)
        nodes = [self.tree.root] * len(cells)
        x0 = cells.astype(float)
        ln = np.ones(len(cells))
        orient = np.where(cells % 2 == 0, 1, -1)
        visited = 0
        converged = True
        while nodes:
            visited += len(nodes)
            x1 = x0 + ln
            m = kernel_mass(x0, x1, a, b, p)
            d0 = np.maximum(np.maximum(x0 - a, a - x1), 0.0)
            d1 = np.maximum(np.abs(x0 - a), np.abs(x1 - a))
            kmin = kern(d1)
            flat = kern(d0) - kmin <= tol * kmin
            leaf = np.fromiter((n.__class__ is Leaf for n in nodes), bool, len(nodes))
            done = flat | leaf
            if visited > max_nodes:
                done[:] = True
                converged = False
            vals = np.fromiter((n.avg[k] for n in nodes), float, len(nodes))
            total += float(np.dot(vals[done], m[done]))
            nxt, nx0, nln, nor = [], [], [], []
            for i in np.nonzero(~done)[0]:
                n, h, o = nodes[i], 0.5 * ln[i], orient[i]
                first, second = (n.left, n.right) if o > 0 else (n.right, n.left)
                nxt += [first, second]
                nx0 += [x0[i], x0[i] + h]
                nln += [h, h]
                nor += [o, o]
            nodes, x0, ln, orient = nxt, np.array(nx0), np.array(nln), np.array(nor, dtype=int)
        return total, converged


@dataclass
class PoissonProbe:
    lambda_re: float
    lambda_im: float
    value: float
    average: float
    converged: bool = True

    @property
    def ratio(self) -> float:
        return self.value / self.average


def poisson_vs_average(w: LineWeight, lam: complex, p: float, tol: float = 1e-4) -> PoissonProbe:
    """Poisson-like integral of w at lam against the plain average over I_lam."""
    if lam.imag <= 0:
        raise ValueError("lambda must lie in the upper half plane")
    val, ok = w.poisson(lam, p, tol)
    avg = w.average(lam.real - lam.imag, lam.real + lam.imag)
    return PoissonProbe(lam.real, lam.imag, val, avg, ok)


def _sample_intervals(n: int, rng: np.random.Generator, lo: float, hi: float, lmin: float, lmax: float):
    lengths = np.exp(rng.uniform(math.log(lmin), math.log(lmax), n))
    left = rng.uniform(lo, hi, n) - lengths / 2
    return left, left + lengths


def sampled_ap(w: LineWeight, s: LineWeight, p: float, n: int = 10_000, seed: int = 0,
               lo: float = 0.0, hi: float = 1.0, lmin: float = 1e-6, lmax: float = 1.0) -> tuple[float, tuple[float, float]]:
    """Lower bound for the continuous joint characteristic by random intervals."""
    rng = np.random.default_rng(seed)
    a, b = _sample_intervals(n, rng, lo, hi, lmin, lmax)
    best, arg = 0.0, (0.0, 0.0)
    for x, y in zip(a, b):
        v = w.average(x, y) * s.average(x, y) ** (p - 1)
        if v > best:
            best, arg = v, (float(x), float(y))
    return best, arg


def sampled_doubling(w: LineWeight, n: int = 10_000, seed: int = 0, lo: float = 0.0, hi: float = 1.0,
                     lmin: float = 1e-6, lmax: float = 1.0) -> float:
    """Lower bound for sup w(2I)/w(I) by random intervals."""
    rng = np.random.default_rng(seed)
    a, b = _sample_intervals(n, rng, lo, hi, lmin, lmax)
    best = 0.0
    for x, y in zip(a, b):
        ln = y - x
        best = max(best, w.integral(x - ln / 2, y + ln / 2) / w.integral(x, y))
    return best


def sampled_halves(w: LineWeight, n: int = 1000, seed: int = 0, lo: float = 0.0, hi: float = 1.0,
                   lmin: float = 1e-6, lmax: float = 1.0) -> float:
    """Lower bound for sup over intervals of the ratio of the averages on the two halves."""
    rng = np.random.default_rng(seed)
    a, b = _sample_intervals(n, rng, lo, hi, lmin, lmax)
    best = 1.0
    for x, y in zip(a, b):
        m = 0.5 * (x + y)
        best = max(best, _ratio(w.average(x, m), w.average(m, y)))
    return best


# --------------------------------------------------------------------------
# reports


@dataclass
class Report:
    """Measured quantities and verdicts of one run."""

    kind: str
    params: dict = field(default_factory=dict)
    ap_dyadic: float | None = None
    ap_argmax: DyadicInterval | None = None
    s_dyadic: float | None = None
    s_strong_dyadic: float | None = None
    doubling: float | None = None
    norms: dict = field(default_factory=dict)
    damages: dict = field(default_factory=dict)
    leftover_measure: float = 0.0
    values: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    def check(self, name: str, ok) -> bool:
        self.checks[name] = bool(ok)
        return bool(ok)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "params": self.params}
        if self.ap_dyadic is not None:
            out["ap_dyadic"] = self.ap_dyadic
            out["ap_argmax"] = self.ap_argmax.key if self.ap_argmax else None
        for name in ("s_dyadic", "s_strong_dyadic", "doubling"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        out["norms"] = self.norms
        out["damages"] = self.damages
        out["leftover_measure"] = self.leftover_measure
        out["values"] = self.values
        out["checks"] = self.checks
        out["pass"] = self.passed
        return out

    def rows(self) -> list[tuple[str, float, str]]:
        """Flat (quantity, value, argmax) rows for CSV output."""
        rows = []
        if self.ap_dyadic is not None:
            rows.append(("ap_dyadic", self.ap_dyadic, self.ap_argmax.key if self.ap_argmax else ""))
        for name in ("s_dyadic", "s_strong_dyadic", "doubling"):
            if getattr(self, name) is not None:
                rows.append((name, getattr(self, name), ""))
        for group in ("norms", "damages", "values"):
            for k, v in getattr(self, group).items():
                if isinstance(v, (int, float)) and not isinstance(v, bool):
                    rows.append((f"{group}.{k}", float(v), ""))
        rows.append(("leftover_measure", self.leftover_measure, ""))
        return rows


def measure_quad(tree: AdaptiveTree, p: float, kind: str = "measure", params: dict | None = None) -> Report:
    """Standard measurements of a (w, sigma, f, g) tree."""
    rep = Report(kind, dict(params or {}, p=p))
    rep.ap_dyadic, rep.ap_argmax = ap_components(tree, p)
    rep.s_dyadic = smoothness_node(tree.root, "dyadic", 0)
    rep.s_strong_dyadic = smoothness_node(tree.root, "strong_dyadic", 0)
    rep.doubling = doubling_dyadic(tree, 0)
    pp = p / (p - 1)
    rep.norms["f_Lp_sigma"] = weighted_norm_node(tree.root, p, 2, 1)
    rep.norms["g_Lp'_w"] = weighted_norm_node(tree.root, pp, 3, 0)
    rep.values["s_dyadic_sigma"] = smoothness_node(tree.root, "dyadic", 1)
    from .dyadic import frozen_measure
    rep.leftover_measure = frozen_measure(tree)
    lhs, rhs, ok = check_duality(tree, p)
    rep.values["duality_lhs"] = lhs
    rep.values["duality_rhs"] = rhs
    rep.check("duality_identity", ok)
    rep.check("ap_at_least_one", rep.ap_dyadic >= 1 - 1e-12)
    rep.check("strong_dominates_dyadic", rep.s_strong_dyadic >= rep.s_dyadic - 1e-12)
    return rep
