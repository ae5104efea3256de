"""Exact Hilbert transform pairings of compactly supported step functions.

Convention: H g(x) = (1/pi) p.v. int g(y) / (y - x) dy, so that
H(h_[0,1))(x) = (1/pi) ln(4|x(x-1)| / (2x-1)^2).  `pair(F, G)` is <H(G), F>.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .dyadic import AdaptiveTree, DyadicInterval

KERNEL_SIGN = +1  # H g(x) = KERNEL_SIGN / pi * p.v. int g(y) / (y - x) dy

# Gauss-Legendre rule for separated cell pairs
_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)
_FAR = 4.0  # pairs with gap >= _FAR * max cell size use the quadrature


@dataclass
class StepFunctionR:
    """Step function on R: values[i] on [breakpoints[i], breakpoints[i+1]), zero outside."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.breakpoints = np.asarray(self.breakpoints, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.breakpoints.ndim != 1 or len(self.breakpoints) != len(self.values) + 1:
            raise ValueError("need len(breakpoints) == len(values) + 1")
        if len(self.values) and not np.all(np.diff(self.breakpoints) > 0):
            raise ValueError("breakpoints must be strictly increasing")
        if not np.all(np.isfinite(self.values)) or not np.all(np.isfinite(self.breakpoints)):
            raise ValueError("non-finite step function")

    @property
    def support(self) -> tuple[float, float]:
        return float(self.breakpoints[0]), float(self.breakpoints[-1])

    @property
    def cells(self) -> int:
        return len(self.values)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        i = np.searchsorted(self.breakpoints, x, side="right") - 1
        inside = (i >= 0) & (i < self.cells)
        return np.where(inside, self.values[np.clip(i, 0, max(self.cells - 1, 0))], 0.0)

    def integral(self) -> float:
        return float(np.dot(np.diff(self.breakpoints), self.values))

    def affine(self, scale: float, shift: float) -> "StepFunctionR":
        """x -> shift + scale * x applied to the support (scale > 0)."""
        return StepFunctionR(shift + scale * self.breakpoints, self.values)

    def scaled(self, alpha: float) -> "StepFunctionR":
        return StepFunctionR(self.breakpoints, alpha * self.values)

    def merged(self) -> "StepFunctionR":
        """Drop zero cells at the ends and merge equal neighbours."""
        b, v = self.breakpoints, self.values
        if len(v) == 0:
            return self
        keep = np.ones(len(v), dtype=bool)
        keep[1:] = v[1:] != v[:-1]
        starts = np.flatnonzero(keep)
        nb = np.append(b[starts], b[-1])
        nv = v[starts]
        nz = np.flatnonzero(nv != 0)
        if len(nz) == 0:
            return StepFunctionR(nb[:2], nv[:1] * 0)
        lo, hi = nz[0], nz[-1]
        return StepFunctionR(nb[lo:hi + 2], nv[lo:hi + 1])

    @classmethod
    def zero(cls) -> "StepFunctionR":
        return cls([0.0, 1.0], [0.0])

    @classmethod
    def from_tree(cls, tree: AdaptiveTree, k: int = 0, lo: float = 0.0, length: float = 1.0,
                  merge: bool = True) -> "StepFunctionR":
        bps, vals = [], []
        for I, v in tree.leaves():
            bps.append(lo + length * float(I.lo))
            vals.append(v[k])
        bps.append(lo + length)
        out = cls(bps, vals)
        return out.merged() if merge else out


def combine(terms: list[tuple[float, StepFunctionR]]) -> StepFunctionR:
    """sum alpha_i F_i on the union of breakpoints."""
    terms = [(a, F) for a, F in terms if F.cells]
    if not terms:
        return StepFunctionR.zero()
    bps = np.unique(np.concatenate([F.breakpoints for _, F in terms]))
    mids = 0.5 * (bps[:-1] + bps[1:])
    vals = np.zeros(len(mids))
    for a, F in terms:
        vals += a * F(mids)
    return StepFunctionR(bps, vals)


def indicator_step(a: float, b: float, value: float = 1.0) -> StepFunctionR:
    return StepFunctionR([a, b], [value])


def haar_step(a: float, b: float) -> StepFunctionR:
    """h_[a,b): -1 on the left half, +1 on the right half."""
    return StepFunctionR([a, 0.5 * (a + b), b], [-1.0, 1.0])


def haar_sum(intervals, plus_half: bool = False) -> StepFunctionR:
    """sum of h_J (or h_{J+}) over disjoint intervals given as (a, b) pairs."""
    terms = []
    for a, b in intervals:
        if plus_half:
            a = 0.5 * (a + b)
        terms.append((1.0, haar_step(a, b)))
    return combine(terms)


def _lam(u):
    """u (ln|u| - 1) with the removable value 0 at u = 0."""
    u = np.asarray(u, dtype=float)
    au = np.abs(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = u * (np.log(np.where(au > 0, au, 1.0)) - 1.0)
    return np.where(au > 0, out, 0.0)


def cell_kernel(a, b, c, d):
    """int_a^b int_c^d dy dx / (y - x), broadcasting over arrays."""
    a, b, c, d = np.broadcast_arrays(*(np.asarray(t, dtype=float) for t in (a, b, c, d)))
    out = np.empty(a.shape)
    gap = np.maximum(c - b, a - d)
    size = np.maximum(b - a, d - c)
    far = gap >= _FAR * size
    near = ~far
    if np.any(near):
        an, bn, cn, dn = a[near], b[near], c[near], d[near]
        # ordered so the large terms cancel first
        out[near] = (_lam(dn - an) - _lam(dn - bn)) - (_lam(cn - an) - _lam(cn - bn))
    if np.any(far):
        af, bf, cf, df = a[far], b[far], c[far], d[far]
        h = 0.5 * (bf - af)
        m = 0.5 * (af + bf)
        x = m[:, None] + h[:, None] * _GL_X[None, :]
        den = cf[:, None] - x
        val = np.log1p((df - cf)[:, None] / den)
        out[far] = h * (val @ _GL_W)
    return out


def pair_cells(fa, fb, fv, ga, gb, gv, block: int = 1 << 21) -> float:
    """(1/pi) sum_ij fv_i gv_j int_{fa_i}^{fb_i} int_{ga_j}^{gb_j} dy dx / (y - x).

    Cells of either side may overlap (sums of step functions)."""
    fa, fb, fv = (np.asarray(t, dtype=float) for t in (fa, fb, fv))
    ga, gb, gv = (np.asarray(t, dtype=float) for t in (ga, gb, gv))
    nzf, nzg = fv != 0, gv != 0
    fa, fb, fv = fa[nzf], fb[nzf], fv[nzf]
    ga, gb, gv = ga[nzg], gb[nzg], gv[nzg]
    if len(fv) == 0 or len(gv) == 0:
        return 0.0
    rows = max(1, block // len(gv))
    parts = []
    for s in range(0, len(fv), rows):
        sl = slice(s, s + rows)
        K = cell_kernel(fa[sl, None], fb[sl, None], ga[None, :], gb[None, :])
        parts.append(float(fv[sl] @ K @ gv))
    return KERNEL_SIGN * math.fsum(parts) / math.pi


def pair(F: StepFunctionR, G: StepFunctionR, block: int = 1 << 21) -> float:
    """<H(G), F> = (1/pi) int int F(x) G(y) / (y - x) dy dx."""
    return pair_cells(F.breakpoints[:-1], F.breakpoints[1:], F.values,
                      G.breakpoints[:-1], G.breakpoints[1:], G.values, block)


def hilbert_of_indicator(x, a: float, b: float):
    """H(1_[a,b))(x) away from a and b."""
    x = np.asarray(x, dtype=float)
    return KERNEL_SIGN * np.log(np.abs((x - b) / (x - a))) / math.pi


def hilbert_of_haar(x):
    """H(h_[0,1))(x) away from 0, 1/2, 1."""
    x = np.asarray(x, dtype=float)
    return KERNEL_SIGN * np.log(4 * np.abs(x * (x - 1)) / (2 * x - 1) ** 2) / math.pi


@lru_cache(maxsize=None)
def constant_c() -> float:
    """c = -<H(h_[0,1)), h_[1/2,1)>."""
    c = -pair(haar_step(0.5, 1.0), haar_step(0.0, 1.0))
    if not c > 0:
        raise ArithmeticError("c must be positive")
    return c


def _as_intervals(G) -> list[tuple[float, float]]:
    out = []
    for J in G:
        if isinstance(J, DyadicInterval):
            out.append((float(J.lo), float(J.hi)))
        else:
            out.append((float(J[0]), float(J[1])))
    return sorted(out)


def lemma_b_form(G) -> float:
    """<H(sum h_J), sum h_{J+}> over disjoint equal-length intervals."""
    ivs = _as_intervals(G)
    if not ivs:
        raise ValueError("empty family")
    lens = {round(b - a, 15) for a, b in ivs}
    if len(lens) != 1 or min(b - a for a, b in ivs) <= 0:
        raise ValueError("intervals must have one common positive length")
    if any(ivs[i][1] > ivs[i + 1][0] for i in range(len(ivs) - 1)):
        raise ValueError("intervals must be pairwise disjoint")
    return pair(haar_sum(ivs, plus_half=True), haar_sum(ivs))


def sign_pair_sum(I: tuple[float, float], J: tuple[float, float]) -> float:
    """<H(h_I), h_{J+}> + <H(h_J), h_{I+}>, negative for disjoint equal-length I, J."""
    hI, hJ = haar_step(*I), haar_step(*J)
    Ip = haar_step(0.5 * (I[0] + I[1]), I[1])
    Jp = haar_step(0.5 * (J[0] + J[1]), J[1])
    return pair(Jp, hI) + pair(Ip, hJ)


def monotone_profile(a: float) -> float:
    """<H(h_[0,1)), h_[a, a+1/2)> for a >= 1."""
    if a < 1:
        raise ValueError("a must be at least 1")
    return pair(haar_step(a, a + 0.5), haar_step(0.0, 1.0))


def regular_cells(N: int, lo: float = 0.0, length: float = 1.0) -> list[tuple[float, float]]:
    """The 2^N - 2 interior cells of frequency N on [lo, lo + length)."""
    h = length / 2 ** N
    return [(lo + i * h, lo + (i + 1) * h) for i in range(1, 2 ** N - 1)]


def _quad_pairing_indicator(a: float, b: float, c: float, d: float) -> float:
    """<H(1_[a,b)), 1_[c,d)> by adaptive quadrature of the pointwise formula."""
    from scipy import integrate
    val, _ = integrate.quad(lambda x: float(hilbert_of_indicator(x, a, b)), c, d,
                            points=[x for x in (a, b) if c < x < d] or None, epsabs=1e-13, epsrel=1e-13, limit=200)
    return val


def _quad_constant_c() -> float:
    """-int H(h_[0,1)) h_[1/2,1) by quadrature, log singularities at 1/2 and 1."""
    from scipy import integrate
    f = lambda x: float(hilbert_of_haar(x))  # noqa: E731
    lo, _ = integrate.quad(f, 0.5, 0.75, epsabs=1e-13, epsrel=1e-13, limit=200)
    hi, _ = integrate.quad(f, 0.75, 1.0, epsabs=1e-13, epsrel=1e-13, limit=200)
    return -(hi - lo)


def hilbert_lemma_report(seed: int = 0, pairs: int = 50) -> "Report":
    """Antisymmetry, closed form against quadrature, c > 0, the sign and
    regular-cell inequalities and the monotone profile."""
    from .characteristics import Report
    rep = Report("hilbert_lemma", {"seed": seed, "pairs": pairs})
    rng = np.random.default_rng(seed)
    worst_anti = 0.0
    for _ in range(20):
        F = StepFunctionR(np.cumsum(rng.uniform(0.05, 1.0, 6)) - 2.0, rng.normal(size=5))
        G = StepFunctionR(np.cumsum(rng.uniform(0.05, 1.0, 7)) - 2.0, rng.normal(size=6))
        worst_anti = max(worst_anti, abs(pair(F, G) + pair(G, F)))
    rep.values["antisymmetry_defect"] = worst_anti
    rep.check("antisymmetry", worst_anti <= 1e-8)

    worst_q = 0.0
    for a, b, c, d in ((0.0, 1.0, 2.0, 3.0), (0.0, 1.0, 1.0, 1.5), (0.0, 0.5, 0.25, 2.0), (0.0, 1.0, 40.0, 41.0)):
        exact = pair(indicator_step(c, d), indicator_step(a, b))
        worst_q = max(worst_q, abs(exact - _quad_pairing_indicator(a, b, c, d)))
    c = constant_c()
    cq = _quad_constant_c()
    worst_q = max(worst_q, abs(c - cq))
    rep.values.update(quadrature_defect=worst_q, c=c, c_quadrature=cq,
                      reference_pairing=pair(indicator_step(2.0, 3.0), indicator_step(0.0, 1.0)))
    rep.check("closed_form_vs_quadrature", worst_q <= 1e-8)
    rep.check("c_positive", c > 0)

    worst_sign = -math.inf
    for _ in range(pairs):
        n = int(rng.integers(0, 6))
        ln = 2.0 ** -n
        i, j = rng.choice(16, 2, replace=False)
        worst_sign = max(worst_sign, sign_pair_sum((i * ln, (i + 1) * ln), (j * ln, (j + 1) * ln)))
    rep.values["sign_pair_max"] = worst_sign
    rep.check("sign_inequality", worst_sign < 0)

    forms = {}
    ok = True
    for N in (3, 4, 5):
        cells = regular_cells(N)
        val = lemma_b_form(cells)
        forms[str(N)] = val
        ok &= val <= -c * len(cells) / 2 ** N + 1e-8
    rep.values["regular_cell_forms"] = forms
    rep.check("regular_cell_form", ok)

    grid = [1.0 + 0.5 * i for i in range(9)]
    prof = [monotone_profile(a) for a in grid]
    rep.values["monotone_profile"] = prof
    rep.check("monotone_profile_decreasing", all(x > y for x, y in zip(prof, prof[1:])))
    return rep
