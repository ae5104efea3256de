"""Small-step rearrangements: one Haar jump of size D is replaced by a walk
of steps D/d stopped at +-d (generic), or by a planar walk on a triangle
that protects the Haar shift pairing (triangle variant)."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .dyadic import (AdaptiveTree, Branch, DyadicInterval, EXPAND_LIMIT, Leaf, frozen_measure, rebuild)


def default_cap(d: int) -> int:
    """Generations allowed per stopping region."""
    return 8 * d * d + 16


def _mix(weights_and_nodes) -> Leaf:
    vals = None
    for lam, node in weights_and_nodes:
        v = node.avg
        vals = [lam * x for x in v] if vals is None else [a + lam * x for a, x in zip(vals, v)]
    return Leaf(vals, frozen=True)


# --------------------------------------------------------------------------
# stopping families


@dataclass
class StoppingFamily:
    """Stopping masses (exact binary fractions) of one region, relative to |I|.

    Explicit interval lists are produced on demand by `intervals`.
    """

    I: DyadicInterval
    d: int
    cap: int
    variant: str
    masses: dict = field(default_factory=dict)
    intermediate: Fraction = Fraction(0)

    @property
    def minus(self) -> Fraction:
        return self.masses["minus"]

    @property
    def plus(self) -> Fraction:
        return self.masses.get("plus", Fraction(0)) + self.masses.get("plus_plus", Fraction(0)) + self.masses.get("plus_minus", Fraction(0))

    @property
    def leftover(self) -> Fraction:
        return self.masses["leftover"]

    @property
    def stopped(self) -> Fraction:
        return sum(v for k, v in self.masses.items() if k != "leftover")

    def total(self) -> Fraction:
        return sum(self.masses.values(), Fraction(0))

    def intervals(self, limit: int = 100_000) -> dict[str, list]:
        """Explicit classes {name: [DyadicInterval]}; leftover entries carry the walk state."""
        if self.variant == "generic":
            return _generic_intervals(self.I, self.d, self.cap, limit)
        return _triangle_intervals(self.I, self.d, self.cap, limit)


def stopping_family(I: DyadicInterval, d: int, depth_cap: int | None = None) -> StoppingFamily:
    """Stopping masses of the +-1 walk (right child +1, left child -1) at +-d."""
    if d < 1:
        raise ValueError("d must be a positive integer")
    cap = default_cap(d) if depth_cap is None else depth_cap
    counts = {0: 1}
    minus = plus = 0
    inter = 0
    stopped_minus = Fraction(0)
    stopped_plus = Fraction(0)
    for t in range(cap):
        # every live path at depth t is a strict ancestor of a stopping interval (or leftover)
        inter += Fraction(sum(counts.values()), 1 << t)
        nxt: dict[int, int] = {}
        for s, c in counts.items():
            for u in (s - 1, s + 1):
                nxt[u] = nxt.get(u, 0) + c
        minus, plus = nxt.pop(-d, 0), nxt.pop(d, 0)
        stopped_minus += Fraction(minus, 1 << (t + 1))
        stopped_plus += Fraction(plus, 1 << (t + 1))
        counts = nxt
        if not counts:
            break
    t_end = min(cap, t + 1)
    left = Fraction(sum(counts.values()), 1 << t_end)
    fam = StoppingFamily(I, d, cap, "generic",
                         {"minus": stopped_minus, "plus": stopped_plus, "leftover": left}, inter)
    return fam


def intermediate_mass(I: DyadicInterval, d: int, cap: int | None = None) -> float:
    """sum of |K|/|I| over strict ancestors K of stopping intervals (expected stopping time)."""
    return float(stopping_family(I, d, cap).intermediate)


def _generic_intervals(I: DyadicInterval, d: int, cap: int, limit: int) -> dict[str, list]:
    out = {"minus": [], "plus": [], "leftover": []}
    stack = [(I, 0, 0)]
    n = 0
    while stack:
        J, s, t = stack.pop()
        if s == -d or s == d:
            out["minus" if s < 0 else "plus"].append(J)
        elif t == cap:
            out["leftover"].append((J, s))
        else:
            lo, hi = J.children()
            stack += [(hi, s + 1, t + 1), (lo, s - 1, t + 1)]
            continue
        n += 1
        if n > limit:
            raise MemoryError("too many stopping intervals; raise limit or lower the cap")
    for v in out.values():
        v.sort(key=lambda x: x if isinstance(x, DyadicInterval) else x[0])
    return out


# --------------------------------------------------------------------------
# generic transform


def small_step_transform(tree: AdaptiveTree, d: int, depth_cap: int | None = None) -> AdaptiveTree:
    """Iterated small-step rearrangement of every component of `tree`.

    In the region of a source node the walk starts at 0; reaching -d places
    the transformed left child, +d the transformed right child.  After
    `depth_cap` generations the cell is frozen at the running average.
    """
    if d < 1:
        raise ValueError("d must be a positive integer")
    cap = default_cap(d) if depth_cap is None else depth_cap
    keep: dict[int, object] = {}

    def expand(key):
        if key[0] == "T":
            src = keep[key[1]]
            if src.__class__ is Leaf:
                return src
            keep[id(src.left)] = src.left
            keep[id(src.right)] = src.right
            if d == 1:
                return (("T", id(src.left)), ("T", id(src.right)))
            return (("W", key[1], -1, 1), ("W", key[1], 1, 1))
        _, sid, s, t = key
        src = keep[sid]
        if s == -d:
            return rebuild(("T", id(src.left)), expand, memo)
        if s == d:
            return rebuild(("T", id(src.right)), expand, memo)
        if t == cap:
            lam = (s + d) / (2 * d)
            return _mix(((1 - lam, src.left), (lam, src.right)))
        return (("W", sid, s - 1, t + 1), ("W", sid, s + 1, t + 1))

    memo: dict = {}
    keep[id(tree.root)] = tree.root
    root = rebuild(("T", id(tree.root)), expand, memo)
    if len(memo) > EXPAND_LIMIT:
        raise MemoryError("transform produced too many nodes")
    return AdaptiveTree(tree.dim, root, max(tree.cap, root.height))


# --------------------------------------------------------------------------
# triangle variant


def _tri_kind(X: int, Y: int, d: int) -> str:
    D = 2 * d
    if (X, Y) == (-D, 0):
        return "minus"
    if (X, Y) == (D, D):
        return "plus_plus"
    if (X, Y) == (D, -D):
        return "plus_minus"
    if 2 * Y - X - D == 0:
        return "upper"
    if -2 * Y - X - D == 0:
        return "lower"
    if X == D:
        return "base"
    return "interior"


def _tri_moves(X: int, Y: int, kind: str):
    """Grandchild states (ll, lr, rl, rr) of one two-generation step."""
    if kind == "interior":
        a = (X - 2, Y)
        return a, a, (X + 2, Y - 1), (X + 2, Y + 1)
    if kind == "upper":
        a, b = (X - 2, Y - 1), (X + 2, Y + 1)
    elif kind == "lower":
        a, b = (X - 2, Y + 1), (X + 2, Y - 1)
    else:
        a, b = (X, Y - 1), (X, Y + 1)
    return a, a, b, b


def triangle_weights(X: int, Y: int, d: int) -> tuple[float, float, float]:
    """Barycentric coordinates (minus, plus_plus, plus_minus) of a lattice state."""
    D = 2 * d
    lm = (D - X) / (2 * D)
    s = (D + X) / (2 * D)
    diff = Y / D
    return lm, 0.5 * (s + diff), 0.5 * (s - diff)


def triangle_stopping(I: DyadicInterval, d: int, depth_cap: int | None = None) -> StoppingFamily:
    """Stopping masses of the triangle walk; all stopping intervals have even generation."""
    if d < 1:
        raise ValueError("d must be a positive integer")
    cap = triangle_cap(d) if depth_cap is None else depth_cap
    counts = {(0, 0): 1}
    got = {"minus": Fraction(0), "plus_plus": Fraction(0), "plus_minus": Fraction(0)}
    inter = Fraction(0)
    t = 0
    while t + 2 <= cap and counts:
        inter += Fraction(sum(counts.values()), 1 << t)
        nxt: dict = {}
        for (X, Y), c in counts.items():
            for st in _tri_moves(X, Y, _tri_kind(X, Y, d)):
                nxt[st] = nxt.get(st, 0) + c
        t += 2
        for st in list(nxt):
            kind = _tri_kind(*st, d)
            if kind in got:
                got[kind] += Fraction(nxt.pop(st), 1 << t)
        counts = nxt
    got["leftover"] = Fraction(sum(counts.values()), 1 << t)
    return StoppingFamily(I, d, cap, "triangle", got, inter)


def triangle_cap(d: int) -> int:
    """Even number of generations per triangle region."""
    c = 2 * default_cap(d)
    return c + (c % 2)


def _triangle_intervals(I: DyadicInterval, d: int, cap: int, limit: int) -> dict[str, list]:
    out = {"minus": [], "plus_plus": [], "plus_minus": [], "leftover": []}
    stack = [(I, (0, 0), 0)]
    n = 0
    while stack:
        J, st, t = stack.pop()
        kind = _tri_kind(*st, d)
        if kind in out:
            out[kind].append(J)
        elif t + 2 > cap:
            out["leftover"].append((J, st))
        else:
            for K, nst in zip(J.descendants(2), _tri_moves(*st, kind)):
                stack.append((K, nst, t + 2))
            continue
        n += 1
        if n > limit:
            raise MemoryError("too many stopping intervals; raise limit or lower the cap")
    for v in out.values():
        v.sort(key=lambda x: x if isinstance(x, DyadicInterval) else x[0])
    return out


def _check_triangle_shape(root, f_index: int):
    """Every right child must be constant except possibly in component f_index
    one level down."""
    from .dyadic import unique_nodes
    for node in unique_nodes(root):
        if node.__class__ is Leaf:
            continue
        r = node.right
        if r.__class__ is Leaf:
            continue
        a, b = r.left, r.right
        if a.__class__ is not Leaf or b.__class__ is not Leaf:
            raise ValueError("triangle transform needs the right child to split at most once")
        for k, (x, y) in enumerate(zip(a.values, b.values)):
            if k != f_index and x != y:
                raise ValueError("triangle transform needs w, sigma, g constant on right children")


def small_step_triangle_transform(quad: AdaptiveTree, d: int, depth_cap: int | None = None,
                                  f_index: int = 2) -> AdaptiveTree:
    """Triangle-walk rearrangement; recursion only inside the minus vertex class."""
    if d < 1:
        raise ValueError("d must be a positive integer")
    cap = triangle_cap(d) if depth_cap is None else depth_cap
    if cap % 2:
        raise ValueError("triangle cap must be even")
    _check_triangle_shape(quad.root, f_index)
    keep: dict[int, object] = {}

    def parts(src):
        r = src.right
        if r.__class__ is Leaf:
            return src.left, r, r
        return src.left, r.right, r.left

    def expand(key):
        tag = key[0]
        if tag == "T":
            src = keep[key[1]]
            if src.__class__ is Leaf:
                return src
            key = ("G", key[1], 0, 0, 0)
        elif tag == "C":  # odd-generation node that does not split
            child = ("G",) + key[1:]
            return (child, child)
        elif tag == "P":  # odd-generation node splitting in the second coordinate
            _, sid, X1, Y1, X2, Y2, t = key
            return (("G", sid, X1, Y1, t), ("G", sid, X2, Y2, t))
        _, sid, X, Y, t = key
        src = keep[sid]
        kind = _tri_kind(X, Y, d)
        left, pp, pm = parts(src)
        if kind == "minus":
            keep[id(left)] = left
            return rebuild(("T", id(left)), expand, memo)
        if kind == "plus_plus":
            return pp
        if kind == "plus_minus":
            return pm
        if t == cap:
            lm, lpp, lpm = triangle_weights(X, Y, d)
            return _mix(((lm, left), (lpp, pp), (lpm, pm)))
        ll, lr, rl, rr = _tri_moves(X, Y, kind)
        right = ("C", sid) + rl + (t + 2,) if rl == rr else ("P", sid) + rl + rr + (t + 2,)
        return (("C", sid) + ll + (t + 2,), right)

    memo: dict = {}
    keep[id(quad.root)] = quad.root
    root = rebuild(("T", id(quad.root)), expand, memo)
    if len(memo) > EXPAND_LIMIT:
        raise MemoryError("transform produced too many nodes")
    return AdaptiveTree(quad.dim, root, max(quad.cap, root.height))


def leftover_report(tree: AdaptiveTree) -> dict:
    return {"leftover_measure": frozen_measure(tree)}
