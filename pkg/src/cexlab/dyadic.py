"""Dyadic intervals and piecewise-constant vector functions on [0,1).

Functions are stored as full binary trees whose leaves hold constant
vectors.  Nodes are immutable and may be shared, so a tree is really a
DAG: the stopping-time constructions reuse identical subtrees millions of
times and would be exponentially large if expanded.  Every node caches its
average and its height, which makes averages, Haar coefficients and cap
checks O(1) per node.

Haar functions use the L-infinity normalisation h_I = 1_{I+} - 1_{I-}, and
the Haar coefficient is D_I = <.>_{I+} - <.>_I, half the difference of the
child averages.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Sequence

DEFAULT_CAP = 40
EXPAND_LIMIT = 2_000_000


@dataclass(frozen=True, order=True)
class DyadicInterval:
    """[idx 2^-gen, (idx+1) 2^-gen) inside [0,1)."""

    gen: int
    idx: int

    def __post_init__(self):
        if self.gen < 0 or not 0 <= self.idx < (1 << self.gen):
            raise ValueError(f"invalid dyadic interval ({self.gen}, {self.idx})")

    @property
    def length(self) -> float:
        return 2.0 ** -self.gen

    @property
    def measure(self) -> Fraction:
        return Fraction(1, 1 << self.gen)

    @property
    def lo(self) -> Fraction:
        return Fraction(self.idx, 1 << self.gen)

    @property
    def hi(self) -> Fraction:
        return Fraction(self.idx + 1, 1 << self.gen)

    @property
    def minus(self) -> "DyadicInterval":
        return DyadicInterval(self.gen + 1, 2 * self.idx)

    @property
    def plus(self) -> "DyadicInterval":
        return DyadicInterval(self.gen + 1, 2 * self.idx + 1)

    def children(self) -> tuple["DyadicInterval", "DyadicInterval"]:
        return self.minus, self.plus

    def descendants(self, k: int) -> list["DyadicInterval"]:
        """ch^k(I) in left-to-right order."""
        base = self.idx << k
        return [DyadicInterval(self.gen + k, base + j) for j in range(1 << k)]

    def parent(self) -> "DyadicInterval":
        if self.gen == 0:
            raise ValueError("[0,1) has no parent")
        return DyadicInterval(self.gen - 1, self.idx >> 1)

    def contains(self, other: "DyadicInterval") -> bool:
        if other.gen < self.gen:
            return False
        return other.idx >> (other.gen - self.gen) == self.idx

    def disjoint(self, other: "DyadicInterval") -> bool:
        return not (self.contains(other) or other.contains(self))

    def path(self) -> list[int]:
        """Bits from the root down to this interval (0 = left, 1 = right)."""
        return [(self.idx >> (self.gen - 1 - k)) & 1 for k in range(self.gen)]

    def touches_boundary(self) -> bool:
        return self.idx == 0 or self.idx == (1 << self.gen) - 1

    @property
    def key(self) -> str:
        return f"{self.gen}:{self.idx}"

    @classmethod
    def from_key(cls, key: str) -> "DyadicInterval":
        g, i = key.split(":")
        return cls(int(g), int(i))

    def __repr__(self):
        return f"D({self.gen},{self.idx})"


ROOT = DyadicInterval(0, 0)


def I_n(n: int) -> DyadicInterval:
    """[0, 2^-n)."""
    return DyadicInterval(n, 0)


def J_n(n: int) -> DyadicInterval:
    """[2^-n, 2^-n+1), n >= 1."""
    return DyadicInterval(n, 1)


# --------------------------------------------------------------------------
# nodes


class Leaf:
    __slots__ = ("values", "frozen")
    height = 0

    def __init__(self, values: Sequence[float], frozen: bool = False):
        self.values = tuple(float(v) for v in values)
        self.frozen = frozen

    @property
    def avg(self) -> tuple:
        return self.values

    def __repr__(self):
        return f"Leaf{self.values}"


class Branch:
    __slots__ = ("left", "right", "avg", "height")

    def __init__(self, left, right):
        self.left = left
        self.right = right
        self.avg = tuple((a + b) * 0.5 for a, b in zip(left.avg, right.avg))
        self.height = 1 + max(left.height, right.height)

    def __repr__(self):
        return f"Branch(h={self.height})"


def is_leaf(node) -> bool:
    return node.__class__ is Leaf


def fold(root, leaf_fn: Callable, branch_fn: Callable):
    """Bottom-up reduction over the unique nodes of a (possibly shared) tree.

    `branch_fn(node, left_value, right_value)` is called once per distinct
    node; iteration is explicit so very deep trees are fine.
    """
    memo: dict[int, object] = {}
    stack = [root]
    while stack:
        node = stack[-1]
        key = id(node)
        if key in memo:
            stack.pop()
            continue
        if node.__class__ is Leaf:
            memo[key] = leaf_fn(node)
            stack.pop()
            continue
        lk, rk = id(node.left), id(node.right)
        if lk in memo and rk in memo:
            memo[key] = branch_fn(node, memo[lk], memo[rk])
            stack.pop()
        else:
            if rk not in memo:
                stack.append(node.right)
            if lk not in memo:
                stack.append(node.left)
    return memo[id(root)]


def rebuild(start, expand: Callable, memo: dict | None = None):
    """Iteratively build a node DAG from abstract keys.

    `expand(key)` returns either a finished node, or a pair (left_key,
    right_key) whose results become the children of a new Branch.  Keys
    must be hashable; equal keys yield the same shared node.
    """
    memo = {} if memo is None else memo
    if start in memo:
        return memo[start]
    pending: dict = {}
    stack = [start]
    while stack:
        key = stack[-1]
        if key in memo:
            stack.pop()
            continue
        kids = pending.get(key)
        if kids is None:
            out = expand(key)
            if isinstance(out, tuple):
                pending[key] = out
                kids = out
            else:
                memo[key] = out
                stack.pop()
                continue
        lk, rk = kids
        if lk in memo and rk in memo:
            memo[key] = Branch(memo[lk], memo[rk])
            del pending[key]
            stack.pop()
        else:
            if rk not in memo:
                stack.append(rk)
            if lk not in memo:
                stack.append(lk)
    return memo[start]


# --------------------------------------------------------------------------
# trees


class AdaptiveTree:
    """Piecewise-constant R^dim valued function on [0,1).

    Args:
        dim: number of value components.
        root: Leaf or Branch node.
        cap: maximal allowed leaf depth; exceeding it raises ValueError.
    """

    __slots__ = ("dim", "root", "cap")

    def __init__(self, dim: int, root, cap: int = DEFAULT_CAP):
        if root.height > cap:
            raise ValueError(f"tree depth {root.height} exceeds cap {cap}")
        if len(root.avg) != dim:
            raise ValueError(f"root has {len(root.avg)} components, expected {dim}")
        self.dim = dim
        self.root = root
        self.cap = cap

    @property
    def depth(self) -> int:
        return self.root.height

    @property
    def mean(self) -> tuple:
        return self.root.avg

    def __repr__(self):
        return f"AdaptiveTree(dim={self.dim}, depth={self.depth}, nodes={self.node_count()})"

    def node_count(self) -> int:
        """Distinct stored nodes (shared subtrees counted once)."""
        return len(unique_nodes(self.root))

    def leaf_count(self) -> int:
        """Number of leaves of the expanded tree (may be astronomically large)."""
        return fold(self.root, lambda n: 1, lambda n, a, b: a + b)

    def node_at(self, I: DyadicInterval):
        """Node covering I; a leaf above I if I lies inside a leaf."""
        node = self.root
        for bit in I.path():
            if node.__class__ is Leaf:
                return node
            node = node.right if bit else node.left
        return node

    def leaves(self) -> Iterator[tuple[DyadicInterval, tuple]]:
        """Explicit (interval, values) enumeration, left to right."""
        if self.leaf_count() > EXPAND_LIMIT:
            raise ValueError("tree too large to enumerate leaves explicitly")
        stack = [(self.root, 0, 0)]
        while stack:
            node, g, i = stack.pop()
            if node.__class__ is Leaf:
                yield DyadicInterval(g, i), node.values
            else:
                stack.append((node.right, g + 1, 2 * i + 1))
                stack.append((node.left, g + 1, 2 * i))

    def component(self, k: int) -> "AdaptiveTree":
        return AdaptiveTree(1, map_nodes(self.root, lambda v: (v[k],)), self.cap)

    def with_cap(self, cap: int) -> "AdaptiveTree":
        return AdaptiveTree(self.dim, self.root, cap)


def unique_nodes(root) -> list:
    seen: dict[int, object] = {}
    stack = [root]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen[id(node)] = node
        if node.__class__ is Branch:
            stack.append(node.left)
            stack.append(node.right)
    return list(seen.values())


def transform(root, expand: Callable, state=None):
    """Rebuild a node DAG driven by (node, state) pairs.

    `expand(node, state)` returns a finished node or ((left_node, left_state),
    (right_node, right_state)).  Pairs are memoized on node identity, so shared
    input subtrees stay shared in the output when the state repeats.
    """
    keep = {id(root): root}

    def exp(key):
        nid, st = key
        out = expand(keep[nid], st)
        if isinstance(out, tuple):
            (ln, ls), (rn, rs) = out
            keep[id(ln)] = ln
            keep[id(rn)] = rn
            return ((id(ln), ls), (id(rn), rs))
        return out

    return rebuild((id(root), state), exp)


def map_nodes(root, fn: Callable[[tuple], Sequence[float]]):
    """Apply `fn` to every leaf value vector, keeping the tree shape and sharing."""

    def expand(node, _):
        if node.__class__ is Leaf:
            return Leaf(fn(node.values), node.frozen)
        return ((node.left, None), (node.right, None))

    return transform(root, expand)


def zip_nodes(a, b, combine: Callable[[tuple, tuple], Sequence[float]] | None = None):
    """Common refinement of two node trees; leaf values are concatenated
    (or merged by `combine`)."""
    combine = combine or (lambda u, v: u + v)
    keep = {id(a): a, id(b): b}

    def exp(key):
        ka, kb = key
        x, y = keep[ka], keep[kb]
        if x.__class__ is Leaf and y.__class__ is Leaf:
            return Leaf(combine(x.values, y.values), x.frozen or y.frozen)
        xl, xr = (x, x) if x.__class__ is Leaf else (x.left, x.right)
        yl, yr = (y, y) if y.__class__ is Leaf else (y.left, y.right)
        for n in (xl, xr, yl, yr):
            keep[id(n)] = n
        return ((id(xl), id(yl)), (id(xr), id(yr)))

    return rebuild((id(a), id(b)), exp)


def zip_trees(*trees: AdaptiveTree) -> AdaptiveTree:
    """Stack several trees into one jointly refined tree."""
    root = trees[0].root
    dim = trees[0].dim
    for t in trees[1:]:
        root = zip_nodes(root, t.root)
        dim += t.dim
    cap = max(t.cap for t in trees)
    return AdaptiveTree(dim, root, cap)


def combine_trees(a: AdaptiveTree, b: AdaptiveTree, fn: Callable[[tuple, tuple], Sequence[float]], dim: int | None = None) -> AdaptiveTree:
    root = zip_nodes(a.root, b.root, fn)
    return AdaptiveTree(dim if dim is not None else len(root.avg), root, max(a.cap, b.cap))


def add(a: AdaptiveTree, b: AdaptiveTree, alpha: float = 1.0) -> AdaptiveTree:
    """a + alpha*b."""
    return combine_trees(a, b, lambda u, v: tuple(x + alpha * y for x, y in zip(u, v)), a.dim)


def scale(t: AdaptiveTree, alpha: float) -> AdaptiveTree:
    return AdaptiveTree(t.dim, map_nodes(t.root, lambda v: tuple(alpha * x for x in v)), t.cap)


# --------------------------------------------------------------------------
# builders


def constant(values, cap: int = DEFAULT_CAP) -> AdaptiveTree:
    values = tuple(values) if isinstance(values, (list, tuple)) else (values,)
    return AdaptiveTree(len(values), Leaf(values), cap)


def embed(I: DyadicInterval, inner, outer, cap: int = DEFAULT_CAP, dim: int | None = None) -> AdaptiveTree:
    """Node `inner` placed on I, node `outer` everywhere else."""
    node = inner
    for bit in reversed(I.path()):
        node = Branch(outer, node) if bit else Branch(node, outer)
    return AdaptiveTree(dim or len(inner.avg), node, cap)


def indicator(I: DyadicInterval, cap: int = DEFAULT_CAP) -> AdaptiveTree:
    return embed(I, Leaf((1.0,)), Leaf((0.0,)), cap)


def haar(I: DyadicInterval, cap: int = DEFAULT_CAP) -> AdaptiveTree:
    """h_I = 1_{I+} - 1_{I-}."""
    return embed(I, Branch(Leaf((-1.0,)), Leaf((1.0,))), Leaf((0.0,)), cap)


def from_pieces(pieces: Iterable[tuple[DyadicInterval, Sequence[float]]], cap: int = DEFAULT_CAP) -> AdaptiveTree:
    """Tree from (interval, values) pairs that partition [0,1)."""
    table = {I: tuple(float(x) for x in v) for I, v in pieces}
    if not table:
        raise ValueError("no pieces")
    dim = len(next(iter(table.values())))
    total = sum((I.measure for I in table), Fraction(0))
    if total != 1:
        raise ValueError("pieces do not partition [0,1)")
    inner = {I.parent() for I in table if I.gen > 0}
    frontier = set(inner)
    while frontier:
        nxt = {I.parent() for I in frontier if I.gen > 0}
        nxt -= inner
        inner |= nxt
        frontier = nxt
    if inner & set(table):
        raise ValueError("pieces overlap")

    def expand(I):
        if I in table:
            return Leaf(table[I])
        if I not in inner:
            raise ValueError(f"{I} is not covered")
        return I.children()

    return AdaptiveTree(dim, rebuild(ROOT, expand), cap)


def from_array(values, cap: int = DEFAULT_CAP) -> AdaptiveTree:
    """Scalar tree from 2^n uniform cell values (n inferred)."""
    vals = [float(v) for v in values]
    n = len(vals).bit_length() - 1
    if len(vals) != 1 << n:
        raise ValueError("length must be a power of two")
    level = [Leaf((v,)) for v in vals]
    while len(level) > 1:
        level = [Branch(level[2 * i], level[2 * i + 1]) for i in range(len(level) // 2)]
    return AdaptiveTree(1, level[0], cap)


def to_array(tree: AdaptiveTree, n: int, k: int = 0):
    """Averages of component k over the 2^n cells of generation n."""
    return [average(tree, DyadicInterval(n, i))[k] for i in range(1 << n)]


# --------------------------------------------------------------------------
# averages, Haar coefficients, martingale differences


def average(tree: AdaptiveTree, I: DyadicInterval) -> tuple:
    return tree.node_at(I).avg


def haar_coeff(tree: AdaptiveTree, I: DyadicInterval) -> tuple:
    node = tree.node_at(I)
    return node_haar(node)


def node_haar(node) -> tuple:
    if node.__class__ is Leaf:
        return tuple(0.0 for _ in node.values)
    return tuple((b - a) * 0.5 for a, b in zip(node.left.avg, node.right.avg))


def martingale_diff(tree: AdaptiveTree, I: DyadicInterval) -> AdaptiveTree:
    """Delta_I = D_I h_I, returned as a function on [0,1) vanishing off I."""
    c = haar_coeff(tree, I)
    zero = Leaf(tuple(0.0 for _ in c))
    inner = Branch(Leaf(tuple(-x for x in c)), Leaf(c))
    return embed(I, inner, zero, max(tree.cap, I.gen + 1), tree.dim)


def expectation(tree: AdaptiveTree, n: int) -> AdaptiveTree:
    """E_n: conditional expectation onto generation-n intervals."""

    def expand(node, g):
        if node.__class__ is Leaf:
            return node
        if g == n:
            return Leaf(node.avg)
        return ((node.left, g + 1), (node.right, g + 1))

    return AdaptiveTree(tree.dim, transform(tree.root, expand, 0), tree.cap)


def restrict(tree: AdaptiveTree, I: DyadicInterval):
    """Node describing tree|_I rescaled to [0,1)."""
    return tree.node_at(I)


def check_martingale(tree: AdaptiveTree, tol: float = 1e-12) -> bool:
    """Every cached branch average agrees with the mean of its children."""

    def br(node, a, b):
        ok = a and b
        for m, x, y in zip(node.avg, node.left.avg, node.right.avg):
            if abs(m - 0.5 * (x + y)) > tol * max(1.0, abs(m)):
                ok = False
        return ok

    return fold(tree.root, lambda n: True, br)


def distribution(tree: AdaptiveTree, k: int = 0) -> dict[float, float]:
    """Level-set measures {value: measure} of component k."""

    def leaf(n):
        return {n.values[k]: 1.0}

    def br(node, a, b):
        out = {v: 0.5 * m for v, m in a.items()}
        for v, m in b.items():
            out[v] = out.get(v, 0.0) + 0.5 * m
        return out

    return fold(tree.root, leaf, br)


def frozen_measure(tree: AdaptiveTree) -> float:
    return fold(tree.root, lambda n: 1.0 if n.frozen else 0.0, lambda n, a, b: 0.5 * (a + b))


# --------------------------------------------------------------------------
# measure-preserving rearrangement


def _union(intervals: Iterable[DyadicInterval]) -> list[tuple[Fraction, Fraction]]:
    spans = sorted((I.lo, I.hi) for I in intervals)
    out: list[list[Fraction]] = []
    for lo, hi in spans:
        if out and lo < out[-1][1]:
            raise ValueError("overlapping intervals in plan")
        if out and lo == out[-1][1]:
            out[-1][1] = hi
        else:
            out.append([lo, hi])
    return [(a, b) for a, b in out]


def graft(tree: AdaptiveTree, placements: dict[DyadicInterval, object], cap: int | None = None) -> AdaptiveTree:
    """Replace the function on each target interval by the given node."""
    cap = tree.cap if cap is None else cap
    prefixes: set[DyadicInterval] = set()
    for T in placements:
        J = T
        while J.gen > 0:
            J = J.parent()
            prefixes.add(J)
    if prefixes & set(placements):
        raise ValueError("nested targets")

    def build(node, I):
        if I in placements:
            return placements[I]
        if I not in prefixes:
            return node
        left, right = (node, node) if node.__class__ is Leaf else (node.left, node.right)
        return Branch(build(left, I.minus), build(right, I.plus))

    return AdaptiveTree(tree.dim, build(tree.root, ROOT), cap)


def compose_rearrangement(tree: AdaptiveTree, plan: Sequence[tuple[DyadicInterval, DyadicInterval]], cap: int | None = None) -> AdaptiveTree:
    """Compose with the piecewise-affine map sending each target onto its source.

    A source may feed several targets (periodisation), but the targets fed
    by a source must have total measure equal to the source, and the
    distinct sources and the targets must tile the same region.
    """
    if not plan:
        return tree
    sources = sorted({s for s, _ in plan})
    targets = [t for _, t in plan]
    if len(set(targets)) != len(targets):
        raise ValueError("repeated target")
    if _union(sources) != _union(targets):
        raise ValueError("sources and targets do not tile the same region")
    fed: dict[DyadicInterval, Fraction] = {}
    for s, t in plan:
        fed[s] = fed.get(s, Fraction(0)) + t.measure
    for s in sources:
        if fed[s] != s.measure:
            raise ValueError(f"source {s} is not measure-preserved")
    out = graft(tree, {t: restrict(tree, s) for s, t in plan}, cap)
    return out


# --------------------------------------------------------------------------
# serialization


def _fmt(x: float) -> str:
    if x != x or x in (float("inf"), float("-inf")):
        raise ValueError("non-finite value")
    s = format(x, ".17g")
    if "e" not in s and "." not in s:
        s += ".0"
    return s


def dumps(obj) -> str:
    """Deterministic JSON with 17-significant-digit floats."""
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return _fmt(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {dumps(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(dumps(v) for v in obj) + "]"
    if hasattr(obj, "item"):
        return dumps(obj.item())
    raise TypeError(f"cannot serialize {type(obj)}")


def to_json(tree: AdaptiveTree) -> dict:
    """Nested {dim, root} form with {"leaf": [...]} / {"branch": [l, r]} nodes."""
    if tree.leaf_count() > EXPAND_LIMIT:
        raise ValueError("tree too large for the nested form; use to_dag_json")
    return {"dim": tree.dim, "root": _node_json(tree.root)}


def _node_json(node):
    if node.__class__ is Leaf:
        return {"leaf": list(node.values)}
    # explicit stack would be overkill: nested form is only used for small trees
    return {"branch": [_node_json(node.left), _node_json(node.right)]}


def from_json(obj: dict, cap: int = DEFAULT_CAP) -> AdaptiveTree:
    def build(d):
        if "leaf" in d:
            return Leaf(d["leaf"])
        l, r = d["branch"]
        return Branch(build(l), build(r))

    return AdaptiveTree(int(obj["dim"]), build(obj["root"]), cap)


def to_dag_json(tree: AdaptiveTree) -> dict:
    """Shared-node form: nodes listed children-first, root is the last one."""
    index: dict[int, int] = {}
    nodes: list = []

    def leaf(n):
        index[id(n)] = len(nodes)
        nodes.append({"leaf": list(n.values)} if not n.frozen else {"leaf": list(n.values), "frozen": True})
        return index[id(n)]

    def br(n, a, b):
        index[id(n)] = len(nodes)
        nodes.append({"branch": [a, b]})
        return index[id(n)]

    fold(tree.root, leaf, br)
    return {"dim": tree.dim, "cap": tree.cap, "nodes": nodes}


def from_dag_json(obj: dict) -> AdaptiveTree:
    built: list = []
    for d in obj["nodes"]:
        if "leaf" in d:
            built.append(Leaf(d["leaf"], bool(d.get("frozen", False))))
        else:
            a, b = d["branch"]
            built.append(Branch(built[a], built[b]))
    return AdaptiveTree(int(obj["dim"]), built[-1], int(obj.get("cap", DEFAULT_CAP)))
