"""Periodisations, averaged quasi-periodisations and iterated remodeling.

The remodeled function is built as a shared node DAG.  Every cell of a
chase (regular or exceptional) holds a full copy of the region content; a
regular cell of step k < K is split into the four grandchildren of the
content, each remodeled at step k + 1.  Exceptional cells are chased until
their total relative measure drops below 2^-chase_bits.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dyadic import (AdaptiveTree, Branch, DyadicInterval, EXPAND_LIMIT, Leaf, ROOT, embed, fold, graft,
                     rebuild, unique_nodes, zip_nodes)

MIN_FREQUENCY = 3


def _kids(node):
    if node.__class__ is Leaf:
        return node, node
    return node.left, node.right


def _grandchildren(node):
    l, r = _kids(node)
    return _kids(l) + _kids(r)


def _descend(node, stride: int):
    """The 2^stride descendants of `node` (a leaf stands in for its own)."""
    return _grandchildren(node) if stride == 2 else _kids(node)


def _pack(nodes):
    while len(nodes) > 1:
        nodes = [Branch(nodes[i], nodes[i + 1]) for i in range(0, len(nodes), 2)]
    return nodes[0]


def _full(leaf_node, depth: int):
    node = leaf_node
    for _ in range(depth):
        node = Branch(node, node)
    return node


# --------------------------------------------------------------------------
# one-region operations


def periodise_node(node, N: int):
    """2^N rescaled copies of `node`."""
    if N < 0:
        raise ValueError("N must be nonnegative")
    return _full(node, N)


def second_diff_node(node):
    """E_{ch^2} f - <f>, constant on the four grandchildren."""
    m = node.avg
    g = [Leaf([a - b for a, b in zip(x.avg, m)]) for x in _grandchildren(node)]
    return Branch(Branch(g[0], g[1]), Branch(g[2], g[3]))


def ch2_average_node(node, stride: int = 2):
    """E_{ch^2} f as a depth-2 node (E_{ch} f for stride 1)."""
    return _pack([Leaf(x.avg) for x in _descend(node, stride)])


def diff_node(node, stride: int = 2):
    """E_{ch^stride} f - <f>."""
    m = node.avg
    return _pack([Leaf([a - b for a, b in zip(x.avg, m)]) for x in _descend(node, stride)])


def quasi_periodise_avg_node(node, N: int):
    """Regular cells carry E_{ch^2} f, the two boundary cells the plain average.

    N = 0 (terminal cells) is the plain E_{ch^2} f."""
    if N < 0:
        raise ValueError("N must be nonnegative")
    reg = ch2_average_node(node)
    if N == 0:
        return reg
    exc = Leaf(node.avg)
    mid = reg
    left, right = exc, exc
    for _ in range(N - 1):
        left, right, mid = Branch(left, mid), Branch(mid, right), Branch(mid, mid)
    return Branch(left, right)


def _on_interval(tree: AdaptiveTree, I: DyadicInterval, fn) -> AdaptiveTree:
    node = fn(tree.node_at(I))
    return graft(tree, {I: node}, max(tree.cap, I.gen + node.height))


def periodise(tree: AdaptiveTree, I: DyadicInterval, N: int) -> AdaptiveTree:
    """tree with tree|_I replaced by its periodisation of frequency N."""
    return _on_interval(tree, I, lambda n: periodise_node(n, N))


def second_diff(tree: AdaptiveTree, I: DyadicInterval) -> AdaptiveTree:
    """Second order martingale difference over I (zero off I)."""
    node = second_diff_node(tree.node_at(I))
    zero = Leaf([0.0] * tree.dim)
    return embed(I, node, zero, max(tree.cap, I.gen + 2), tree.dim)


def quasi_periodise_avg(tree: AdaptiveTree, I: DyadicInterval, N: int) -> AdaptiveTree:
    return _on_interval(tree, I, lambda n: quasi_periodise_avg_node(n, N))


def identity_defect(node, N: int) -> float:
    """max |QP(f) - <f> - QP(D2 f)| over cells; zero up to rounding."""
    a = quasi_periodise_avg_node(node, N)
    b = quasi_periodise_avg_node(second_diff_node(node), N)
    m = node.avg
    worst = 0.0
    stack = [(a, b)]
    while stack:
        x, y = stack.pop()
        if x.__class__ is Leaf:
            worst = max(worst, max(abs(u - c - v) for u, c, v in zip(x.values, m, y.values)))
        else:
            stack += [(x.left, y.left), (x.right, y.right)]
    return worst


# --------------------------------------------------------------------------
# schedules


@dataclass
class Schedule:
    """Frequencies of starting intervals.

    `default` is used unless `overrides` (interval key -> N) or `policy`
    (called as policy(interval, step, level)) say otherwise.  With neither,
    frequencies depend only on (step, level) and the output DAG is shared.
    """

    default: int = MIN_FREQUENCY
    overrides: dict = field(default_factory=dict)
    policy: Callable | None = None

    @property
    def positional(self) -> bool:
        return bool(self.overrides) or self.policy is not None

    def frequency(self, I: DyadicInterval | None, step: int, level: int) -> int:
        if I is not None and I.key in self.overrides:
            N = self.overrides[I.key]
        elif self.policy is not None:
            N = self.policy(I, step, level)
        else:
            N = self.default
        if N < MIN_FREQUENCY:
            raise ValueError(f"frequency {N} below the minimum {MIN_FREQUENCY}")
        return int(N)

    @classmethod
    def from_json(cls, obj: dict) -> "Schedule":
        return cls(int(obj.get("default", MIN_FREQUENCY)), {str(k): int(v) for k, v in obj.get("overrides", obj).items()
                                                            if k != "default"})


@dataclass
class StartingInterval:
    interval: DyadicInterval | None
    N: int | None
    step: int
    level: int
    content: object  # node whose second difference drives the contribution
    bits: int = 0  # sum of (N - 1) over the enclosing chase

    @property
    def contribution(self):
        """D_J F on J as a node (rescaled to [0,1))."""
        return quasi_periodise_avg_node(second_diff_node(self.content), self.N)

    def cells(self, k: int, N: int | None = None):
        """(lo, hi, value) arrays of D_J F for component k on the line."""
        N = self.N if N is None else N
        I = self.interval
        vals = np.array([x.avg[k] - self.content.avg[k] for x in _grandchildren(self.content)])
        h = float(I.length) / 2 ** N
        starts = float(I.lo) + h * (np.arange(1, 2 ** N - 1) if N else np.zeros(1))
        q = h / 4
        lo = (starts[:, None] + q * np.arange(4)[None, :]).ravel()
        return lo, lo + q, np.tile(vals, len(starts))


@dataclass
class RemodelState:
    """Result of K remodeling steps."""

    step: int
    tree: AdaptiveTree
    averaged: AdaptiveTree
    schedule: Schedule
    chase_bits: int
    starting: list = field(default_factory=list)
    residual_measure: float = 0.0
    stats: dict = field(default_factory=dict)
    limit: AdaptiveTree | None = None  # residual cells frozen at their average


# --------------------------------------------------------------------------
# iterated remodeling


def _children_iv(I, bit):
    if I is None:
        return None
    return I.plus if bit else I.minus


def _build(root, K: int, schedule: Schedule, chase_bits: int, mode: str, record: list | None,
           chase_levels: int | None = None, stride: int = 2):
    """mode 'F': remodeled function; 'X': averaged counterpart of step K;
    'D': the sum of the contributions of the step-K starting intervals;
    'S': as 'F' with residual cells frozen at the content average."""
    positional = schedule.positional
    keep: dict[int, object] = {id(root): root}
    memo: dict = {}
    zero = Leaf([0.0] * len(root.avg))
    max_level = chase_levels if chase_levels is not None else 1 << 30

    def reg_key(cid, step, I):
        return ("G", cid, step, I)

    def expand(key):
        tag = key[0]
        if tag == "R":
            # chase region: (cid, step, level, exceptional bits so far, interval)
            _, cid, step, level, e, I = key
            C = keep[cid]
            if C.__class__ is Leaf:
                return zero if mode == "D" else C
            if e >= chase_bits or level > max_level:
                # residual cell: a terminal starting interval of frequency 0
                if record is not None:
                    record.append(StartingInterval(I, 0, step, level, C, e))
                if mode == "S":
                    return Leaf(C.avg, frozen=True)
                return expand(reg_key(cid, step, I))
            N = schedule.frequency(I, step, level)
            if record is not None:
                record.append(StartingInterval(I, N, step, level, C, e))
            nb = e + N - 1
            return (("L", cid, step, level, nb, _children_iv(I, 0), N - 1),
                    ("Rt", cid, step, level, nb, _children_iv(I, 1), N - 1))
        if tag in ("L", "Rt"):
            _, cid, step, level, nb, I, m = key
            if m == 0:
                return expand(("R", cid, step, level + 1, nb, I))
            inner = ("M", cid, step, _children_iv(I, 1 if tag == "L" else 0), m - 1)
            edge = (tag, cid, step, level, nb, _children_iv(I, 0 if tag == "L" else 1), m - 1)
            return (edge, inner) if tag == "L" else (inner, edge)
        if tag == "M":
            _, cid, step, I, m = key
            if m == 0:
                return expand(reg_key(cid, step, I))
            return (("M", cid, step, _children_iv(I, 0), m - 1), ("M", cid, step, _children_iv(I, 1), m - 1))
        if tag == "G":
            _, cid, step, I = key
            C = keep[cid]
            if C.__class__ is Leaf:
                return zero if mode == "D" else C
            if step == K:
                if mode == "X":
                    return ch2_average_node(C, stride)
                if mode == "D":
                    return diff_node(C, stride)
                return C
            g = _descend(C, stride)
            for x in g:
                keep[id(x)] = x
            ivs = [None] * len(g) if I is None else I.descendants(stride)
            ks = [("R", id(x), step + 1, 0, 0, iv) for x, iv in zip(g, ivs)]
            if stride == 1:
                return ks[0], ks[1]
            return (("B", ks[0], ks[1]), ("B", ks[2], ks[3]))
        if tag == "B":
            return key[1], key[2]
        raise KeyError(tag)

    node = rebuild(("R", id(root), 1, 0, 0, ROOT if positional else None), expand, memo)
    if len(memo) > EXPAND_LIMIT:
        raise MemoryError("remodeling produced too many nodes")
    return node


def _max_abs_leaf(root) -> float:
    return fold(root, lambda n: max(abs(v) for v in n.values), lambda n, a, b: max(a, b))


def decomposition_defect(tree: AdaptiveTree, schedule: Schedule, K: int, chase_bits: int = 30,
                         chase_levels: int | None = None, stride: int = 2) -> list[float]:
    """max |X^k - X^{k-1} - sum_{J in step k} D_J F| for k = 1..K."""
    out = []
    prev = Leaf(tree.root.avg)
    for k in range(1, K + 1):
        cur = _build(tree.root, k, schedule, chase_bits, "X", None, chase_levels, stride)
        dk = _build(tree.root, k, schedule, chase_bits, "D", None, chase_levels, stride)
        diff = zip_nodes(zip_nodes(cur, prev, lambda a, b: [x - y for x, y in zip(a, b)]), dk,
                         lambda a, b: [x - y for x, y in zip(a, b)])
        out.append(_max_abs_leaf(diff))
        prev = cur
    return out


def remodel_iterate(tree: AdaptiveTree, schedule: Schedule | None = None, K: int = 3,
                    chase_bits: int = 30, record: bool | None = None, chase_levels: int | None = None,
                    stride: int = 2, verify: bool = True, tol: float = 1e-12,
                    limit: bool = False) -> RemodelState:
    """K steps of iterated remodeling.

    Where chasing stops (relative measure 2^-chase_bits, or beyond
    `chase_levels` levels) the exceptional cell becomes a terminal starting
    interval of frequency 0: it is treated as a regular cell, so the output
    stays a rearrangement and the decomposition stays exact.

    With `limit`, also builds the surrogate of the infinite chase: residual
    cells frozen at the content average.  It agrees with the infinite limit
    on every dyadic interval not strictly inside a residual cell, and on the
    boundary-touching ones inside it.
    """
    schedule = schedule or Schedule()
    if K < 1:
        raise ValueError("K must be at least 1")
    if stride not in (1, 2):
        raise ValueError("stride must be 1 or 2")
    rec = [] if (record if record is not None else schedule.positional) else None
    root = _build(tree.root, K, schedule, chase_bits, "F", rec, chase_levels, stride)
    avg = _build(tree.root, K, schedule, chase_bits, "X", None, chase_levels, stride)
    out = AdaptiveTree(tree.dim, root, max(tree.cap, root.height))
    xk = AdaptiveTree(tree.dim, avg, max(tree.cap, avg.height))
    state = RemodelState(K, out, xk, schedule, chase_bits, rec or [])
    if limit:
        lim = _build(tree.root, K, schedule, chase_bits, "S", None, chase_levels, stride)
        state.limit = AdaptiveTree(tree.dim, lim, max(tree.cap, lim.height))
    acc = bookkeeping(tree.root, K, schedule, chase_bits, chase_levels, stride)
    state.residual_measure = acc["residual"]
    state.stats = {"nodes": len(unique_nodes(root)), "depth": root.height, **acc}
    scale = max(1.0, max(abs(v) for v in tree.root.avg))
    if rec is not None and stride == 2:
        for si in rec:
            if si.N == 0:
                continue
            d = identity_defect(si.content, si.N)
            if d > tol * scale:
                raise ArithmeticError(f"quasi-periodisation identity fails by {d}")
    if verify:
        defects = decomposition_defect(tree, schedule, K, chase_bits, chase_levels, stride)
        state.stats["decomposition_defect"] = defects
        if max(defects) > tol * scale:
            raise ArithmeticError(f"decomposition identity fails: {defects}")
    return state


def averaged_counterparts(tree: AdaptiveTree, schedule: Schedule | None = None, K: int = 3,
                          chase_bits: int = 30, chase_levels: int | None = None,
                          stride: int = 2) -> list[AdaptiveTree]:
    """[X^0, X^1, ..., X^K]."""
    schedule = schedule or Schedule()
    out = [AdaptiveTree(tree.dim, Leaf(tree.root.avg), tree.cap)]
    for k in range(1, K + 1):
        node = _build(tree.root, k, schedule, chase_bits, "X", None, chase_levels, stride)
        out.append(AdaptiveTree(tree.dim, node, max(tree.cap, node.height)))
    return out


def bookkeeping(root, K: int, schedule: Schedule, chase_bits: int = 30, chase_levels: int | None = None,
                stride: int = 2) -> dict:
    """Residual (terminal) measure, covered measure per step and chasing starting intervals per step.

    Terminal cells count towards the covered measure of their step.
    """
    max_level = chase_levels if chase_levels is not None else 1 << 30
    keep = {id(root): root}

    def children(key):
        # local (residual, covered, count) per unit region and weighted child keys
        cid, step, level, e, I = key
        C = keep[cid]
        res, reg, cnt = 0.0, np.zeros(K), np.zeros(K)
        kids = []
        if C.__class__ is Leaf:
            return (res, reg, cnt), kids
        sub = 2.0 ** -stride
        if e >= chase_bits or level > max_level:
            res = 1.0
            reg[step - 1] += 1.0
            if step < K:
                ds = _descend(C, stride)
                ivs = [None] * len(ds) if I is None else I.descendants(stride)
                for x, iv in zip(ds, ivs):
                    keep[id(x)] = x
                    kids.append((sub, 1, (id(x), step + 1, 0, 0, iv)))
            return (res, reg, cnt), kids
        N = schedule.frequency(I, step, level)
        frac = 2.0 ** -N
        cnt[step - 1] += 1
        reg[step - 1] += (2 ** N - 2) * frac
        for side in (0, 1):
            J = None if I is None else DyadicInterval(I.gen + N, I.idx * 2 ** N + side * (2 ** N - 1))
            kids.append((frac, 1, (cid, step, level + 1, e + N - 1, J)))
        if step < K:
            ds = _descend(C, stride)
            for x in ds:
                keep[id(x)] = x
            # structural regions: every regular cell looks the same
            cells = [None] if I is None else [DyadicInterval(I.gen + N, I.idx * 2 ** N + j)
                                              for j in range(1, 2 ** N - 1)]
            mult = 2 ** N - 2 if I is None else 1
            for cell in cells:
                ivs = [None] * len(ds) if cell is None else cell.descendants(stride)
                for x, iv in zip(ds, ivs):
                    kids.append((frac * sub, mult, (id(x), step + 1, 0, 0, iv)))
        return (res, reg, cnt), kids

    memo: dict = {}
    pending: dict = {}
    start = (id(root), 1, 0, 0, ROOT if schedule.positional else None)
    stack = [start]
    while stack:
        key = stack[-1]
        if key in memo:
            stack.pop()
            continue
        if key not in pending:
            pending[key] = children(key)
        own, kids = pending[key]
        todo = [k for _, _, k in kids if k not in memo]
        if todo:
            stack.extend(todo)
            continue
        res, reg, cnt = own[0], own[1].copy(), own[2].copy()
        with np.errstate(over="ignore"):  # counts may exceed float range on deep trees
            for w, m, k in kids:
                r, g, c = memo[k]
                res += m * w * r
                reg += m * w * g
                cnt += m * c
        memo[key] = (res, reg, cnt)
        del pending[key]
        stack.pop()
    res, reg, cnt = memo[start]
    return {"residual": float(res), "covered_measure": [float(x) for x in reg],
            "starting_intervals": [int(x) if x < 2 ** 53 else float(x) for x in cnt]}


def enumerate_starting(root, K: int, choose: Callable, chase_bits: int = 30,
                       chase_levels: int | None = None) -> list[StartingInterval]:
    """Starting intervals in rank order (generation, then position).

    `choose(si, previous)` returns the frequency of `si` and sees every
    starting interval of smaller rank.  The chosen frequencies, used as the
    overrides of a schedule, reproduce the same enumeration in remodel_iterate.
    """
    max_level = chase_levels if chase_levels is not None else 1 << 30
    heap = [(0, 0, 0, StartingInterval(ROOT, None, 1, 0, root, 0))]
    tick = 1
    out: list[StartingInterval] = []
    while heap:
        si = heapq.heappop(heap)[3]
        if si.content.__class__ is Leaf:
            continue
        N = int(choose(si, out)) if si.N is None else si.N
        if N and N < MIN_FREQUENCY:
            raise ValueError(f"frequency {N} below the minimum {MIN_FREQUENCY}")
        si.N = N
        out.append(si)
        I, C = si.interval, si.content
        e = si.bits + N - 1
        pushes = []
        if N:
            for side in (0, 1):
                J = DyadicInterval(I.gen + N, I.idx * 2 ** N + side * (2 ** N - 1))
                q = StartingInterval(J, None, si.step, si.level + 1, C, e)
                if si.level + 1 > max_level or e >= chase_bits:
                    q.N = 0
                pushes.append(q)
        if si.step < K:
            kids = _grandchildren(C)
            for j in (range(1, 2 ** N - 1) if N else [None]):
                if j is None:
                    pushes += [StartingInterval(iv, None, si.step + 1, 0, x, 0)
                               for x, iv in zip(kids, I.descendants(2))]
                    continue
                cell = DyadicInterval(I.gen + N, I.idx * 2 ** N + j)
                for x, iv in zip(kids, cell.descendants(2)):
                    pushes.append(StartingInterval(iv, None, si.step + 1, 0, x, 0))
        for q in pushes:
            heapq.heappush(heap, (q.interval.gen, q.interval.idx, tick, q))
            tick += 1
    return out


def boundary_averages(state: RemodelState, depth: int | None = None) -> list[tuple[DyadicInterval, tuple]]:
    """Averages over [0, 2^-j) and [1 - 2^-j, 1) for j up to `depth`."""
    tree = state.tree
    depth = min(tree.depth, depth if depth is not None else state.chase_bits)
    out = []
    for j in range(depth + 1):
        for I in (DyadicInterval(j, 0), DyadicInterval(j, (1 << j) - 1)):
            try:
                node = tree.node_at(I)
            except (KeyError, ValueError):
                continue
            out.append((I, node.avg))
    return out


def node_average_set(root) -> set:
    """Set of averages over all nodes of a tree."""
    return {n.avg for n in unique_nodes(root)}
