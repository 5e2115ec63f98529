"""Search-tree construction rules.

Proposals are addressed by their index in a :class:`SearchSpace` (ids in
ascending order), and sets of proposals are Python ``int`` bitmasks.
"""

from __future__ import annotations

import enum
import json
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .proposals import Category, ProposalPool
from .scoring import NEG_INF, Scorer

SKIP = -1
ROOT = -2


class Mode(enum.Enum):
    LAYOUT = "layout"
    OBJECT = "object"


def bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def _center(p) -> np.ndarray:
    return p.polygon.vertices.mean(axis=0) if p.is_layout else p.bbox.center


class SearchSpace:
    """Candidates of one search run with precomputed relations.

    Proposals never visible (fitness -inf) and proposals incompatible with
    the scorer's fixed context are left out.
    """

    def __init__(self, pool: ProposalPool, scorer: Scorer, mode: Mode, candidate_ids: Optional[Iterable[int]] = None):
        self.pool = pool
        self.scorer = scorer
        self.mode = mode
        if candidate_ids is None:
            if mode is Mode.LAYOUT:
                candidate_ids = [l.id for l in pool.layouts if l.category is Category.WALL]
            else:
                candidate_ids = [o.id for o in pool.objects]
        ids = []
        for pid in sorted(set(candidate_ids) - scorer.context):
            if scorer.fitness(pid) == NEG_INF:
                continue
            if any(not pool.compatible(pid, c) for c in scorer.context):
                continue
            ids.append(pid)
        self.ids: list[int] = ids
        self.index = {pid: i for i, pid in enumerate(ids)}
        n = len(ids)
        self.n = n
        self.all = (1 << n) - 1
        self.fitness = [scorer.fitness(pid) for pid in ids]
        self.compat = [0] * n
        for i in range(n):
            m = 0
            for j in range(n):
                if j != i and pool.compatible(ids[i], ids[j]):
                    m |= 1 << j
            self.compat[i] = m
        self.incompat = [self.all & ~self.compat[i] & ~(1 << i) for i in range(n)]
        if mode is Mode.LAYOUT:
            self.neighbors = [sum(1 << self.index[q] for q in pool.neighbors.get(pid, ()) if q in self.index) for pid in ids]
            self.dist = None
        else:
            self.neighbors = None
            centers = [_center(pool[pid]) for pid in ids]
            self.dist = [[float(np.linalg.norm(a - b)) for b in centers] for a in centers]
        # Roulette weights: fitness shifted onto a positive support.
        if n:
            fmin, fmax = min(self.fitness), max(self.fitness)
            eps = 1e-6 * (fmax - fmin) if fmax > fmin else 1e-6
            self.weights = [max(f - fmin + eps, eps) for f in self.fitness]
        else:
            self.weights = []
        self._rank = {i: r for r, i in enumerate(sorted(range(n), key=lambda i: (-self.fitness[i], i)))}

    def ordered(self, mask: int) -> list[int]:
        """Indices in ``mask`` by fitness descending, then id."""
        return sorted(bits(mask), key=self._rank.__getitem__)

    def best(self, mask: int) -> int:
        return min(bits(mask), key=self._rank.__getitem__)

    def ids_of(self, mask: int) -> tuple[int, ...]:
        return tuple(self.ids[i] for i in bits(mask))

    def mask_of(self, ids: Iterable[int]) -> int:
        m = 0
        for pid in ids:
            m |= 1 << self.index[pid]
        return m

    def closes_loop(self, first: int, last: int, count: int) -> bool:
        return count >= 3 and bool(self.neighbors[last] >> first & 1)


class SearchNode:
    __slots__ = ("content", "parent", "children", "q", "q_max", "n", "members", "allowed", "anchor",
                 "first", "count", "skipped", "exhausted")

    def __init__(self, content: int, parent: Optional["SearchNode"], members: int, allowed: int,
                 anchor: Optional[int], first: Optional[int], count: int, skipped: int = 0):
        self.content = content
        self.parent = parent
        self.children: Optional[list[SearchNode]] = None
        self.q = 0.0
        self.q_max = NEG_INF
        self.n = 0
        self.members = members
        self.allowed = allowed
        self.anchor = anchor
        self.first = first
        self.count = count
        self.skipped = skipped
        self.exhausted = False

    @property
    def is_skip(self) -> bool:
        return self.content == SKIP

    def path(self) -> list["SearchNode"]:
        out, node = [], self
        while node is not None:
            out.append(node)
            node = node.parent
        return out[::-1]


def new_root(space: SearchSpace) -> SearchNode:
    return SearchNode(ROOT, None, 0, space.all, None, None, 0)


def root_children(space: SearchSpace) -> list[int]:
    return expand_children(new_root(space), space)


def expand_children(node: SearchNode, space: SearchSpace) -> list[int]:
    """Child contents of ``node``: one anchor proposal, its incompatible alternatives, and (objects) Skip."""
    avail = node.allowed
    if space.mode is Mode.LAYOUT:
        if node.content != ROOT:
            if space.closes_loop(node.first, node.content, node.count):
                return []
            avail &= space.neighbors[node.content]
        if not avail:
            return []
        o = space.best(avail)
        return [o] + space.ordered(avail & space.incompat[o])
    if not avail:
        return []
    anchor = node.anchor if node.anchor is not None else space.best(avail)
    d = space.dist[anchor]
    o = min(bits(avail), key=lambda j: (d[j], space._rank[j]))
    return [o] + space.ordered(avail & space.incompat[o]) + [SKIP]


def make_child(node: SearchNode, content: int, siblings: Sequence[int], space: SearchSpace) -> SearchNode:
    if content == SKIP:
        sib = 0
        for s in siblings:
            if s != SKIP:
                sib |= 1 << s
        return SearchNode(SKIP, node, node.members, node.allowed & ~sib, node.anchor, node.first, node.count, sib)
    bit = 1 << content
    first = node.first if node.first is not None else content
    return SearchNode(content, node, node.members | bit, node.allowed & space.compat[content] & ~bit,
                      content, first, node.count + 1)


def materialize(node: SearchNode, space: SearchSpace) -> list[SearchNode]:
    if node.children is None:
        contents = expand_children(node, space)
        node.children = [make_child(node, c, contents, space) for c in contents]
    return node.children


def path_solution(node: SearchNode, space: SearchSpace) -> tuple[int, ...]:
    return space.ids_of(node.members)


def tree_to_dict(root: SearchNode, space: SearchSpace) -> dict:
    """Flat JSON-able dump of the materialized tree."""
    nodes, stack, ids = [], [root], {}
    while stack:
        nd = stack.pop()
        ids[id(nd)] = len(ids)
        nodes.append(nd)
        stack.extend(reversed(nd.children or []))
    out = []
    for nd in nodes:
        content = "root" if nd.content == ROOT else "skip" if nd.content == SKIP else space.ids[nd.content]
        out.append({
            "id": ids[id(nd)],
            "content": content,
            "q": nd.q,
            "n": nd.n,
            "children": [ids[id(c)] for c in (nd.children or [])],
        })
    return {"mode": space.mode.value, "nodes": out}


def dump_tree(root: SearchNode, space: SearchSpace, path) -> None:
    with open(path, "w") as f:
        json.dump(tree_to_dict(root, space), f, indent=1)
