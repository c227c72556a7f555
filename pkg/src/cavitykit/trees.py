"""Galton-Watson factor trees, depth-``l`` neighbourhoods and canonical codes.

Depth is counted in variable levels: a tree of depth ``l`` has variables at
distance ``0, 2, ..., 2l`` from the root.  A constraint node remembers the
slot (0-based position in its neighbour tuple) held by its parent variable
and lists its other ``k - 1`` variables in slot order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from . import rng as _rng
from .core import FactorGraph, SpinAlphabet, _field
from .models import ModelSpec


@dataclass(eq=False)
class VarNode:
    children: list = field(default_factory=list)


@dataclass(eq=False)
class FactorNode:
    wf: int
    slot: int
    children: list


@dataclass(eq=False)
class RootedTree:
    root: VarNode
    depth: int
    weights: tuple
    alphabet: SpinAlphabet

    def variables(self) -> list[tuple[VarNode, int]]:
        """All variable nodes with their depth, breadth-first."""
        out = [(self.root, 0)]
        i = 0
        while i < len(out):
            v, d = out[i]
            i += 1
            for a in v.children:
                out.extend((c, d + 1) for c in a.children)
        return out

    def num_variables(self) -> int:
        return len(self.variables())

    def num_constraints(self) -> int:
        return sum(len(v.children) for v, _ in self.variables())

    def size(self) -> int:
        return self.num_variables() + self.num_constraints()

    def height(self) -> int:
        """Depth of the deepest variable actually present."""
        return max(d for _, d in self.variables())

    def to_dict(self) -> dict:
        def enc(v: VarNode) -> dict:
            return {"children": [{"wf": a.wf, "slot": a.slot, "children": [enc(c) for c in a.children]} for a in v.children]}

        return {"depth": self.depth, "root": enc(self.root)}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], weights, alphabet) -> "RootedTree":
        def dec(d) -> VarNode:
            return VarNode(
                [FactorNode(int(_field(a, "wf")), int(_field(a, "slot")), [dec(c) for c in _field(a, "children")]) for a in _field(d, "children")]
            )

        return cls(dec(_field(data, "root")), int(_field(data, "depth")), tuple(weights), alphabet)


class CyclicNeighborhood:
    """Marker returned when a neighbourhood ball is not a tree."""

    code = b"cyclic"

    def __repr__(self) -> str:
        return "CYCLIC"


CYCLIC = CyclicNeighborhood()


def sample_gw_tree(spec: ModelSpec, depth: int, seed: int) -> RootedTree:
    """Sample ``d^l T``.

    Every variable above the truncation depth gets ``Po(k*rho)`` constraint
    children of each type, each with a uniform parent slot and ``k - 1``
    fresh variable children.
    """
    if depth < 0:
        raise ValueError("depth must be non-negative")
    gen = _rng.stream(seed, "gw_tree", depth)
    rates = spec.offspring_rates()
    arities = [wf.arity for wf in spec.weights]
    root = VarNode()
    frontier = [root]
    for _ in range(depth):
        nxt = []
        for v in frontier:
            counts = gen.poisson(rates)
            for w, c in enumerate(counts):
                for _ in range(int(c)):
                    k = arities[w]
                    kids = [VarNode() for _ in range(k - 1)]
                    v.children.append(FactorNode(w, int(gen.integers(k)), kids))
                    nxt.extend(kids)
        frontier = nxt
    return RootedTree(root, depth, spec.weights, spec.alphabet)


def sample_root_stars(spec: ModelSpec, count: int, gen: np.random.Generator):
    """Vectorised depth-1 sampler: per star, the (type, slot) of every root constraint.

    Returns ``(owner, wf, slot)`` flat arrays, ``owner`` giving the star index of
    each constraint.  Same law as ``sample_gw_tree(spec, 1, .)``.
    """
    rates = spec.offspring_rates()
    counts = gen.poisson(rates, size=(count, len(rates)))
    total = counts.sum(axis=1)
    owner = np.repeat(np.arange(count), total)
    wf = np.concatenate([np.repeat(np.arange(len(rates)), row) for row in counts]) if count else np.zeros(0, int)
    arities = np.array([w.arity for w in spec.weights])
    slot = np.floor(gen.random(owner.size) * arities[wf]).astype(np.int64)
    return owner, wf.astype(np.int64), slot


def truncate(t: RootedTree, ell: int) -> RootedTree:
    """``d^ell t``: drop everything below variable depth ``ell``."""
    if ell < 0:
        raise ValueError("ell must be non-negative")

    def copy(v: VarNode, d: int) -> VarNode:
        if d >= ell:
            return VarNode()
        return VarNode([FactorNode(a.wf, a.slot, [copy(c, d + 1) for c in a.children]) for a in v.children])

    return RootedTree(copy(t.root, 0), min(ell, t.depth), t.weights, t.alphabet)


def is_symmetric(wf) -> bool:
    """True if the weight function is invariant under every permutation of its slots."""
    tensor = wf.tensor()
    return all(np.array_equal(tensor, np.transpose(tensor, p)) for p in itertools.permutations(range(wf.arity)))


def canonical_code(t: RootedTree | VarNode, merge_symmetric: bool = False) -> bytes:
    """Byte string identifying the root-, type- and slot-preserving isomorphism class.

    A variable's code is the sorted multiset of its constraint codes; a
    constraint's code is its type, parent slot and the ordered child codes.
    With ``merge_symmetric`` (needs a :class:`RootedTree`), slots of fully
    symmetric weight functions are forgotten and their children sorted.
    """
    root = t.root if isinstance(t, RootedTree) else t
    sym: set[int] = set()
    if merge_symmetric:
        if not isinstance(t, RootedTree):
            raise ValueError("merge_symmetric needs a RootedTree (for its weight functions)")
        sym = {w for w, wf in enumerate(t.weights) if is_symmetric(wf)}
    seen: set[int] = set()

    def var_code(v: VarNode) -> str:
        if id(v) in seen:
            raise ValueError("input is not a tree (node reached twice)")
        seen.add(id(v))
        return "v[" + ",".join(sorted(fac_code(a) for a in v.children)) + "]"

    def fac_code(a: FactorNode) -> str:
        if id(a) in seen:
            raise ValueError("input is not a tree (node reached twice)")
        seen.add(id(a))
        kids = [var_code(c) for c in a.children]
        if a.wf in sym:
            return f"f{a.wf}:*[" + ",".join(sorted(kids)) + "]"
        return f"f{a.wf}:{a.slot}[" + ",".join(kids) + "]"

    return var_code(root).encode("ascii")


def neighborhood(g: FactorGraph, x: int, ell: int, adjacency=None) -> RootedTree | CyclicNeighborhood:
    """The ball of radius ``2 ell`` around ``x`` as a rooted tree, or ``CYCLIC``.

    Repeated variables inside one constraint count as cycles.
    """
    if not 0 <= x < g.n:
        raise ValueError(f"unknown variable id {x}")
    adj = adjacency if adjacency is not None else g.adjacency()
    root = VarNode()
    seen_vars = {x}
    seen_cons: set[int] = set()
    frontier = [(x, root, None)]  # (variable, node, parent edge (constraint, position))
    for _ in range(ell):
        nxt = []
        for v, node, parent_edge in frontier:
            for a, p in adj[v]:
                if (a, p) == parent_edge:
                    continue
                if a in seen_cons:
                    return CYCLIC
                seen_cons.add(a)
                w, nb = g.constraints[a]
                kids = []
                for p2, u in enumerate(nb):
                    if p2 == p:
                        continue
                    if u in seen_vars:
                        return CYCLIC
                    seen_vars.add(u)
                    child = VarNode()
                    kids.append(child)
                    nxt.append((u, child, (a, p2)))
                node.children.append(FactorNode(w, p, kids))
        frontier = nxt
    return RootedTree(root, ell, g.weights, g.alphabet)


def tree_to_factor_graph(t: RootedTree) -> tuple[FactorGraph, list[int]]:
    """Flatten to a :class:`FactorGraph`; root is variable 0.

    Also returns the ids of the variables sitting exactly at the truncation
    depth (the boundary a depth-``l`` recursion conditions on).
    """
    ids: dict[int, int] = {}
    order = t.variables()
    for i, (v, _) in enumerate(order):
        ids[id(v)] = i
    constraints = []
    for v, _ in order:
        for a in v.children:
            k = len(a.children) + 1
            nb = []
            kids = iter(a.children)
            for pos in range(k):
                nb.append(ids[id(v)] if pos == a.slot else ids[id(next(kids))])
            constraints.append((a.wf, tuple(nb)))
    boundary = [ids[id(v)] for v, d in order if d == t.depth]
    return FactorGraph(t.alphabet, len(order), t.weights, tuple(constraints)), boundary
