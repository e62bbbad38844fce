"""Optimal partition of a tree around caller-chosen sink vertices.

The feasibility machine in :mod:`sinktree.bounded` wants its given
sinks on leaves, so the solver first rewrites the instance: every sink
vertex is deleted and replaced by one zero-weight stub leaf per edge to
a surviving neighbor, each stub keeping that edge's length and
capacity. Edges between two sinks are dropped (either endpoint serves
itself at cost zero). The rewrite splits the tree into independent
components, each solved on its own and knitted back together at the
end; a stub sits geometrically exactly where its sink sat, so block
costs are unchanged by the round trip.

Per component the optimum is found the same way as in
:mod:`sinktree.parametric`: probe a cheap lower bound, then run the
machine once more under a deferred-comparison policy that pins the
bound only as far as the run actually forces it. Relaxed oracles skip
the lower bound (it leans on the far-service axiom they lack) and
search from zero.
"""

from __future__ import annotations

import math
from typing import NamedTuple

from .bounded import ConcretePolicy, threshold_run
from .errors import ValidationError
from .oracles import CostOracle
from .parametric import RangePolicy, ThresholdRange
from .tree import TreeGraph, build_tree

__all__ = ["FixedComponent", "FixedResult", "leaf_transform", "solve_fixed"]


class FixedComponent(NamedTuple):
    """One piece of the sink-deleted forest, on its own dense ids.

    ``orig_of[x]`` is the original vertex behind local vertex x; stubs
    map to the sink they replaced. ``sinks`` lists the local stub ids.
    """

    tree: TreeGraph
    sinks: tuple[int, ...]
    orig_of: tuple[int, ...]


class FixedResult(NamedTuple):
    """Optimal worst block cost for a given sink set, with the blocks.

    ``blocks[i]`` is the set of original vertices served by
    ``sinks[i]``, the sink itself included.
    """

    cost: object
    sinks: tuple[int, ...]
    blocks: tuple[frozenset, ...]


def _check_sinks(tree: TreeGraph, sinks) -> tuple[int, ...]:
    order = sorted(sinks)
    if not order:
        raise ValidationError("at least one sink is required")
    for s in order:
        if not (isinstance(s, int) and 0 <= s < tree.n):
            raise ValidationError(f"sink {s!r} is not a vertex of the tree")
    for a, b in zip(order, order[1:]):
        if a == b:
            raise ValidationError(f"sink {a} given more than once")
    return tuple(order)


def leaf_transform(tree: TreeGraph, sinks) -> list[FixedComponent]:
    """Delete the sink vertices, leaving zero-weight stub leaves behind.

    Each edge from a sink to a non-sink neighbor survives as a stub
    edge with the original length and capacity; sink-sink edges vanish.
    Returns the resulting components, non-sink vertices first in
    ascending original order, then stubs in edge order. A sink with no
    non-sink neighbor comes back as its own single-vertex component.

    Complexity: O(n alpha(n)) over the whole forest.
    """
    order = _check_sinks(tree, sinks)
    sset = frozenset(order)
    n = tree.n

    # Scratch ids: originals keep theirs, stubs take n, n+1, ... in the
    # order their edges appear.
    stub_sink: dict[int, int] = {}
    scratch_edges = []
    nxt = n
    for u, v, tau, cap in tree.edges:
        u_in, v_in = u in sset, v in sset
        if u_in and v_in:
            continue
        if u_in:
            stub_sink[nxt] = u
            scratch_edges.append((nxt, v, tau, cap))
            nxt += 1
        elif v_in:
            stub_sink[nxt] = v
            scratch_edges.append((u, nxt, tau, cap))
            nxt += 1
        else:
            scratch_edges.append((u, v, tau, cap))

    adj: dict[int, list[int]] = {}
    for a, b, _, _ in scratch_edges:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)

    comp_of: dict[int, int] = {}
    comps: list[list[int]] = []
    nodes = [x for x in range(n) if x not in sset]
    nodes.extend(range(n, nxt))
    for start in nodes:
        if start in comp_of:
            continue
        idx = len(comps)
        stack = [start]
        comp_of[start] = idx
        members = [start]
        while stack:
            x = stack.pop()
            for y in adj.get(x, ()):
                if y not in comp_of:
                    comp_of[y] = idx
                    members.append(y)
                    stack.append(y)
        members.sort()
        comps.append(members)

    grouped_edges: list[list[tuple]] = [[] for _ in comps]
    for e in scratch_edges:
        grouped_edges[comp_of[e[0]]].append(e)

    out = []
    for members, edges in zip(comps, grouped_edges):
        local = {x: i for i, x in enumerate(members)}
        weights = [0 if x >= n else tree.weight[x] for x in members]
        built = build_tree([(local[a], local[b], tau, cap)
                            for a, b, tau, cap in edges], weights)
        out.append(FixedComponent(
            built,
            tuple(local[x] for x in members if x >= n),
            tuple(stub_sink.get(x, x) for x in members)))

    # Sinks whose neighbors were all sinks (or that had none) got no
    # stub; they serve just themselves.
    stubbed = set(stub_sink.values())
    for s in order:
        if s not in stubbed:
            out.append(FixedComponent(build_tree([], [0]), (0,), (s,)))
    return out


def _branch_floor(t: TreeGraph, sinks: tuple[int, ...], oracle: CostOracle):
    """Lower bound on the component optimum from its outlying branches.

    Strip non-sink leaves until only the subtree spanning the sinks is
    left; each stripped branch hangs off that subtree at a single
    vertex, so one block must swallow the whole branch from there or
    farther, and by the far-service axiom costs at least the branch
    served from its attachment. The bound is the worst such branch.
    """
    n = t.n
    sset = frozenset(sinks)
    deg = [len(t.adj(v)) for v in range(n)]
    alive = [True] * n
    stack = [v for v in range(n) if deg[v] == 1 and v not in sset]
    while stack:
        v = stack.pop()
        alive[v] = False
        for u in t.adj(v):
            if alive[u]:
                deg[u] -= 1
                if deg[u] == 1 and u not in sset:
                    stack.append(u)

    best = 0
    seen = [False] * n
    for w in range(n):
        if not alive[w]:
            continue
        for y in t.adj(w):
            if alive[y] or seen[y]:
                continue
            seen[y] = True
            branch = [y]
            bstack = [(y, w)]
            while bstack:
                x, stop = bstack.pop()
                for z in t.adj(x):
                    if z != stop and not seen[z]:
                        seen[z] = True
                        branch.append(z)
                        bstack.append((z, x))
            val = oracle.eval(t, frozenset(branch) | {w}, w)
            if val > best:
                best = val
    return best


def _solve_component(comp: FixedComponent, oracle: CostOracle, checked: bool):
    """Optimum of one component; returns (cost, [(orig sink, orig vertices)])."""
    t, sinks, orig_of = comp
    local = oracle.relabel(orig_of)

    if t.n == 1:
        return 0, [(orig_of[0], frozenset())]
    if len(sinks) == 1:
        s = sinks[0]
        everything = frozenset(range(t.n))
        cost = local.eval(t, everything, s)
        return cost, [(orig_of[s], frozenset(orig_of[x] for x in everything))]

    memo: dict = {}
    registry: dict = {}

    def probe(bound):
        return threshold_run(t, local, len(sinks), ConcretePolicy(bound),
                             fixed_sinks=sinks, stages=(), memo=memo,
                             registry=registry, checked=checked)

    if local.is_relaxed:
        rng = ThresholdRange(0, math.inf)
    else:
        floor = _branch_floor(t, sinks, local)
        first = probe(floor)
        if first.feasible:
            return floor, _knit(first.assignment, orig_of)
        rng = ThresholdRange(floor, math.inf)

    policy = RangePolicy(rng, lambda b: probe(b).feasible)
    search = threshold_run(t, local, len(sinks), policy, fixed_sinks=sinks,
                           stages=(), memo=memo, registry=registry,
                           checked=checked)
    if search.feasible:
        # Consistency pins every bound strictly above the low end as
        # feasible; the low end itself was either probed infeasible
        # (contradiction, since optima are attained) or never raised
        # from a floor of zero.
        assert local.is_relaxed and rng.low == 0, \
            "feasible deferred run above an infeasible floor"
        best = 0
    else:
        best = rng.high

    final = probe(best)
    assert final.feasible, "optimum bound failed its confirmation run"
    return best, _knit(final.assignment, orig_of)


def _knit(assignment, orig_of):
    out = []
    for snk, blk in zip(assignment.sinks, assignment.blocks):
        out.append((orig_of[snk.v], frozenset(orig_of[x] for x in blk)))
    return out


def solve_fixed(tree: TreeGraph, oracle: CostOracle, sinks, *,
                checked=False) -> FixedResult:
    """Cheapest worst block when the sinks are pinned to ``sinks``.

    Every vertex is served by one of the given sink vertices, blocks
    are connected, and the returned cost is the minimum over such
    partitions of the most expensive block. This is the one entry point
    that accepts relaxed oracles (their cost tables are rebuilt per
    component through :meth:`CostOracle.relabel`).

    Parameters
    ----------
    tree, oracle:
        The instance. The oracle may be relaxed.
    sinks:
        Iterable of distinct vertex ids, at least one.
    checked:
        Run the machine's internal invariant assertions and verify the
        knitted blocks partition the vertex set.

    Returns a :class:`FixedResult` with sinks in ascending order.

    Complexity: O(n log n) oracle evaluations over all components, the
    same machinery as the free placement solver minus its peeling
    phase.
    """
    order = _check_sinks(tree, sinks)
    blocks = {s: {s} for s in order}
    worst = 0
    for comp in leaf_transform(tree, order):
        cost, assign = _solve_component(comp, oracle, checked)
        if cost > worst:
            worst = cost
        for s, verts in assign:
            blocks[s].update(verts)
    if checked:
        union: set[int] = set()
        total = 0
        for s in order:
            total += len(blocks[s])
            union |= blocks[s]
        assert total == len(union) == tree.n, "knitted blocks do not partition"
    return FixedResult(worst, order, tuple(frozenset(blocks[s]) for s in order))
