"""Exhaustive reference solvers for small instances.

These enumerate partitions directly and are the ground truth the fast
solvers are tested against. They share no code with the solvers beyond
the oracle contract itself: blocks come from explicit edge-cut
enumeration and edge-point sinks are priced by physically subdividing
the edge, never through the solvers' closed forms.

All entry points refuse instances with more than ``MAX_BRUTE_N``
vertices (:class:`TooLarge`), since the enumeration is exponential.
Enumeration order is deterministic: cut sets in lexicographic edge-index
order, centers in ascending vertex index, grid offsets ascending, and
only strictly better solutions replace the incumbent.
"""

from __future__ import annotations

import math
from itertools import combinations
from typing import NamedTuple

from .errors import TooLarge, ValidationError
from .tree import EdgeSink, SinkLocation, TreeGraph, VertexSink

MAX_BRUTE_N = 12


class BruteResult(NamedTuple):
    """Optimum found by exhaustive search.

    ``levels`` holds every finite single-block cost seen during the
    enumeration, sorted ascending; the optimum is always one of them
    (or +inf when nothing feasible exists).
    """

    cost: object
    sinks: tuple[SinkLocation, ...]
    blocks: tuple[frozenset, ...]
    levels: tuple


def _check_size(tree: TreeGraph):
    if tree.n > MAX_BRUTE_N:
        raise TooLarge(f"brute force is capped at {MAX_BRUTE_N} vertices, got {tree.n}")


def _components(tree: TreeGraph, cut: frozenset) -> list[frozenset]:
    """Components after removing the edges whose indexes are in ``cut``."""
    blocked = set()
    for i in cut:
        u, v, _, _ = tree.edges[i]
        blocked.add((u, v))
        blocked.add((v, u))
    seen = bytearray(tree.n)
    comps = []
    for r in range(tree.n):
        if seen[r]:
            continue
        comp = [r]
        seen[r] = 1
        stack = [r]
        while stack:
            x = stack.pop()
            for y in tree.adj(x):
                if not seen[y] and (x, y) not in blocked:
                    seen[y] = 1
                    comp.append(y)
                    stack.append(y)
        comps.append(frozenset(comp))
    return comps


def _best_center(tree, oracle, comp: frozenset, levels: set,
                 grid_step=None) -> tuple[object, SinkLocation | None]:
    """Cheapest center of one block; vertices first, then edge grid points."""
    best = math.inf
    best_center = None
    for c in sorted(comp):
        cost = oracle.eval(tree, comp, c)
        if cost != math.inf:
            levels.add(cost)
        if cost < best:
            best = cost
            best_center = VertexSink(c)
    if grid_step is not None:
        for u, v, tau, _ in tree.edges:
            # Anchor the offsets at whichever endpoint the block contains;
            # when both endpoints are inside, one orientation covers every
            # interior point already.
            if u in comp:
                a, b = u, v
            elif v in comp:
                a, b = v, u
            else:
                continue
            m = 1
            while m * grid_step < tau:
                point = EdgeSink(a, b, m * grid_step)
                cost = oracle.eval(tree, comp, point)
                if cost != math.inf:
                    levels.add(cost)
                if cost < best:
                    best = cost
                    best_center = point
                m += 1
    return best, best_center


def brute_minmax(tree: TreeGraph, oracle, k: int, grid_step=None) -> BruteResult:
    """Optimal minmax cost over partitions into at most ``k`` blocks.

    Every subset of at most k-1 edges is cut; each resulting block gets
    its cheapest center. With ``grid_step`` set, centers may also sit on
    edge grid points (the continuous variant, discretized).
    """
    _check_size(tree)
    if k < 1:
        raise ValidationError(f"k must be at least 1, got {k}")
    levels: set = set()
    best_cost = math.inf
    best_sinks: tuple = ()
    best_blocks: tuple = ()
    m = len(tree.edges)
    for j in range(0, min(k - 1, m) + 1):
        for cut in combinations(range(m), j):
            comps = _components(tree, frozenset(cut))
            cost = 0
            sinks = []
            for comp in comps:
                c, center = _best_center(tree, oracle, comp, levels, grid_step)
                sinks.append(center)
                if c > cost:
                    cost = c
                if cost == math.inf:
                    break
            if cost < best_cost:
                best_cost = cost
                best_sinks = tuple(sinks)
                best_blocks = tuple(comps)
    return BruteResult(best_cost, best_sinks, best_blocks,
                       tuple(sorted(levels)))


def brute_feasible(tree: TreeGraph, oracle, k: int, threshold) -> bool:
    """Whether some partition into at most k blocks costs at most ``threshold``."""
    return brute_minmax(tree, oracle, k).cost <= threshold


def brute_fixed(tree: TreeGraph, oracle, sinks) -> BruteResult:
    """Optimal minmax cost over partitions with exactly these sinks.

    Cuts exactly ``len(sinks) - 1`` edges and keeps the cut sets that
    isolate one given sink per block.
    """
    _check_size(tree)
    sinks = list(sinks)
    if len(set(sinks)) != len(sinks) or not sinks:
        raise ValidationError("sinks must be nonempty and distinct")
    for s in sinks:
        if not (0 <= s < tree.n):
            raise ValidationError(f"sink {s} out of range")
    levels: set = set()
    best_cost = math.inf
    best_sinks: tuple = ()
    best_blocks: tuple = ()
    m = len(tree.edges)
    want = set(sinks)
    for cut in combinations(range(m), len(sinks) - 1):
        comps = _components(tree, frozenset(cut))
        owner = []
        ok = True
        for comp in comps:
            inside = sorted(comp & want)
            if len(inside) != 1:
                ok = False
                break
            owner.append(inside[0])
        if not ok:
            continue
        cost = 0
        for comp, s in zip(comps, owner):
            c = oracle.eval(tree, comp, s)
            if c != math.inf:
                levels.add(c)
            if c > cost:
                cost = c
        if cost < best_cost:
            best_cost = cost
            best_sinks = tuple(VertexSink(s) for s in owner)
            best_blocks = tuple(comps)
    return BruteResult(best_cost, best_sinks, best_blocks,
                       tuple(sorted(levels)))


def brute_continuous(tree: TreeGraph, oracle, k: int, grid_step) -> BruteResult:
    """Continuous-variant brute force on an offset grid of ``grid_step``.

    Candidate centers are all vertices plus the points ``i * grid_step``
    strictly inside each edge that touches the block. Each edge point is
    priced by actually subdividing the edge, so this is an independent
    check of the solver's closed-form edge handling.
    """
    if grid_step <= 0:
        raise ValidationError(f"grid step must be positive, got {grid_step}")
    return brute_minmax(tree, oracle, k, grid_step=grid_step)
