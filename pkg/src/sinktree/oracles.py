"""Cost oracles for centered tree partitions.

A cost oracle prices one block of a partition served by one sink. Every
oracle here obeys the minmax-monotone contract that the solvers rely on:

1. a sink serving only itself costs 0;
2. a center outside the block, or a disconnected block, costs ``+inf``;
3. growing the block never lowers the cost;
4. serving the same side from one step farther along an edge never lowers
   the cost (skipped by *relaxed* oracles);
5. the cost of a block is the max over its slices at the center, where a
   slice is one component of ``block - center`` together with the center.

Oracles are stateless after construction and take the tree explicitly on
every call, so the same oracle instance prices blocks on derived trees
(subdivided edges, shrunken working trees) without rebinding.

Continuous-capable oracles additionally price sinks placed on edge
points (:class:`~sinktree.tree.EdgeSink`); their cost along an oriented
edge is continuous and non-decreasing in the offset, except possibly for
an upward jump right at the tail vertex. ``farthest_feasible_point`` and
``edge_minimax`` are the two edge-level searches the continuous solver
needs.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable

from .errors import NoFeasiblePoint, NotAnEdge, UnsupportedContinuous, ValidationError
from .dynflow import evac_completion_time
from .tree import EdgeSink, SubtreeView, TreeGraph, VertexSink, subdivide_edge

Cost = object  # int | Fraction | float, with math.inf as +infinity


def _div(a, b):
    """Exact division unless either operand is a float."""
    if isinstance(a, float) or isinstance(b, float):
        return a / b
    return Fraction(a) / Fraction(b)


def _members(block) -> frozenset:
    if isinstance(block, SubtreeView):
        return block.as_set()
    if isinstance(block, frozenset):
        return block
    return frozenset(block)


def _center_vertex(center) -> int | None:
    """Vertex index of a center, or None when it is an edge point."""
    if isinstance(center, VertexSink):
        return center.v
    if isinstance(center, EdgeSink):
        return None
    return center


def block_slices(tree, members: frozenset, s: int) -> list[list[int]] | None:
    """Components of ``members - s``, or None when the block is not a
    connected subtree containing ``s``."""
    if s not in members:
        return None
    seen = {s}
    slices = []
    for start in tree.adj(s):
        if start in members and start not in seen:
            comp = [start]
            seen.add(start)
            stack = [start]
            while stack:
                x = stack.pop()
                for y in tree.adj(x):
                    if y in members and y not in seen:
                        seen.add(y)
                        comp.append(y)
                        stack.append(y)
            slices.append(comp)
    if len(seen) != len(members):
        return None
    return slices


class CostOracle:
    """Base class wiring the shared axioms; subclasses price blocks.

    Subclasses implement :meth:`_eval_at_vertex` for a center already
    known to be a block member, returning ``+inf`` themselves when the
    block is not a connected subtree. Edge-point centers are handled
    generically by subdividing the edge, which keeps every continuous
    oracle consistent with its own vertex semantics.
    """

    name = "abstract"
    supports_continuous = False
    is_relaxed = False

    def eval(self, tree, block, center) -> Cost:
        """Cost of ``block`` served from ``center`` (vertex or edge point)."""
        members = _members(block)
        s = _center_vertex(center)
        if s is None:
            return self._eval_edge_point(tree, members, center)
        if s not in members:
            return math.inf
        return self._eval_at_vertex(tree, members, s)

    def _eval_edge_point(self, tree, members: frozenset, center: EdgeSink) -> Cost:
        if not self.supports_continuous:
            raise UnsupportedContinuous(
                f"{self.name} oracle cannot price edge-point sinks")
        u, v, off = center
        tau, _ = tree.edge_params(u, v)
        if off < 0 or off > tau:
            raise NotAnEdge(f"offset {off} outside [0, {tau}] on ({u}, {v})")
        if off == 0:
            return self.eval(tree, members | {u}, u)
        if off == tau:
            return self.eval(tree, members | {v}, v)
        sub, x = subdivide_edge(tree, u, v, off)
        return self.eval(sub, members | {x}, x)

    def _eval_at_vertex(self, tree, members, s) -> Cost:
        raise NotImplementedError

    def eval_gate_pair(self, tree, side: frozenset, u: int, v: int) -> tuple:
        """Costs ``(f(side, u), f(side + {v}, v))`` for the directed gate (u, v).

        ``side`` must be the component of ``u`` once (u, v) is cut.
        Subclasses may fuse the two evaluations into one pass; the base
        form just makes both calls.
        """
        a = self.eval(tree, side, u)
        b = self.eval(tree, side | {v}, v)
        return a, b

    def relabel(self, mapping):
        """Oracle view of a derived tree whose vertex i stands for ``mapping[i]``.

        Oracles that price blocks from tree geometry alone keep working
        unchanged on any derived tree, so the default returns self.
        Oracles keyed by vertex identity (the tabulated kinds) must
        override and rebuild their view under the new ids.
        """
        return self

    def edge_cost_lines(self, tree, side, u: int, v: int) -> list[tuple] | None:
        """Cost of serving ``side`` from offset x on (u, v), as lines.

        Returns ``[(slope, intercept), ...]`` such that the cost at offset
        x in ``(0, tau]`` is ``max(0, max_i(slope_i * x + intercept_i))``,
        or None when no closed form is available (callers then fall back
        to bisection). ``side`` must be the component of ``u`` after
        cutting (u, v), so all slopes are nonnegative.
        """
        return None


class KCenterOracle(CostOracle):
    """Weighted k-center cost: max over the block of weight times distance.

    Continuous-capable; distances are edge-length sums computed by one
    DFS from the center, O(|block|) per call.
    """

    name = "kcenter"
    supports_continuous = True

    def _eval_at_vertex(self, tree, members, s):
        best = 0
        dist = {s: 0}
        stack = [s]
        weight = tree.weight
        while stack:
            x = stack.pop()
            dx = dist[x]
            nbrs = tree.neighbors[x]
            taus = tree.nbr_tau[x]
            for i in range(len(nbrs)):
                y = nbrs[i]
                if y in members and y not in dist:
                    dy = dx + taus[i]
                    dist[y] = dy
                    c = weight[y] * dy
                    if c > best:
                        best = c
                    stack.append(y)
        if len(dist) != len(members):
            return math.inf
        return best

    def edge_cost_lines(self, tree, side, u, v):
        members = _members(side)
        dist = {u: 0}
        stack = [u]
        weight = tree.weight
        lines = []
        while stack:
            x = stack.pop()
            dx = dist[x]
            w = weight[x]
            if w != 0:
                lines.append((w, w * dx))
            nbrs = tree.neighbors[x]
            taus = tree.nbr_tau[x]
            for i in range(len(nbrs)):
                y = nbrs[i]
                if y in members and y not in dist:
                    dist[y] = dx + taus[i]
                    stack.append(y)
        return lines


class KCenterCappedOracle(CostOracle):
    """Weighted k-center with slice weight and hop caps.

    A slice (component of block minus center, plus the center) costs
    ``+inf`` when its total weight exceeds ``weight_cap`` or any member
    sits more than ``hop_cap`` edges from the center; otherwise the usual
    weight-times-distance max. Either cap may be None for unconstrained.

    Discrete centers only: a cap in hops has no natural meaning for a
    point partway along an edge.
    """

    name = "kcenter-capped"

    def __init__(self, weight_cap=None, hop_cap=None):
        self.weight_cap = weight_cap
        self.hop_cap = hop_cap

    def _eval_at_vertex(self, tree, members, s):
        slices = block_slices(tree, members, s)
        if slices is None:
            return math.inf
        weight = tree.weight
        wcap = self.weight_cap
        hcap = self.hop_cap
        best = 0
        for comp in slices:
            if wcap is not None and sum(weight[x] for x in comp) + weight[s] > wcap:
                return math.inf
            in_comp = set(comp)
            dist = {s: 0}
            hops = {s: 0}
            stack = [s]
            while stack:
                x = stack.pop()
                nbrs = tree.neighbors[x]
                taus = tree.nbr_tau[x]
                for i in range(len(nbrs)):
                    y = nbrs[i]
                    if y in in_comp and y not in dist:
                        dist[y] = dist[x] + taus[i]
                        hops[y] = hops[x] + 1
                        if hcap is not None and hops[y] > hcap:
                            return math.inf
                        c = weight[y] * dist[y]
                        if c > best:
                            best = c
                        stack.append(y)
        return best


class RangeCostOracle(CostOracle):
    """Spread of tabulated service costs within each slice (relaxed).

    ``table[(u, s)]`` is the externally supplied cost of serving vertex u
    from sink s; a slice costs the max minus min of those values over the
    slice plus the center. The table must cover every ordered pair, which
    is checked at construction.

    Relaxed: serving a side from farther away may get cheaper, so only
    the fixed-sink solver accepts this oracle.
    """

    name = "range"
    is_relaxed = True

    def __init__(self, n: int, table: dict):
        for u in range(n):
            for s in range(n):
                if (u, s) not in table:
                    raise ValidationError(f"cost table is missing entry ({u}, {s})")
        self.table = dict(table)

    def relabel(self, mapping):
        n = len(mapping)
        table = {(u, s): self.table[(mapping[u], mapping[s])]
                 for u in range(n) for s in range(n)}
        return RangeCostOracle(n, table)

    def _eval_at_vertex(self, tree, members, s):
        slices = block_slices(tree, members, s)
        if slices is None:
            return math.inf
        table = self.table
        base = table[(s, s)]
        best = 0
        for comp in slices:
            lo = hi = base
            for x in comp:
                c = table[(x, s)]
                if c < lo:
                    lo = c
                elif c > hi:
                    hi = c
            if hi - lo > best:
                best = hi - lo
        return best


class EvacOracle(CostOracle):
    """Dynamic confluent-flow evacuation time of the block into the sink.

    Delegates to :func:`sinktree.dynflow.evac_completion_time`. The cost
    along an edge toward a far endpoint is one line of slope 1 anchored at
    that endpoint's completion time, which gives closed forms for the
    edge searches; right at the near endpoint the cost may jump down,
    because a sink placed exactly there absorbs the queue at the gate.
    """

    name = "evac"
    supports_continuous = True

    def _eval_at_vertex(self, tree, members, s):
        return evac_completion_time(tree, members, s)

    def edge_cost_lines(self, tree, side, u, v):
        members = _members(side)
        tau, _ = tree.edge_params(u, v)
        far = self.eval(tree, members | {v}, v)
        if far == math.inf:
            return [(0, math.inf)]
        return [(1, far - tau)]


ORACLES = {
    "evac": EvacOracle,
    "kcenter": KCenterOracle,
    "kcenter-capped": KCenterCappedOracle,
    "range": RangeCostOracle,
}


def _line_cost(lines: list[tuple], x) -> Cost:
    best = 0
    for a, b in lines:
        c = a * x + b
        if c > best:
            best = c
    return best


def farthest_feasible_point(oracle: CostOracle, side, u: int, v: int, T) -> EdgeSink:
    """Largest offset x on (u, v) where ``side`` plus the segment to x is
    served from x within ``T``.

    ``side`` must be the component of ``u`` once (u, v) is cut. Uses the
    oracle's closed-form cost lines when available, otherwise bisects to
    offset tolerance 1e-9. Raises :class:`NoFeasiblePoint` when even the
    cost limit approaching ``u`` exceeds ``T`` (possible for oracles with
    a queue jump at the tail vertex).
    """
    if not oracle.supports_continuous:
        raise UnsupportedContinuous(f"{oracle.name} oracle cannot price edge-point sinks")
    tree = side.base if isinstance(side, SubtreeView) else None
    if tree is None:
        raise ValueError("side must be a SubtreeView bound to its tree")
    tau, _ = tree.edge_params(u, v)
    lines = oracle.edge_cost_lines(tree, side, u, v)
    if lines is not None:
        hi = tau
        for a, b in lines:
            if a == 0:
                if b > T:
                    raise NoFeasiblePoint(
                        f"cost exceeds {T} everywhere on ({u}, {v})")
                continue
            bound = _div(T - b, a)
            if bound < hi:
                hi = bound
        if hi < 0:
            raise NoFeasiblePoint(f"cost exceeds {T} everywhere on ({u}, {v})")
        return EdgeSink(u, v, hi)

    members = _members(side)

    def cost_at(x):
        return oracle.eval(tree, members, EdgeSink(u, v, x))

    if cost_at(tau) <= T:
        return EdgeSink(u, v, tau)
    lo = tau * 1e-12
    if cost_at(lo) > T:
        raise NoFeasiblePoint(f"cost exceeds {T} everywhere on ({u}, {v})")
    hi = tau
    while hi - lo > 1e-9:
        mid = (lo + hi) / 2
        if cost_at(mid) <= T:
            lo = mid
        else:
            hi = mid
    return EdgeSink(u, v, lo)


def edge_minimax(oracle: CostOracle, left, right, u: int, v: int):
    """Point on (u, v) minimizing the max of serving both sides from it.

    ``left`` is the component of ``u`` and ``right`` the component of
    ``v`` once (u, v) is cut. Returns ``(EdgeSink, cost)``; ties go to the
    smaller offset. With cost lines the candidates are the segment
    endpoints (priced exactly, including the endpoint-vertex discounts)
    plus every pairwise line crossing, O(|lines|^2) of them; without lines
    a golden-section search to offset tolerance 1e-9 is used.
    """
    if not oracle.supports_continuous:
        raise UnsupportedContinuous(f"{oracle.name} oracle cannot price edge-point sinks")
    tree = left.base if isinstance(left, SubtreeView) else right.base
    tau, _ = tree.edge_params(u, v)
    lmem = _members(left)
    rmem = _members(right)

    at_u = max(oracle.eval(tree, lmem, u), _right_limit(oracle, tree, rmem, u, v))
    at_v = max(oracle.eval(tree, rmem, v), _left_limit(oracle, tree, lmem, u, v))

    llines = oracle.edge_cost_lines(tree, SubtreeView(tree, vertices=lmem), u, v)
    rlines_rev = oracle.edge_cost_lines(tree, SubtreeView(tree, vertices=rmem), v, u)
    if llines is not None and rlines_rev is not None:
        # Re-express the right side in the left orientation: eta = tau - x.
        rlines = [(-a, a * tau + b) for a, b in rlines_rev]
        alllines = [(a, b) for a, b in llines + rlines if b != math.inf] or [(0, 0)]
        if any(b == math.inf for _, b in llines + rlines):
            # One side is unservable from any interior point.
            best_x, best_c = (0, at_u) if at_u <= at_v else (tau, at_v)
            return EdgeSink(u, v, best_x), best_c
        candidates = set()
        for i in range(len(alllines)):
            ai, bi = alllines[i]
            if ai != 0:
                z = _div(-bi, ai)
                if 0 < z < tau:
                    candidates.add(z)
            for j in range(i + 1, len(alllines)):
                aj, bj = alllines[j]
                if ai != aj:
                    x = _div(bj - bi, ai - aj)
                    if 0 < x < tau:
                        candidates.add(x)
        best_x, best_c = 0, at_u
        if at_v < best_c or (at_v == best_c and tau < best_x):
            best_x, best_c = tau, at_v
        for x in sorted(candidates):
            c = _line_cost(alllines, x)
            if c < best_c:
                best_x, best_c = x, c
        return EdgeSink(u, v, best_x), best_c

    def cost_at(x):
        lc = oracle.eval(tree, lmem, EdgeSink(u, v, x))
        rc = oracle.eval(tree, rmem, EdgeSink(u, v, x))
        return max(lc, rc)

    lo, hi = 0.0, float(tau)
    for _ in range(200):
        if hi - lo <= 1e-9:
            break
        m1 = lo + (hi - lo) / 3
        m2 = hi - (hi - lo) / 3
        if cost_at(m1) <= cost_at(m2):
            hi = m2
        else:
            lo = m1
    x = (lo + hi) / 2
    cands = [(at_u, 0), (at_v, tau), (cost_at(x), x)]
    best_c, best_x = min(cands)
    return EdgeSink(u, v, best_x), best_c


def _left_limit(oracle, tree, lmem, u, v):
    """Cost of serving the u-side from a point approaching v (offset tau)."""
    lines = oracle.edge_cost_lines(tree, SubtreeView(tree, vertices=lmem), u, v)
    tau, _ = tree.edge_params(u, v)
    if lines is not None:
        return _line_cost(lines, tau)
    return oracle.eval(tree, lmem, EdgeSink(u, v, tau))


def _right_limit(oracle, tree, rmem, u, v):
    """Cost of serving the v-side from a point approaching u (offset 0)."""
    lines = oracle.edge_cost_lines(tree, SubtreeView(tree, vertices=rmem), v, u)
    tau, _ = tree.edge_params(u, v)
    if lines is not None:
        return _line_cost(lines, tau)
    return oracle.eval(tree, rmem, EdgeSink(v, u, tau))
