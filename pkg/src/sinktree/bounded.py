"""Threshold feasibility: serve a tree with at most k sinks within a bound.

The solver answers one question: can the tree be cut into connected,
sink-rooted blocks, at most ``k`` of them, with every block priced by the
oracle at or under a threshold. It works in two movements:

* a peeling sweep over centroid stages that classifies every still
  undecided gate (a directed edge plus the component it cuts off) and
  plants a sink wherever a component is servable at its gate vertex but
  not from one step past it;
* repeated reaching sweeps over the forest of sink-to-root paths, each
  carving off the region the placed sinks already cover and planting at
  most one more sink where the leftover tree pinches.

Threshold comparisons go through a :class:`ThresholdPolicy`, so the same
machine serves a concrete numeric bound and the deferred-comparison
scheme the optimizing solver layers on top. Oracle work is memoized per
working-tree state (keyed by the commit history), which lets repeated
runs at nearby bounds share the expensive early evaluations.
"""

from __future__ import annotations

from collections import deque
from typing import NamedTuple

from .errors import (NonPositiveParameter, RelaxedOracleRejected, SinkInSubtree,
                     UnsupportedContinuous)
from .oracles import CostOracle, NoFeasiblePoint, edge_minimax, farthest_feasible_point
from .tree import (CentroidStages, EdgeSink, SubtreeView, TreeGraph, VertexSink,
                   centroid_decompose, subdivide_edge, subtree_away)

GATE_PEAK = "peak"
GATE_SINK_INSIDE = "sink-inside"
GATE_ABSORBABLE = "absorbable"

_INSIDE = 1      # the component needs a sink strictly inside itself
_ABSORB = 2      # the component plus the far endpoint is servable there


class _OverBudget(Exception):
    """Internal: a commit would create more sinks than allowed."""


class ThresholdPolicy:
    """Answers whether a cost is within the run's threshold.

    ``batch`` is called once per peeling stage with every gate cost the
    stage produced, before any of them is compared; ``le`` then decides
    individual comparisons. A concrete policy ignores ``batch``; the
    deferred policy uses it to resolve a whole stage with few probes.
    """

    def batch(self, values) -> None:
        raise NotImplementedError

    def le(self, value) -> bool:
        raise NotImplementedError

    def ge(self, value) -> bool:
        """Is ``value`` at or above the threshold?

        Not the negation of :meth:`le`: both hold at equality. The
        continuous commit logic needs this side of the comparison to
        tell a sink pinned to a gate vertex from one strictly inside
        the edge.
        """
        raise NotImplementedError

    def concrete_threshold(self):
        """The numeric bound when there is one, else None.

        Continuous runs materialize edge sinks only under a numeric
        bound; without one they keep the sink symbolic on its edge.
        """
        return None


class ConcretePolicy(ThresholdPolicy):
    """Plain comparisons against a fixed numeric threshold."""

    __slots__ = ("threshold",)

    def __init__(self, threshold):
        self.threshold = threshold

    def batch(self, values):
        pass

    def le(self, value):
        return value <= self.threshold

    def ge(self, value):
        return value >= self.threshold

    def concrete_threshold(self):
        return self.threshold


class RunStats:
    """Oracle-query tallies for one feasibility run.

    Queries are counted in logical units at request time, before the
    memo is consulted, so the numbers reflect what the algorithm asks
    for rather than what the cache happens to absorb. ``peel_queries``
    covers the centroid peeling sweep, ``reach_queries`` everything
    after it.
    """

    __slots__ = ("peel_queries", "reach_queries", "sinks_opened")

    def __init__(self):
        self.peel_queries = 0
        self.reach_queries = 0
        self.sinks_opened = 0

    def __repr__(self):
        return (f"RunStats(peel={self.peel_queries}, "
                f"reach={self.reach_queries}, opened={self.sinks_opened})")


class SinkAssignment:
    """Final sink placement: locations, their blocks, and the commit log.

    ``sinks[i]`` serves ``blocks[i]``; blocks are frozensets of original
    vertex ids (edge sinks carry their split point in the location, not
    in the block). ``keys`` are stable identities, ``("v", vertex)`` or
    ``("e", u, v)``, independent of where on the edge a sink landed.
    The log is the ordered tuple of open and close commits that built
    the assignment, usable to compare two runs step for step.
    """

    __slots__ = ("sinks", "blocks", "keys", "log")

    def __init__(self, sinks, blocks, keys, log):
        self.sinks = tuple(sinks)
        self.blocks = tuple(blocks)
        self.keys = tuple(keys)
        self.log = tuple(log)

    def partition(self) -> dict:
        """Map each sink location to its block."""
        return dict(zip(self.sinks, self.blocks))

    def __len__(self):
        return len(self.sinks)

    def __repr__(self):
        return f"SinkAssignment({len(self.sinks)} sinks)"


class BoundedResult(NamedTuple):
    feasible: bool
    assignment: SinkAssignment | None
    stats: RunStats


class _Sink:
    """One placed sink and its growing block inside a run."""

    __slots__ = ("index", "key", "node", "anchor", "edge", "location",
                 "open", "block")

    def __init__(self, index, key, node, location, block, anchor=None, edge=None):
        self.index = index
        self.key = key
        self.node = node              # working-tree leaf: vertex id, or < 0 when symbolic
        self.anchor = anchor          # surviving edge endpoint for symbolic sinks
        self.edge = edge              # original (u, v) for edge sinks
        self.location = location      # VertexSink | EdgeSink | None while symbolic
        self.open = True
        self.block = block            # set of working-tree vertex ids


class _Reach(NamedTuple):
    """One survey of the live tree: rooting, sink paths, and coverage."""

    root: int
    parent: dict
    depth: dict
    on_path: set
    path_children: dict
    order: list
    tops: dict        # sink index -> highest supported path node
    mintop: dict      # path node -> (best top depth, sink index) below it


class _Run:
    """One feasibility run over a working tree.

    Holds the live vertex mask, placed sinks, gate labels, commit log,
    and the memo/token plumbing. The public entry points build one of
    these and call :meth:`run`.
    """

    __slots__ = ("_t", "_n0", "_oracle", "_budget", "_policy", "_cont",
                 "_symbolic", "_fixed", "_stages", "_adj0", "_alive",
                 "_n_live", "_sinks", "_sink_by_node", "_virtual_at",
                 "_n_virtual", "_next_virtual", "_label", "_log", "_tok",
                 "_memo", "_registry", "_mtag", "_checked", "_trace",
                 "stats", "_branches", "_peeling")

    def __init__(self, tree: TreeGraph, oracle: CostOracle, budget: int,
                 policy: ThresholdPolicy, *, continuous=False,
                 fixed_sinks=None, stages=None, memo=None, registry=None,
                 checked=False, trace=None):
        self._t = tree
        self._n0 = tree.n
        self._oracle = oracle
        self._budget = budget
        self._policy = policy
        self._cont = continuous
        self._symbolic = continuous and policy.concrete_threshold() is None
        self._fixed = fixed_sinks is not None
        self._stages = stages if stages is not None else centroid_decompose(tree)
        self._adj0 = [list(tree.adj(v)) for v in range(tree.n)]
        self._alive = bytearray([1] * tree.n)
        self._n_live = tree.n
        self._sinks: list[_Sink] = []
        self._sink_by_node: dict[int, _Sink] = {}
        self._virtual_at: dict[int, list[_Sink]] = {}
        self._n_virtual = 0
        self._next_virtual = -1
        self._label: dict[tuple[int, int], int] = {}
        self._log: list[tuple] = []
        self._memo = memo if memo is not None else {}
        self._registry = registry if registry is not None else {}
        self._tok = self._registry.setdefault((), len(self._registry))
        # Gate pairs are priced on all-original subtrees in every mode and
        # may be shared freely; support evaluations see the split points a
        # concrete continuous run carved, so those entries are fenced off
        # per effective threshold.
        if not continuous:
            self._mtag = 0
        elif self._symbolic:
            self._mtag = 1
        else:
            self._mtag = (2, policy.concrete_threshold())
        self._checked = checked
        self._trace = trace
        self.stats = RunStats()
        self._branches: dict[int, tuple] = {}
        self._peeling = False
        if fixed_sinks is not None:
            for s in sorted(fixed_sinks):
                assert len(tree.adj(s)) <= 1, "fixed sinks must sit on leaves"
                self._open_sink(("v", s), s, VertexSink(s), {s})

    # ------------------------------------------------------------------
    # main loop

    def run(self) -> BoundedResult:
        try:
            if not self._fixed:
                done = self._peel()
                if done is not None:
                    return done
            while True:
                done = self._endgame()
                if done is not None:
                    return done
                reach = self._survey()
                fired = self._sweep(reach)
                if fired is None:
                    self._note("covered")
                    self._carve(reach.root, reach)
                    return self._feasible()
                u, v = fired
                self._carve(u, reach)
                if self._fixed:
                    continue
                done = self._resolve_pinch(u, v, reach)
                if done is not None:
                    return done
        except _OverBudget:
            return BoundedResult(False, None, self.stats)

    # ------------------------------------------------------------------
    # bookkeeping

    def _note(self, *event):
        if self._trace is not None:
            self._trace.append(event)

    def _tally(self, n):
        if self._peeling:
            self.stats.peel_queries += n
        else:
            self.stats.reach_queries += n

    def _retoken(self):
        reg = self._registry
        self._tok = reg.setdefault(tuple(self._log), len(reg))

    def _nkey(self, x):
        """Mode-invariant ordering key: sinks by creation order, else id."""
        rec = self._sink_by_node.get(x)
        return (1, rec.index) if rec is not None else (0, x)

    def _nbrs(self, x):
        """Live neighbors of a working-tree node, symbolic leaves included."""
        if x < 0:
            yield self._sink_by_node[x].anchor
            return
        alive = self._alive
        for y in self._t.adj(x):
            if alive[y]:
                yield y
        for rec in self._virtual_at.get(x, ()):
            yield rec.node

    def _live_count(self):
        return self._n_live + self._n_virtual

    def _kill(self, nodes):
        for x in nodes:
            if x < 0:
                rec = self._sink_by_node.pop(x)
                self._virtual_at[rec.anchor].remove(rec)
                self._n_virtual -= 1
            else:
                if not self._alive[x]:
                    continue
                self._alive[x] = 0
                self._n_live -= 1
                self._sink_by_node.pop(x, None)

    def _open_sink(self, key, node, location, block, anchor=None, edge=None) -> _Sink:
        if self.stats.sinks_opened >= self._budget:
            raise _OverBudget
        rec = _Sink(len(self._sinks), key, node, location, block, anchor, edge)
        self._sinks.append(rec)
        self._sink_by_node[node] = rec
        if node < 0:
            self._virtual_at.setdefault(anchor, []).append(rec)
            self._n_virtual += 1
        self.stats.sinks_opened += 1
        self._log.append(("open", key, self._log_ids(block)))
        self._retoken()
        return rec

    def _close_sink(self, rec: _Sink, added):
        new = [x for x in added if x not in rec.block]
        rec.block.update(new)
        rec.open = False
        self._log.append(("close", rec.key, self._log_ids(new)))
        self._retoken()

    def _log_ids(self, ids):
        """Original-vertex ids only, sorted; split points stay out of logs."""
        return tuple(sorted(x for x in ids if 0 <= x < self._n0))

    def _feasible(self) -> BoundedResult:
        sinks, blocks, keys = [], [], []
        for rec in self._sinks:
            sinks.append(rec.location)
            blocks.append(frozenset(x for x in rec.block if x < self._n0))
            keys.append(rec.key)
        return BoundedResult(True, SinkAssignment(sinks, blocks, keys, self._log),
                             self.stats)

    # ------------------------------------------------------------------
    # oracle access (memoized per working-tree state)

    def _side(self, u, v):
        """Live component of u after cutting (u, v); None if it holds a sink."""
        if u in self._sink_by_node:
            return None
        alive = self._alive
        t = self._t
        virt = self._virtual_at
        sink_by_node = self._sink_by_node
        out = [u]
        seen = {u, v}
        stack = [u]
        while stack:
            x = stack.pop()
            for rec in virt.get(x, ()):
                if rec.node != v:
                    return None
            for y in t.adj(x):
                if alive[y] and y not in seen:
                    if y in sink_by_node:
                        return None
                    seen.add(y)
                    out.append(y)
                    stack.append(y)
        return out

    def _gate_raw(self, u, v):
        # Pairs between original vertices are identified by the commit
        # history alone. A pair touching a split point is not: the same
        # history commits the same edges but at bound-dependent offsets,
        # so those keys carry the run mode tag as well.
        if u < self._n0 and 0 <= v < self._n0:
            key = ("p", u, v, self._tok)
        else:
            key = ("p", u, v, self._tok, self._mtag)
        val = self._memo.get(key)
        if val is None:
            side = self._side(u, v)
            assert side is not None, "gate evaluated on a side holding a sink"
            val = self._oracle.eval_gate_pair(self._t, frozenset(side), u, v)
            if self._checked:
                assert not val[1] < val[0], "gate pair ordering violated"
            self._memo[key] = val
        return val

    def _gate(self, u, v):
        """(near, far) costs of the gate (u, v): serve the u-side at u,
        then the u-side plus v at v."""
        self._tally(2)
        return self._gate_raw(u, v)

    def _gate_far(self, u, v):
        """Far cost only; one logical query."""
        self._tally(1)
        return self._gate_raw(u, v)[1]

    def _le_sink_support(self, rec: _Sink, support, marker) -> bool:
        """Is the cost of ``support`` served by sink ``rec`` within bound?

        ``support`` lists real vertices; the sink's own node is implied.
        A placed sink is priced directly, a symbolic edge sink at the
        best split point of its stored edge, serving its own block one
        way and ``support`` the other.
        """
        self._tally(1)
        key = ("m", marker, rec.index, self._tok, self._mtag)
        val = self._memo.get(key)
        if val is None:
            if rec.node < 0:
                eu, ev = rec.edge
                left = SubtreeView(self._t, vertices=frozenset(rec.block))
                right = SubtreeView(self._t, vertices=frozenset(support))
                _, val = edge_minimax(self._oracle, left, right, eu, ev)
            else:
                val = self._oracle.eval(self._t, frozenset(support) | {rec.node},
                                        rec.node)
            self._memo[key] = val
        return self._policy.le(val)

    # ------------------------------------------------------------------
    # movement one: centroid peeling

    def _peel(self) -> BoundedResult | None:
        self._peeling = True
        try:
            for stage in self._stages:
                done = self._peel_stage(stage)
                if done is not None:
                    return done
            if self._checked and self._n0 <= 60 and \
                    isinstance(self._policy, ConcretePolicy):
                self._verify_labels()
            return None
        finally:
            self._peeling = False

    def _peel_stage(self, stage) -> BoundedResult | None:
        alive = self._alive
        label = self._label
        pairs: dict[tuple[int, int], tuple] = {}
        batch: list[tuple[int, int]] = []
        values = []
        for c in stage:
            # Sinks stay valid stage centers: the one gate a sink leaf still
            # faces is what either folds the remainder into it or exposes an
            # overload right next door.
            if not alive[c]:
                continue
            for u in self._adj0[c]:
                if not alive[u] or (u, c) in label:
                    continue
                if self._side(u, c) is None:
                    continue
                a, b = self._gate(u, c)
                pairs[(u, c)] = (a, b)
                batch.append((u, c))
                values.append(a)
                values.append(b)
        self._policy.batch(values)
        if self._n0 <= 200:
            self._assert_disjoint_sides(batch)

        # A stage vertex whose every live neighbor produced a fresh gate
        # evaluation servable from here can absorb the entire remaining
        # tree. Neighbors whose gates could not be evaluated this stage
        # (already settled, or their side holds a sink) leave the shortcut
        # to later machinery, which only delays termination, never breaks
        # it. A sink center folds the remainder into its own block.
        le = self._policy.le
        for c in stage:
            if not alive[c]:
                continue
            ok = True
            for u in self._nbrs(c):
                pr = pairs.get((u, c))
                if pr is None or not le(pr[1]):
                    ok = False
                    break
            if ok:
                self._note("collapse", c)
                return self._absorb_all(c)

        for u, c in batch:
            if len(self._sink_by_node) >= self._live_count():
                break  # a chained edge commit consumed the whole tree
            if (u, c) in label:
                continue
            assert alive[u] and alive[c], "a peel commit clipped a sibling gate"
            a, b = pairs[(u, c)]
            le_a = le(a)
            le_b = le(b)
            if le_a and not le_b:
                self._note("peak", u, c)
                self._spread_label(c, u, _INSIDE)
                self._commit_peak(u, c)
            elif le_b:
                if self._checked:
                    assert le_a, "gate pair ordering violated"
                label[(u, c)] = _ABSORB
                self._spread_label(u, c, _ABSORB)
            else:
                label[(u, c)] = _INSIDE
                self._spread_label(c, u, _INSIDE)
        return None

    def _spread_label(self, start, blocked, lab):
        """Propagate a settled classification across the live tree.

        Sink-inside spreads outward from the far endpoint (every gate one
        step beyond holds the overloaded region in its strictly larger
        side, so it inherits the claim); absorbable spreads inward over
        the near side. Gates pointing into sink leaves are labeled like
        any other: suppressing their later evaluation is what keeps the
        sides examined within one stage disjoint. Stops at gates already
        settled.
        """
        label = self._label
        stack = [(start, blocked)]
        while stack:
            x, stop = stack.pop()
            for y in self._nbrs(x):
                if y == stop or y < 0:
                    continue
                e = (x, y) if lab == _INSIDE else (y, x)
                if e in label:
                    if self._checked:
                        assert label[e] == lab, "label fronts collided"
                    continue
                label[e] = lab
                stack.append((y, x))

    def _commit_vertex(self, u, v):
        """Plant a vertex sink at ``u`` claiming its side of (u, v)."""
        side = self._side(u, v)
        assert side is not None
        self._open_sink(("v", u), u, VertexSink(u), set(side))
        self._kill(x for x in side if x != u)

    def _pinned_to_near_end(self, lines) -> bool:
        """Decide through the policy whether the farthest servable point
        of a peak gate's edge degenerates to the near vertex.

        Mirrors the boundary arithmetic of
        :func:`farthest_feasible_point`: a flat cost line above the bound
        leaves no point on the open edge servable, and a rising line that
        starts at or above the bound pushes the best offset to zero.
        Either way the sink lands on the near vertex itself. Lines are
        aggregated by slope class first so the decision costs at most two
        policy comparisons however many lines the side produced.
        """
        flat = None
        rising = None
        for slope, intercept in lines:
            if slope == 0:
                if flat is None or intercept > flat:
                    flat = intercept
            elif rising is None or intercept > rising:
                rising = intercept
        if flat is not None and not self._policy.le(flat):
            return True
        return rising is not None and self._policy.ge(rising)

    def _commit_peak(self, u, v):
        """Plant a sink at gate (u, v): on u, or on the edge when continuous."""
        if not self._cont:
            self._commit_vertex(u, v)
            return
        side = self._side(u, v)
        assert side is not None
        if v < 0 or v >= self._n0:
            # Chained commit against an edge sink: the segment left of it
            # is part of the original edge, so name the sink by that edge.
            far = self._sink_by_node[v].edge[0]
        else:
            far = v
        key = ("e", u, far)
        if self._symbolic:
            lines = self._oracle.edge_cost_lines(self._t, frozenset(side),
                                                 u, far)
            if lines is None:
                raise UnsupportedContinuous(
                    f"{self._oracle.name} oracle gives no closed-form edge "
                    "costs, which the deferred-threshold continuous search "
                    "needs to settle edge sinks")
            if self._pinned_to_near_end(lines):
                self._open_sink(key, u, VertexSink(u), set(side),
                                edge=(u, far))
                self._kill(x for x in side if x != u)
            else:
                node = self._next_virtual
                self._next_virtual -= 1
                rec = self._open_sink(key, node, None, set(side),
                                      anchor=(v if v >= 0 else u),
                                      edge=(u, far))
                self._kill(side)
                self._tail_check(v, rec)
            return
        T = self._policy.concrete_threshold()
        view = SubtreeView(self._t, vertices=side)
        try:
            pt = farthest_feasible_point(self._oracle, view, u, v, T)
        except NoFeasiblePoint:
            pt = EdgeSink(u, v, 0)
        tau, _ = self._t.edge_params(u, v)
        assert pt.offset < tau, "a peak gate cannot be served from its far end"
        if pt.offset == 0:
            self._open_sink(key, u, VertexSink(u), set(side), edge=(u, far))
            self._kill(x for x in side if x != u)
        else:
            self._t, x = subdivide_edge(self._t, u, v, pt.offset)
            self._alive.append(1)
            self._n_live += 1
            rec = self._open_sink(key, x, pt, set(side) | {x}, edge=(u, far))
            self._kill(side)
            self._tail_check(v, rec)

    def _tail_check(self, v, rec):
        """Settle the gate the rest of the tree now faces toward a sink
        planted inside an edge.

        A split point never becomes a stage center, so no later stage
        would ever evaluate this gate; an unexamined gate is exactly what
        the lone-sink shortcut cannot afford. Settle it on the spot: mark
        it absorbable or overloaded, or chain another commit when it
        peaks. The chained sink's feasible stretch ends strictly before
        the sink just planted, so both fit on the edge.
        """
        sn = rec.node
        side = self._side(v, sn)
        if side is None:
            return
        if sn >= 0:
            a, b = self._gate(v, sn)
            le_a = self._policy.le(a)
            le_b = self._policy.le(b)
        else:
            key = ("p", v, sn, self._tok)
            a = self._memo.get(key)
            if a is None:
                a = self._oracle.eval(self._t, frozenset(side), v)
                self._memo[key] = a
            self._tally(1)
            le_a = self._policy.le(a)
            le_b = self._le_sink_support(rec, side, ("t", v))
        if le_b:
            self._label[(v, sn)] = _ABSORB
        elif not le_a:
            self._label[(v, sn)] = _INSIDE
        else:
            self._note("peak", v, rec.edge[0])
            self._commit_peak(v, sn)

    def _absorb_all(self, c) -> BoundedResult:
        """Commit every unclaimed live vertex to the sink at c and finish.

        When c already carries a sink the remainder joins its block;
        otherwise a fresh vertex sink opens. Other sinks still open keep
        just the blocks they hold; their vertices must not fold in.
        """
        mine = self._sink_by_node.get(c)
        for rec in self._sinks:
            if rec.open and rec is not mine:
                self._close_sink(rec, ())
                self._kill([rec.node])
        block = {x for x in range(len(self._alive)) if self._alive[x]}
        if mine is not None:
            self._close_sink(mine, block)
        else:
            self._open_sink(("v", c), c, VertexSink(c), block)
        self._kill(block)
        return self._feasible()

    def _assert_disjoint_sides(self, batch):
        seen: set[int] = set()
        for u, c in batch:
            side = self._side(u, c)
            if side is None:
                continue
            for x in side:
                assert x not in seen, "peel stage evaluated overlapping sides"
                seen.add(x)

    def _verify_labels(self):
        """Re-derive every surviving label from scratch (checked mode)."""
        T = self._policy.threshold
        for (u, v), lab in self._label.items():
            if v < 0 or not (self._alive[u] and self._alive[v]):
                continue
            side = self._side(u, v)
            if side is None:
                continue
            a, b = self._oracle.eval_gate_pair(self._t, frozenset(side), u, v)
            assert not (a <= T < b), "a settled gate is peak-worthy"
            if lab == _INSIDE:
                assert a > T
            else:
                assert b <= T

    # ------------------------------------------------------------------
    # endgame shortcuts between sweeps

    def _endgame(self) -> BoundedResult | None:
        live_sinks = [rec for rec in self._sinks if rec.open]
        if not live_sinks:
            if self._fixed:
                return BoundedResult(False, None, self.stats)
            # No gate peaked anywhere, so any vertex can serve the whole tree.
            self._note("endgame", "no-sink")
            c = next(x for x in range(len(self._alive)) if self._alive[x])
            return self._absorb_all(c)
        if len(live_sinks) == 1:
            rec = live_sinks[0]
            rest = [x for x in range(len(self._alive)) if self._alive[x]]
            if self._fixed:
                # A lone given sink must be checked against the remainder.
                if not self._le_sink_support(rec, rest, ("all",)):
                    return BoundedResult(False, None, self.stats)
            self._note("endgame", "lone-sink")
            self._close_sink(rec, rest)
            self._kill(rest)
            self._kill([rec.node] if rec.node < 0 else [])
            return self._feasible()
        if self._live_count() == 2:
            self._note("endgame", "pair")
            assert len(live_sinks) == 2
            for rec in sorted(live_sinks, key=lambda r: r.index):
                self._close_sink(rec, ())
                self._kill([rec.node])
            return self._feasible()
        return None

    # ------------------------------------------------------------------
    # movement two: reaching sweeps

    def _survey(self) -> _Reach:
        """Root the live tree, mark every sink's path to the meet point,
        and binary-search how far up its path each sink stays supported."""
        live_sinks = [rec for rec in self._sinks if rec.open]
        alive = self._alive
        rho = next(x for x in range(len(alive))
                   if alive[x] and x not in self._sink_by_node)
        parent1, depth1 = self._bfs(rho)
        z = live_sinks[0].node
        for rec in live_sinks[1:]:
            z = self._lca(z, rec.node, parent1, depth1)
        assert z >= 0 and z not in self._sink_by_node
        parent, depth = self._bfs(z)
        self._note("root", z)

        on_path: set[int] = set()
        for rec in live_sinks:
            x = rec.node
            while x is not None and x not in on_path:
                on_path.add(x)
                x = parent[x]
        path_children: dict[int, list[int]] = {x: [] for x in on_path}
        for x in on_path:
            p = parent[x]
            if p is not None:
                path_children[p].append(x)
        nkey = self._nkey
        for kids in path_children.values():
            kids.sort(key=nkey)
        order = sorted(on_path, key=lambda x: (-depth[x], nkey(x)))

        self._branches = {}
        tops: dict[int, int] = {}
        for rec in live_sinks:
            top = self._reach_top(rec, parent, depth, on_path)
            tops[rec.index] = top
            self._note("top", rec.index, top)

        mintop: dict[int, tuple] = {}
        for x in order:
            rec = self._sink_by_node.get(x)
            if rec is not None:
                mintop[x] = (depth[tops[rec.index]], rec.index)
            else:
                mintop[x] = min(mintop[c] for c in path_children[x])
        return _Reach(z, parent, depth, on_path, path_children, order,
                      tops, mintop)

    def _bfs(self, root):
        parent = {root: None}
        depth = {root: 0}
        q = deque([root])
        while q:
            x = q.popleft()
            d = depth[x] + 1
            for y in self._nbrs(x):
                if y not in parent:
                    parent[y] = x
                    depth[y] = d
                    q.append(y)
        return parent, depth

    @staticmethod
    def _lca(a, b, parent, depth):
        while depth[a] > depth[b]:
            a = parent[a]
        while depth[b] > depth[a]:
            b = parent[b]
        while a != b:
            a = parent[a]
            b = parent[b]
        return a

    def _branch_at(self, p, on_path):
        """Vertices of live branches hanging off path node p (cached)."""
        got = self._branches.get(p)
        if got is None:
            out = []
            for y in self._nbrs(p):
                if y in on_path or y < 0:
                    continue
                out.append(y)
                stack = [(y, p)]
                while stack:
                    x, stop = stack.pop()
                    for w in self._nbrs(x):
                        if w != stop:
                            assert w >= 0 and w not in on_path
                            out.append(w)
                            stack.append((w, x))
            got = tuple(out)
            self._branches[p] = got
        return got

    def _bulk_path(self, rec: _Sink, path, on_path):
        """Real support vertices along a sink's path: the path nodes plus
        every branch hanging off them."""
        support = [x for x in path if x >= 0]
        for p in path:
            if p >= 0:
                support.extend(self._branch_at(p, on_path))
        return support

    def _reach_top(self, rec: _Sink, parent, depth, on_path):
        """Highest path node from which this sink still covers the whole
        corridor up to it (path plus hanging branches)."""
        path = [rec.node]
        x = parent[rec.node]
        while x is not None:
            path.append(x)
            x = parent[x]
        lo, hi = 0, len(path) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            support = self._bulk_path(rec, path[:mid + 1], on_path)
            if self._le_sink_support(rec, support, ("bp", path[mid])):
                lo = mid
            else:
                hi = mid - 1
        return path[lo]

    def _sweep(self, reach: _Reach):
        """Children-first pass over the sink paths; returns the first
        edge whose lower side no placed sink supports, or None when the
        placed sinks cover everything."""
        depth = reach.depth
        mintop = reach.mintop
        for v in reach.order:
            if v in self._sink_by_node:
                continue
            kids = reach.path_children[v]
            for u in kids:
                if mintop[u][0] > depth[v]:
                    if self._checked:
                        assert mintop[u][0] <= depth[u], \
                            "a fired corridor lost its own support"
                    self._note("fire", u, v)
                    return u, v
        return None

    def _carve(self, w0, reach: _Reach):
        """Close off everything at or below ``w0`` using the supported
        tops found by the survey; no oracle calls are made."""
        comps = deque([w0])
        while comps:
            w = comps.popleft()
            d, sidx = reach.mintop[w]
            assert d <= reach.depth[w], "carved a component with no support"
            rec = self._sinks[sidx]
            path = [rec.node]
            x = rec.node
            while x != w:
                x = reach.parent[x]
                path.append(x)
            support = self._bulk_path(rec, path, reach.on_path)
            consumed = set(path) | set(support)
            self._close_sink(rec, support)
            for p in path:
                for c in reach.path_children.get(p, ()):
                    if c not in consumed:
                        comps.append(c)
            self._kill(consumed)

    def _resolve_pinch(self, u, v, reach: _Reach) -> BoundedResult | None:
        """After carving the fired child ``u`` off ``v``, decide whether
        the survivors still hang together, planting one more sink where
        the tree pinches.

        Path structure from ``reach`` is stale below the carve but exact
        above it, which is the only part walked here.
        """
        path_children = reach.path_children
        parent = reach.parent
        if len(path_children[v]) >= 2:
            h = v
            dead_side = u
            chain = [v]
        else:
            h = parent[v]
            while len(path_children[h]) < 2:
                h = parent[h]
            chain = self._chain_up(v, h, parent)
            dead_side = chain[-2]
            ok = self._policy.le(self._gate_far(dead_side, h))
            self._note("absorb", h, ok)
            if not ok:
                return self._plant_on_path(chain)
        if len(path_children[h]) >= 3 or h != reach.root:
            return None

        # The meet point lost one of its two corridors; examine the
        # survivor's first junction or sink.
        kids = [c for c in path_children[h] if c != dead_side]
        assert len(kids) == 1
        h2 = kids[0]
        while h2 not in self._sink_by_node and len(path_children[h2]) == 1:
            h2 = path_children[h2][0]
        v2 = parent[h2]
        down = self._chain_up(h2, h, parent)
        spine = chain + list(reversed(down[:-1]))
        rec = self._sink_by_node.get(h2)
        if rec is None:
            ok = self._policy.le(self._gate_far(v2, h2))
            self._note("respine", h2, ok)
            if ok:
                return None
            return self._plant_on_path(spine)
        side = self._side(v2, h2)
        assert side is not None
        ok = self._le_sink_support(rec, side, ("sd", v2))
        self._note("respine", h2, ok)
        if ok:
            # The lone surviving sink absorbs everything that is left.
            rest = [x for x in range(len(self._alive)) if self._alive[x]]
            self._close_sink(rec, rest)
            self._kill(rest)
            if rec.node < 0:
                self._kill([rec.node])
            return self._feasible()
        return self._plant_on_path(spine)

    @staticmethod
    def _chain_up(a, b, parent):
        """Path a .. b following parent pointers; b must be an ancestor."""
        out = [a]
        while a != b:
            a = parent[a]
            out.append(a)
        return out

    def _plant_on_path(self, path) -> None:
        """Binary-search the unique overloaded gate along ``path`` (the
        far cost is known to cross the bound at the last edge) and plant
        a sink there."""
        m = len(path) - 1
        lo, hi = 0, m - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if self._policy.le(self._gate_far(path[mid], path[mid + 1])):
                lo = mid + 1
            else:
                hi = mid
        u, w = path[lo], path[lo + 1]
        self._note("path-peak", u, w)
        if lo == m - 1 and w in self._sink_by_node:
            # The crossing sits on the very step into an existing sink,
            # whose edge may not exist in the original tree; the near
            # vertex is servable, so the sink goes on it in every mode.
            self._commit_vertex(u, w)
            return None
        self._commit_peak(u, w)
        return None


def threshold_run(tree: TreeGraph, oracle: CostOracle, budget: int,
                  policy: ThresholdPolicy, *, continuous=False,
                  fixed_sinks=None, stages=None, memo=None, registry=None,
                  checked=False, trace=None) -> BoundedResult:
    """Run the feasibility machine under an arbitrary threshold policy.

    This is the shared entry for the optimizing and fixed-sink solvers;
    most callers want :func:`solve_bounded`. ``memo`` and ``registry``
    may be shared across runs on the same tree and oracle to reuse
    evaluations between runs whose commit histories agree.
    """
    run = _Run(tree, oracle, budget, policy, continuous=continuous,
               fixed_sinks=fixed_sinks, stages=stages, memo=memo,
               registry=registry, checked=checked, trace=trace)
    return run.run()


def solve_bounded(tree: TreeGraph, oracle: CostOracle, k: int, threshold, *,
                  continuous=False, stages=None, checked=False,
                  trace=None) -> BoundedResult:
    """Can ``tree`` be served by at most ``k`` sinks, every block within
    ``threshold``?

    Returns a :class:`BoundedResult`; on success its assignment lists the
    sink locations (vertices, or edge points in continuous mode) and the
    block of original vertices each serves. Infeasibility is reported,
    never raised: it means any valid placement needs more than ``k``
    sinks.

    Parameters
    ----------
    tree, oracle:
        The instance. The oracle must satisfy the full monotone contract
        (relaxed oracles are rejected; they only make sense with fixed
        sinks).
    k:
        Positive sink budget.
    threshold:
        Cost bound, any value comparable with oracle costs.
    continuous:
        Allow sinks on interior edge points. Requires a continuous-capable
        oracle.
    stages:
        Precomputed centroid stages of ``tree``, for callers running many
        bounds on one tree.
    checked:
        Enable expensive internal self-checks (small instances only).
    trace:
        A list collecting solver events, for tests and debugging.

    Complexity: O(n log n) oracle queries in the peeling sweep and
    O(k^2 log n + k log^2 n) afterwards, plus O(n) bookkeeping per sweep.
    """
    if not isinstance(k, int) or k < 1:
        raise NonPositiveParameter(f"sink budget must be a positive integer, got {k!r}")
    if oracle.is_relaxed:
        raise RelaxedOracleRejected(
            f"{oracle.name} oracle lacks the distance-monotone axiom; "
            "only the fixed-sink solver accepts it")
    if continuous and not oracle.supports_continuous:
        raise UnsupportedContinuous(f"{oracle.name} oracle cannot price edge-point sinks")
    return threshold_run(tree, oracle, k, ConcretePolicy(threshold),
                         continuous=continuous, stages=stages,
                         checked=checked, trace=trace)


def classify_edge(tree: TreeGraph, oracle: CostOracle, sinks, u: int, v: int,
                  threshold) -> str:
    """Classify the directed gate (u, v) against ``threshold``.

    The gate's component is the side of ``u`` once (u, v) is cut, which
    must contain no sink from ``sinks`` (:class:`SinkInSubtree`
    otherwise). Returns ``"peak"`` when the side is servable at ``u``
    but not together with ``v`` from ``v``, ``"sink-inside"`` when it is
    not even servable at ``u``, and ``"absorbable"`` when it is servable
    from ``v``.
    """
    side = subtree_away(tree, u, v).as_set()
    bad = side & set(sinks)
    if bad:
        raise SinkInSubtree(f"side of ({u}, {v}) contains sinks {sorted(bad)}")
    a, b = oracle.eval_gate_pair(tree, side, u, v)
    if a <= threshold < b:
        return GATE_PEAK
    if b <= threshold:
        return GATE_ABSORBABLE
    return GATE_SINK_INSIDE
