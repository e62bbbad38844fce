from __future__ import annotations

import random
from fractions import Fraction as F

import pytest

from helpers import path_tree, random_tree, star_tree
from sinktree.bounded import (ConcretePolicy, ThresholdPolicy, classify_edge,
                              solve_bounded, threshold_run)
from sinktree.brute import brute_feasible, brute_minmax
from sinktree.errors import (NonPositiveParameter, RelaxedOracleRejected,
                             SinkInSubtree, UnsupportedContinuous)
from sinktree.oracles import EvacOracle, KCenterCappedOracle, KCenterOracle
from sinktree.tree import EdgeSink, VertexSink, build_tree, centroid_decompose

SEED = 20260818


class Shadow(ThresholdPolicy):
    """Comparison policy that knows a numeric bound but never reveals it.

    It answers ``le``/``ge`` truthfully while ``concrete_threshold``
    stays ``None``, which forces the solver down the same deferred paths
    the optimizing layer uses. A run under this policy must produce the
    same commit log as a plain concrete run at the same bound.
    """

    def __init__(self, bound):
        self.bound = bound

    def batch(self, values):
        pass

    def le(self, value):
        return value <= self.bound

    def ge(self, value):
        return value >= self.bound


def heavy_leaf_tree():
    # A hub-and-spoke instance whose only placement within bound 10 hugs
    # the weight-8 leaf. The gate pointing into that lone sink is what
    # separates infeasible 9 from feasible 10, so any shortcut that
    # skips evaluating gates into sinks gets this wrong.
    return build_tree(
        [(0, 1, 2, 1), (1, 2, F(4, 3), 1), (0, 3, F(5, 3), 1),
         (0, 4, 3, 1), (1, 5, F(5, 2), 1)],
        [1, 4, 0, 0, 0, 8])


def two_arm_evac_tree():
    # Six vertices, three sinks: the first stage labels edges on both
    # arms and a later stage must not re-enter either labeled region.
    # Runs with checked=True so the disjointness assertion is armed.
    return build_tree(
        [(0, 1, F(4, 3), 2), (1, 2, F(3, 2), 2), (2, 3, 4, 1),
         (1, 4, 1, 6), (4, 5, F(2, 3), F(1, 2))],
        [0, F(7, 2), 4, 0, F(7, 2), 1])


def heavy_ends_path():
    # Path 1 - 0 - 2 with both real loads at the ends. The first edge
    # commit plants a sink inside (2, 0); the leftover side then peaks
    # against that fresh sink and a second, chained commit must settle
    # it on the same edge.
    return build_tree([(0, 1, 2, F(2, 3)), (0, 2, 2, 1)], [4, 2, 8])


# -- policy contract ---------------------------------------------------------


def test_concrete_policy_holds_both_at_equality():
    p = ConcretePolicy(5)
    assert p.le(5) and p.ge(5)
    assert p.le(4) and not p.ge(4)
    assert not p.le(6) and p.ge(6)
    assert p.concrete_threshold() == 5


# -- frozen runs on a five-vertex path ---------------------------------------


def test_path_two_sinks_frozen():
    trace = []
    r = solve_bounded(path_tree(5), EvacOracle(), 2, 2, checked=True,
                      trace=trace)
    assert r.feasible
    assert trace == [("peak", 1, 2), ("peak", 3, 2), ("root", 2),
                     ("top", 0, 2), ("top", 1, 2), ("covered",)]
    assert r.stats.peel_queries == 4
    assert r.stats.reach_queries == 2
    a = r.assignment
    assert a.keys == (("v", 1), ("v", 3))
    assert a.sinks == (VertexSink(1), VertexSink(3))
    assert [sorted(b) for b in a.blocks] == [[0, 1, 2], [3, 4]]
    assert a.log == (("open", ("v", 1), (0, 1)), ("open", ("v", 3), (3, 4)),
                     ("close", ("v", 1), (2,)), ("close", ("v", 3), ()))


def test_path_infeasible_frozen():
    trace = []
    r = solve_bounded(path_tree(5), EvacOracle(), 2, 1, checked=True,
                      trace=trace)
    assert not r.feasible
    assert r.assignment is None
    assert trace == [("peak", 4, 3), ("peak", 0, 1), ("root", 1),
                     ("top", 0, 4), ("top", 1, 0), ("fire", 4, 3),
                     ("absorb", 1, False), ("path-peak", 3, 2)]
    assert r.stats.peel_queries == 8
    assert r.stats.reach_queries == 5
    assert r.stats.sinks_opened == 2

    # Any bound in the same gate gap drives the identical trajectory.
    trace2 = []
    r2 = solve_bounded(path_tree(5), EvacOracle(), 2, F(9, 10), checked=True,
                       trace=trace2)
    assert not r2.feasible
    assert trace2 == trace


def test_path_one_sink_per_vertex():
    r = solve_bounded(path_tree(5), EvacOracle(), 5, 0, checked=True)
    assert r.feasible
    assert len(r.assignment) == 5
    assert sorted(s.v for s in r.assignment.sinks) == [0, 1, 2, 3, 4]
    assert all(len(b) == 1 for b in r.assignment.blocks)


# -- tiny and degenerate instances -------------------------------------------


def test_single_vertex():
    t = build_tree([], [5])
    r = solve_bounded(t, KCenterOracle(), 1, 0, checked=True)
    assert r.feasible
    assert r.assignment.keys == (("v", 0),)
    assert r.assignment.blocks == (frozenset({0}),)


def test_two_vertices():
    t = build_tree([(0, 1, 3, 1)], [2, 2])
    o = KCenterOracle()
    # One sink pays the far vertex's weighted distance, 2 * 3.
    assert not solve_bounded(t, o, 1, 5, checked=True).feasible
    r = solve_bounded(t, o, 1, 6, checked=True)
    assert r.feasible and r.assignment.keys == (("v", 0),)
    r = solve_bounded(t, o, 2, 0, checked=True)
    assert r.feasible
    assert {frozenset(b) for b in r.assignment.blocks} == {frozenset({0}),
                                                           frozenset({1})}


def test_star_collapses_at_center():
    trace = []
    r = solve_bounded(star_tree(4), KCenterOracle(), 1, 100, checked=True,
                      trace=trace)
    assert r.feasible
    assert trace == [("collapse", 0)]
    assert r.assignment.keys == (("v", 0),)
    assert sorted(r.assignment.blocks[0]) == [0, 1, 2, 3, 4]


# -- gate classification ------------------------------------------------------


def test_classify_edge_frozen():
    p5 = path_tree(5)
    o = EvacOracle()
    assert classify_edge(p5, o, (), 1, 2, 2) == "peak"
    assert classify_edge(p5, o, (), 3, 2, 2) == "peak"
    assert classify_edge(p5, o, (), 2, 1, 2) == "sink-inside"
    assert classify_edge(p5, o, (), 0, 1, 2) == "absorbable"


def test_classify_edge_rejects_sink_in_side():
    with pytest.raises(SinkInSubtree):
        classify_edge(path_tree(5), EvacOracle(), (0,), 1, 2, 2)


# -- argument validation ------------------------------------------------------


def test_rejects_bad_budget():
    with pytest.raises(NonPositiveParameter):
        solve_bounded(path_tree(3), EvacOracle(), 0, 1)


def test_rejects_relaxed_oracle():
    from sinktree.oracles import RangeCostOracle
    t = path_tree(3)
    table = {(u, s): 1 for u in range(3) for s in range(3)}
    with pytest.raises(RelaxedOracleRejected):
        solve_bounded(t, RangeCostOracle(3, table), 1, 10)


def test_rejects_continuous_without_support():
    with pytest.raises(UnsupportedContinuous):
        solve_bounded(path_tree(3), KCenterCappedOracle(weight_cap=100), 1, 10,
                      continuous=True)


# -- gates into sinks stay live -----------------------------------------------


def test_lone_sink_gate_decides_feasibility():
    t = heavy_leaf_tree()
    o = KCenterOracle()
    trace = []
    r = solve_bounded(t, o, 1, 9, checked=True, trace=trace)
    assert not r.feasible
    assert trace == [("peak", 5, 1), ("peak", 1, 5)]
    assert not brute_feasible(t, o, 1, 9)

    trace = []
    r = solve_bounded(t, o, 1, 10, checked=True, trace=trace)
    assert r.feasible
    # The second peak becomes a fold of the whole tree into the sink.
    assert trace == [("peak", 5, 1), ("collapse", 5)]
    assert r.assignment.keys == (("v", 5),)
    assert sorted(r.assignment.blocks[0]) == [0, 1, 2, 3, 4, 5]
    assert brute_feasible(t, o, 1, 10)


def test_edge_sink_at_exact_boundary():
    t = heavy_leaf_tree()
    o = KCenterOracle()
    best = F(20, 3)
    r = solve_bounded(t, o, 1, best, continuous=True, checked=True)
    assert r.feasible
    assert r.assignment.sinks == (EdgeSink(5, 1, F(5, 6)),)
    assert r.assignment.keys == (("e", 5, 1),)
    assert sorted(r.assignment.blocks[0]) == [0, 1, 2, 3, 4, 5]
    assert not solve_bounded(t, o, 1, best - F(1, 1000), continuous=True,
                             checked=True).feasible
    # The vertex-only solver cannot reach this bound at all.
    assert not solve_bounded(t, o, 1, best, checked=True).feasible


def test_labels_spread_before_edge_split():
    # At bound 10 the peak commit on (5, 1) subdivides that edge; the
    # overload labels must land on the original neighbors first, never
    # on the split point created by the commit.
    t = heavy_leaf_tree()
    o = KCenterOracle()
    r = solve_bounded(t, o, 1, 10, continuous=True, checked=True)
    assert r.feasible
    assert r.assignment.sinks == (EdgeSink(5, 1, F(5, 4)),)
    sh = threshold_run(t, o, 1, Shadow(10), continuous=True, checked=True)
    assert sh.feasible
    assert sh.assignment.log == r.assignment.log
    assert sh.assignment.keys == r.assignment.keys


def test_stage_labels_stay_disjoint():
    t = two_arm_evac_tree()
    o = EvacOracle()
    bound = F(19, 12)
    r = solve_bounded(t, o, 3, bound, checked=True)
    assert r.feasible
    assert r.assignment.keys == (("v", 2), ("v", 5), ("v", 1))
    assert [sorted(b) for b in r.assignment.blocks] == [[2, 3], [5], [0, 1, 4]]
    assert brute_feasible(t, o, 3, bound)


def test_chained_edge_commit():
    t = heavy_ends_path()
    o = KCenterOracle()
    trace = []
    r = solve_bounded(t, o, 2, 4, continuous=True, checked=True, trace=trace)
    assert r.feasible
    # First commit splits (2, 0); the residual side {0, 1} then peaks
    # against the fresh sink and the chained commit pins at vertex 0.
    assert trace == [("peak", 2, 0), ("peak", 0, 2), ("endgame", "pair")]
    assert r.assignment.sinks == (EdgeSink(2, 0, F(1, 2)), VertexSink(0))
    assert r.assignment.keys == (("e", 2, 0), ("e", 0, 2))
    assert [sorted(b) for b in r.assignment.blocks] == [[2], [0, 1]]
    sh = threshold_run(t, o, 2, Shadow(4), continuous=True, checked=True)
    assert sh.assignment.log == r.assignment.log
    assert sh.assignment.keys == r.assignment.keys


# -- shared evaluation cache ---------------------------------------------------


def test_shared_memo_keeps_runs_identical():
    t = path_tree(5)
    o = EvacOracle()
    stages = centroid_decompose(t)
    memo, registry = {}, {}
    r1 = threshold_run(t, o, 2, ConcretePolicy(2), stages=stages, memo=memo,
                       registry=registry, checked=True)
    r2 = threshold_run(t, o, 2, ConcretePolicy(2), stages=stages, memo=memo,
                       registry=registry, checked=True)
    assert r1.assignment.log == r2.assignment.log
    # Counters track logical requests, not cache misses.
    assert r1.stats.peel_queries == r2.stats.peel_queries
    assert r1.stats.reach_queries == r2.stats.reach_queries
    assert memo


# -- randomized equivalence against exhaustive search -------------------------


def thresholds_for(tree, oracle, k, rng):
    """A probe set straddling the optimum: the exact best bound, a hair
    under it, and a couple of arbitrary levels."""
    best = brute_minmax(tree, oracle, k).cost
    picks = [best]
    if best > 0:
        picks.append(best - F(1, 997))
    levels = [lv for lv in brute_minmax(tree, oracle, k).levels if lv > 0]
    for _ in range(2):
        if levels:
            picks.append(rng.choice(levels))
    return picks


def test_matches_brute_on_random_trees():
    rng = random.Random(SEED)
    oracles = [EvacOracle(), KCenterOracle()]
    for rep in range(24):
        n = rng.randint(2, 8)
        t = random_tree(rng, n)
        o = oracles[rep % 2]
        k = rng.randint(1, 3)
        for bound in thresholds_for(t, o, k, rng):
            got = solve_bounded(t, o, k, bound, checked=True)
            want = brute_feasible(t, o, k, bound)
            assert got.feasible == want, (t.edges, t.weights, k, bound)
            if got.feasible:
                check_assignment(t, o, bound, got.assignment, k)


def check_assignment(tree, oracle, bound, assignment, k):
    assert len(assignment) <= k
    seen = set()
    for sink, block in zip(assignment.sinks, assignment.blocks):
        assert not (block & seen)
        seen |= block
        if isinstance(sink, VertexSink):
            assert oracle.eval(tree, block, sink.v) <= bound
    assert seen == set(range(tree.n))


def test_feasibility_is_monotone_in_bound():
    rng = random.Random(SEED + 1)
    o = EvacOracle()
    for _ in range(12):
        t = random_tree(rng, rng.randint(2, 8))
        k = rng.randint(1, 2)
        best = brute_minmax(t, o, k).cost
        assert solve_bounded(t, o, k, best, checked=True).feasible
        assert solve_bounded(t, o, k, best + 1, checked=True).feasible
        assert solve_bounded(t, o, k, best * 2 + 1, checked=True).feasible


def test_continuous_never_needs_more_than_discrete():
    rng = random.Random(SEED + 2)
    for rep in range(12):
        t = random_tree(rng, rng.randint(2, 7))
        o = EvacOracle() if rep % 2 else KCenterOracle()
        k = rng.randint(1, 2)
        best = brute_minmax(t, o, k).cost
        r = solve_bounded(t, o, k, best, continuous=True, checked=True)
        assert r.feasible


def test_shadow_policy_matches_concrete():
    rng = random.Random(SEED + 3)
    for rep in range(16):
        t = random_tree(rng, rng.randint(2, 8))
        o = EvacOracle() if rep % 2 else KCenterOracle()
        k = rng.randint(1, 3)
        best = brute_minmax(t, o, k).cost
        for bound in (best, best + F(1, 3)):
            for cont in (False, True):
                ref = solve_bounded(t, o, k, bound, continuous=cont,
                                    checked=True)
                sh = threshold_run(t, o, k, Shadow(bound), continuous=cont,
                                   checked=True)
                assert sh.feasible == ref.feasible
                if ref.feasible:
                    assert sh.assignment.log == ref.assignment.log
                    assert sh.assignment.keys == ref.assignment.keys


def test_budget_counters_track_phases():
    t = heavy_leaf_tree()
    r = solve_bounded(t, KCenterOracle(), 1, 10, checked=True)
    assert r.stats.peel_queries > 0
    assert r.stats.reach_queries == 0
    assert r.stats.sinks_opened == 1
    r = solve_bounded(path_tree(5), EvacOracle(), 2, 2, checked=True)
    assert r.stats.sinks_opened <= 2
    assert r.stats.reach_queries > 0
