from __future__ import annotations

import math
import random
from fractions import Fraction as F

import pytest

from helpers import path_tree, random_tree
from sinktree.bounded import solve_bounded
from sinktree.brute import brute_continuous, brute_feasible, brute_minmax
from sinktree.errors import NonPositiveParameter, RelaxedOracleRejected
from sinktree.oracles import EvacOracle, KCenterOracle, RangeCostOracle
from sinktree.parametric import (RangePolicy, Resolution, ThresholdRange,
                                 bulk_if_step, if_step, solve_minmax,
                                 stage_step)
from sinktree.tree import build_tree

SEED = 20260818


class CountingFeas:
    """Feasibility callback that records every probed bound."""

    def __init__(self, answer):
        self.answer = answer
        self.probed = []

    def __call__(self, bound):
        self.probed.append(bound)
        return self.answer(bound)


# -- threshold range ----------------------------------------------------------


def test_range_rejects_empty_interval():
    with pytest.raises(NonPositiveParameter):
        ThresholdRange(3, 3)


def test_range_update_is_one_way():
    rng = ThresholdRange()
    rng.update(low=2)
    rng.update(high=7)
    assert (rng.low, rng.high) == (2, 7)
    assert rng.history == [("low", 0, 2), ("high", math.inf, 7)]
    with pytest.raises(AssertionError):
        rng.update(low=1)
    with pytest.raises(AssertionError):
        rng.update(high=8)
    with pytest.raises(AssertionError):
        rng.update(low=7)


# -- single comparison steps --------------------------------------------------


def test_if_step_free_at_the_ends():
    rng = ThresholdRange(2, 9)
    feas = CountingFeas(lambda b: True)
    assert if_step(rng, 2, feas)[0] == Resolution.LE
    assert if_step(rng, 1, feas)[0] == Resolution.LE
    assert if_step(rng, 9, feas)[0] == Resolution.GT
    assert if_step(rng, math.inf, feas)[0] == Resolution.GT
    assert feas.probed == []
    assert (rng.low, rng.high) == (2, 9)


def test_if_step_probes_inside():
    rng = ThresholdRange(2, 9)
    feas = CountingFeas(lambda b: True)
    res, _ = if_step(rng, 5, feas)
    assert res == Resolution.GT
    assert (rng.low, rng.high) == (2, 5)
    assert feas.probed == [5]

    rng = ThresholdRange(2, 9)
    feas = CountingFeas(lambda b: False)
    res, _ = if_step(rng, 5, feas)
    assert res == Resolution.LE
    assert (rng.low, rng.high) == (5, 9)
    assert feas.probed == [5]


def test_stage_step_brackets_the_batch():
    # Unit path, two sinks: splitting {0,1,2} | {3,4} serves everyone
    # within distance 1, so 1 is feasible and 0 is not.
    p5 = path_tree(5)
    o = KCenterOracle()
    rng = ThresholdRange()
    feas = CountingFeas(lambda b: brute_feasible(p5, o, 2, b))
    stage_step(rng, [0, 1, 2], feas)
    assert (rng.low, rng.high) == (0, 1)
    assert sorted(set(feas.probed)) == [1, 2]
    # Every batched value now resolves without another probe.
    n = len(feas.probed)
    for v in (0, 1, 2):
        if_step(rng, v, feas)
    assert len(feas.probed) == n


def test_stage_step_ignores_outside_values():
    rng = ThresholdRange(3, 8)
    feas = CountingFeas(lambda b: True)
    stage_step(rng, [0, 1, 3], feas)
    assert (rng.low, rng.high) == (3, 8)
    stage_step(rng, [8, 11, math.inf], feas)
    assert (rng.low, rng.high) == (3, 8)
    assert feas.probed == []


def test_stage_step_one_sided_batches():
    p5 = path_tree(5)
    o = KCenterOracle()
    # k = 4 makes every positive value in the batch feasible: only the
    # high end moves.
    rng = ThresholdRange()
    feas = CountingFeas(lambda b: brute_feasible(p5, o, 4, b))
    stage_step(rng, [1, 2, 3], feas)
    assert (rng.low, rng.high) == (0, 1)
    # k = 1 flips it: everything under the diameter spread is infeasible.
    rng = ThresholdRange()
    feas = CountingFeas(lambda b: brute_feasible(p5, o, 1, b))
    stage_step(rng, [1, F(3, 2)], feas)
    assert (rng.low, rng.high) == (F(3, 2), math.inf)


def test_bulk_if_step_on_single_edge():
    # Supply 2 at each end of a length-10 unit-capacity edge: the best
    # point for a sink on the edge is the middle, total time 5 + 2.
    t = build_tree([(0, 1, 10, 1)], [2, 2])
    o = EvacOracle()
    rng = ThresholdRange(5, 10)
    feas = CountingFeas(
        lambda b: solve_bounded(t, o, 1, b, continuous=True).feasible)
    res, _ = bulk_if_step(rng, o, t, {0}, {1}, 0, 1, feas)
    assert res == Resolution.GT
    assert (rng.low, rng.high) == (5, 7)
    assert feas.probed == [7]


def test_bulk_if_step_weightless_side_is_free():
    # Nothing to serve on the sink's own side: the guard reduces to the
    # support term, minimized at the support-side endpoint, cost 0 here.
    t = build_tree([(0, 1, 10, 1)], [0, 3])
    o = EvacOracle()
    rng = ThresholdRange()
    feas = CountingFeas(lambda b: True)
    res, _ = bulk_if_step(rng, o, t, {0}, {1}, 0, 1, feas)
    assert res == Resolution.LE
    assert feas.probed == []


# -- deferred-comparison policy ----------------------------------------------


def test_range_policy_caches_resolved_values():
    rng = ThresholdRange()
    feas = CountingFeas(lambda b: b >= 4)
    pol = RangePolicy(rng, feas)
    assert not pol.le(5)
    assert not pol.le(5)
    assert pol.le(3)
    assert feas.probed == [5, 3]
    assert pol.ge(5)
    assert not pol.ge(3)
    assert len(feas.probed) == 2
    assert pol.seen == [5, 5, 3, 5, 3]


def test_range_policy_stays_symbolic():
    pol = RangePolicy(ThresholdRange(), CountingFeas(lambda b: True))
    assert pol.concrete_threshold() is None


# -- full minimization --------------------------------------------------------


def test_minmax_unit_path_frozen():
    p5 = path_tree(5)
    o = KCenterOracle()
    assert solve_minmax(p5, o, 2, checked=True).cost == 1
    assert solve_minmax(p5, o, 1, checked=True).cost == 2
    r = solve_minmax(p5, EvacOracle(), 2, checked=True)
    assert r.cost == brute_minmax(p5, EvacOracle(), 2).cost == 2


def test_minmax_single_vertex():
    t = build_tree([], [5])
    r = solve_minmax(t, KCenterOracle(), 1, checked=True)
    assert r.cost == 0
    assert r.probes == 0
    assert r.assignment.keys == (("v", 0),)


def test_minmax_generous_budget_is_zero():
    p5 = path_tree(5)
    for k in (5, 7):
        r = solve_minmax(p5, KCenterOracle(), k, checked=True)
        assert r.cost == 0
        assert all(len(b) == 1 for b in r.assignment.blocks)


def test_minmax_validation():
    with pytest.raises(NonPositiveParameter):
        solve_minmax(path_tree(3), KCenterOracle(), 0)
    table = {(u, s): 1 for u in range(3) for s in range(3)}
    with pytest.raises(RelaxedOracleRejected):
        solve_minmax(path_tree(3), RangeCostOracle(3, table), 1)


def test_minmax_matches_brute_random():
    rng = random.Random(SEED)
    for rep in range(40):
        t = random_tree(rng, rng.randint(1, 9))
        o = EvacOracle() if rep % 2 else KCenterOracle()
        k = rng.randint(1, 4)
        r = solve_minmax(t, o, k, checked=True)
        want = brute_minmax(t, o, k).cost
        assert r.cost == want, (t.edges, t.weight, k, r.cost, want)
        # The confirmation run respects the budget and the bound.
        assert len(r.assignment) <= k
        # Tightness: the largest cost surfaced under the optimum is a
        # genuinely infeasible bound.
        if r.largest_below is not None:
            assert not brute_feasible(t, o, k, r.largest_below)


def test_minmax_range_walk_is_monotone():
    rng = random.Random(SEED + 4)
    for rep in range(16):
        t = random_tree(rng, rng.randint(2, 9))
        o = KCenterOracle() if rep % 2 else EvacOracle()
        k = rng.randint(1, 3)
        r = solve_minmax(t, o, k, checked=True)
        low, high = 0, math.inf
        for side, old, new in r.range_history:
            if side == "low":
                assert old == low and new >= low and new < high
                low = new
            else:
                assert old == high and new <= high and new > low
                high = new
        assert r.low == low
        if r.cost > 0:
            assert r.cost == high
            # I3 at the final range: low infeasible, high feasible.
            assert not solve_bounded(t, o, k, low, checked=True).feasible
            assert solve_bounded(t, o, k, high, checked=True).feasible


def test_minmax_replay_matches_search_trajectory():
    # The deferred run must be, step for step, the run the machine would
    # do at a bound pinned to the final range: at the final low when the
    # search ends infeasible, at zero when it never meets an infeasible
    # bound at all.
    rng = random.Random(SEED + 5)
    for rep in range(20):
        t = random_tree(rng, rng.randint(2, 9))
        o = EvacOracle() if rep % 2 else KCenterOracle()
        k = rng.randint(1, 3)
        trace = []
        r = solve_minmax(t, o, k, checked=True, trace=trace)
        replay_at = r.low if r.cost > 0 else 0
        trace2 = []
        solve_bounded(t, o, k, replay_at, checked=True, trace=trace2)
        assert trace2 == trace, (t.edges, t.weight, k, replay_at)


def test_minmax_continuous_improves_or_ties():
    rng = random.Random(SEED + 6)
    for _ in range(14):
        t = random_tree(rng, rng.randint(2, 7))
        k = rng.randint(1, 2)
        o = EvacOracle()
        disc = solve_minmax(t, o, k, checked=True)
        cont = solve_minmax(t, o, k, continuous=True, checked=True)
        assert cont.cost <= disc.cost
        grid = brute_continuous(t, o, k, grid_step=F(1, 40)).cost
        assert cont.cost <= grid + F(1, 10 ** 9)
        assert grid - cont.cost <= F(1, 10)


def test_minmax_continuous_single_edge_exact():
    t = build_tree([(0, 1, 10, 1)], [2, 2])
    r = solve_minmax(t, EvacOracle(), 1, continuous=True, checked=True)
    assert r.cost == 7
    sink = r.assignment.sinks[0]
    assert {sink.u, sink.v} == {0, 1}
    offset = sink.offset if sink.u == 0 else 10 - sink.offset
    assert offset == 5


def test_minmax_probe_budget():
    rng = random.Random(SEED + 7)
    for _ in range(10):
        n = rng.randint(3, 10)
        t = random_tree(rng, n)
        k = rng.randint(1, 4)
        r = solve_minmax(t, KCenterOracle(), k, checked=True)
        lg = math.log2(max(2, n))
        assert r.probes <= 64 * (k + lg) * lg
