"""Threshold minimization by deferred comparison over a shrinking range.

:func:`solve_minmax` finds the smallest bound under which the feasibility
machine succeeds, without guessing candidate bounds up front. It runs the
machine once with every threshold comparison answered from a range
``(low, high]`` whose low end is known infeasible and whose high end is
known feasible: values outside the range resolve for free, values inside
trigger one fresh feasibility probe at exactly that value and then shrink
the range to the matching side. Batched stage values shrink the range by
binary search instead, so a whole stage costs logarithmically many probes.

Every answer handed out stays truthful for any bound strictly inside the
final range. The deferred run is therefore the run the machine would have
performed at such a bound, and its verdict transfers: ending infeasible
pins the optimum to the final high end, ending feasible is only possible
when nothing was ever infeasible, which makes the optimum zero. One last
concrete run at the optimum rebuilds the sink configuration, with exact
edge offsets in continuous mode.
"""

from __future__ import annotations

import math
from typing import NamedTuple

from .bounded import (BoundedResult, ConcretePolicy, RunStats, SinkAssignment,
                      ThresholdPolicy, threshold_run)
from .errors import (NonPositiveParameter, RelaxedOracleRejected,
                     UnsupportedContinuous)
from .oracles import CostOracle, edge_minimax
from .tree import SubtreeView, TreeGraph, centroid_decompose


class Resolution:
    """Verdict of one deferred comparison against the hidden bound."""

    LE = "le"   # the guarded value is at or under the bound
    GT = "gt"   # the guarded value is over the bound


class ThresholdRange:
    """Half-open search interval ``(low, high]`` for the optimal bound.

    ``low`` is always a bound proven infeasible (or the starting 0) and
    ``high`` one proven feasible, with +inf standing for "not yet
    capped". The ends only ever move toward each other; ``update``
    enforces that and records each move in ``history`` so tests can
    audit the whole walk.
    """

    __slots__ = ("low", "high", "history")

    def __init__(self, low=0, high=math.inf):
        if not low < high:
            raise NonPositiveParameter(
                f"threshold range needs low < high, got ({low!r}, {high!r}]")
        self.low = low
        self.high = high
        self.history = []

    def update(self, low=None, high=None):
        if low is not None:
            assert low >= self.low, "low end of the threshold range regressed"
            self.history.append(("low", self.low, low))
            self.low = low
        if high is not None:
            assert high <= self.high, "high end of the threshold range regressed"
            self.history.append(("high", self.high, high))
            self.high = high
        assert self.low < self.high, "threshold range collapsed"

    def __repr__(self):
        return f"ThresholdRange({self.low!r}, {self.high!r}]"


def if_step(rng: ThresholdRange, value, feas) -> tuple[str, ThresholdRange]:
    """Resolve one comparison "value <= bound?" against the range.

    Values at or under ``low`` are LE and values at or over ``high`` are
    GT, both for free. A value strictly inside costs one ``feas`` probe
    and moves the matching end of the range onto it: an infeasible value
    becomes the new low (LE), a feasible one the new high (GT, since the
    effective bound stays strictly under the high end).
    """
    if value <= rng.low:
        return Resolution.LE, rng
    if value >= rng.high:
        return Resolution.GT, rng
    if feas(value):
        rng.update(high=value)
        return Resolution.GT, rng
    rng.update(low=value)
    return Resolution.LE, rng


def stage_step(rng: ThresholdRange, values, feas) -> ThresholdRange:
    """Shrink the range around one stage's batch of oracle values.

    The distinct values strictly inside the range are sorted and binary
    searched for the feasibility boundary: the largest infeasible one
    becomes the new low and the smallest feasible one the new high, at
    O(log) probes for the whole batch. Values outside the range, and
    +inf (never a candidate bound), are ignored. Afterwards every value
    of the batch resolves for free.
    """
    low, high = rng.low, rng.high
    cand = sorted({v for v in values if low < v < high})
    if not cand:
        return rng
    lo, hi = 0, len(cand)
    while lo < hi:
        mid = (lo + hi) // 2
        if feas(cand[mid]):
            hi = mid
        else:
            lo = mid + 1
    if lo < len(cand):
        rng.update(high=cand[lo])
    if lo > 0:
        rng.update(low=cand[lo - 1])
    return rng


def bulk_if_step(rng: ThresholdRange, oracle: CostOracle, tree: TreeGraph,
                 sink_block, support, u: int, v: int,
                 feas) -> tuple[str, ThresholdRange]:
    """Resolve "can a sink somewhere on (u, v) also carry ``support``".

    The sink is known only up to its containing edge; the guarded value
    is the best the edge has to offer, the minimum over its points of
    the larger of serving the sink's own block and serving ``support``.
    That minimum comes from :func:`edge_minimax` in closed form, after
    which this is an ordinary :func:`if_step` on a single value.
    """
    left = SubtreeView(tree, vertices=frozenset(sink_block))
    right = SubtreeView(tree, vertices=frozenset(support))
    _, val = edge_minimax(oracle, left, right, u, v)
    return if_step(rng, val, feas)


class RangePolicy(ThresholdPolicy):
    """Threshold policy that answers from a range instead of a number.

    ``le``/``ge`` act as deferred comparisons against a bound pinned
    only to lie strictly inside ``(low, high]``; undecidable ones call
    ``prober`` once and shrink the range. Batches go through
    :func:`stage_step`. Every value that passes through is appended to
    ``seen`` so the caller can audit which costs the run surfaced.
    """

    __slots__ = ("range", "prober", "seen")

    def __init__(self, rng: ThresholdRange, prober, seen=None):
        self.range = rng
        self.prober = prober
        self.seen = seen if seen is not None else []

    def batch(self, values):
        self.seen.extend(values)
        stage_step(self.range, values, self.prober)

    def le(self, value):
        self.seen.append(value)
        res, _ = if_step(self.range, value, self.prober)
        return res == Resolution.LE

    def ge(self, value):
        # "value >= bound" with the bound strictly inside the range:
        # anything at or past high clears it, anything at or under low
        # cannot, and an inside value gets settled by one probe.
        self.seen.append(value)
        if value >= self.range.high:
            return True
        if value <= self.range.low:
            return False
        if self.prober(value):
            self.range.update(high=value)
            return True
        self.range.update(low=value)
        return False


class MinmaxResult(NamedTuple):
    """Optimum bound plus the configuration and search accounting.

    ``cost`` is the smallest feasible bound (may be +inf when no finite
    bound works, e.g. capped oracles) and ``assignment`` the sink
    placement from a concrete run at exactly that bound. ``low`` is the
    final infeasible end of the search range (0 when ``cost`` is 0),
    ``probes`` the number of nested feasibility runs, and
    ``largest_below`` the biggest cost value the deferred run surfaced
    strictly under the optimum, if any.
    """

    cost: object
    assignment: SinkAssignment
    low: object
    probes: int
    search: RunStats
    final: RunStats
    probe_reach_max: int
    largest_below: object
    range_history: tuple


def solve_minmax(tree: TreeGraph, oracle: CostOracle, k: int, *,
                 continuous=False, stages=None, checked=False,
                 trace=None) -> MinmaxResult:
    """Smallest bound at which ``tree`` splits into ≤ ``k`` served blocks.

    Runs the feasibility machine once under a :class:`RangePolicy`,
    probing concrete bounds only where a comparison genuinely needs it,
    then replays concretely at the optimum for the configuration.

    Parameters mirror :func:`sinktree.bounded.solve_bounded`; ``trace``
    collects the deferred run's solver events.

    Complexity: O((k + log n) log n) feasibility probes around one
    deferred run; every run costs O(n log n) oracle work in its peeling
    sweep, memoized across probes that share a commit history.
    """
    if not isinstance(k, int) or k < 1:
        raise NonPositiveParameter(f"sink budget must be a positive integer, got {k!r}")
    if oracle.is_relaxed:
        raise RelaxedOracleRejected(
            f"{oracle.name} oracle lacks the distance-monotone axiom; "
            "only the fixed-sink solver accepts it")
    if continuous and not oracle.supports_continuous:
        raise UnsupportedContinuous(f"{oracle.name} oracle cannot price edge-point sinks")

    if stages is None:
        stages = centroid_decompose(tree)
    memo: dict = {}
    registry: dict = {}
    rng = ThresholdRange()
    counters = {"probes": 0, "reach_max": 0}
    verdicts: dict = {}

    def feas(bound) -> bool:
        known = verdicts.get(bound)
        if known is not None:
            return known
        counters["probes"] += 1
        r = threshold_run(tree, oracle, k, ConcretePolicy(bound),
                          continuous=continuous, stages=stages, memo=memo,
                          registry=registry, checked=checked)
        if r.stats.reach_queries > counters["reach_max"]:
            counters["reach_max"] = r.stats.reach_queries
        verdicts[bound] = r.feasible
        return r.feasible

    policy = RangePolicy(rng, feas)
    search = threshold_run(tree, oracle, k, policy, continuous=continuous,
                           stages=stages, memo=memo, registry=registry,
                           checked=checked, trace=trace)

    if search.feasible:
        # A deferred run that ends feasible answered every comparison
        # truthfully for bounds arbitrarily close to the low end, so
        # feasibility reaches all the way down; with the low end never
        # probed infeasible that leaves only zero.
        assert rng.low == 0, "feasible deferred run after an infeasible probe"
        best = 0
    else:
        best = rng.high

    final = threshold_run(tree, oracle, k, ConcretePolicy(best),
                          continuous=continuous, stages=stages, memo=memo,
                          registry=registry, checked=checked)
    assert final.feasible, "optimum bound failed its confirmation run"
    below = [v for v in policy.seen if v < best]
    return MinmaxResult(best, final.assignment, rng.low, counters["probes"],
                        search.stats, final.stats, counters["reach_max"],
                        max(below) if below else None, tuple(rng.history))
