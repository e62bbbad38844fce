from __future__ import annotations

import math
import random
from fractions import Fraction

import pytest

from helpers import path_tree, random_block, random_tree
from sinktree.dynflow import (EvacuationPlan, PiecewiseLinearFn, confluent_plan,
                              evac_completion_time, pl_min_conv_rate, pl_sum,
                              simulate_evacuation)
from sinktree.errors import InvalidPlan, NonPositiveParameter, SinkNotInBlock
from sinktree.tree import build_tree


# -- piecewise-linear engine -----------------------------------------------


def test_pl_step_and_eval():
    f = PiecewiseLinearFn.step(4)
    assert f.eval(-1) == 0
    assert f.eval(0) == 4
    assert f.eval_left(0) == 0
    assert f.total == 4


def test_pl_add_ramps():
    a = PiecewiseLinearFn([(0, 0, 0), (2, 2, 2)])
    b = PiecewiseLinearFn([(1, 0, 1), (3, 3, 3)])
    s = a + b
    assert s.eval(0) == 0
    assert s.eval_left(1) == 1
    assert s.eval(1) == 2
    assert s.eval(2) == 4
    assert s.total == 5


def test_pl_min_conv_zero():
    assert pl_min_conv_rate(PiecewiseLinearFn.zero(), 1).bps == []


def test_pl_min_conv_step():
    g = pl_min_conv_rate(PiecewiseLinearFn.step(2), 1)
    # min(t, 2): ramp from 0 to 2.
    assert g.eval(0) == 0
    assert g.eval(1) == 1
    assert g.eval(2) == 2
    assert g.eval(5) == 2


def test_pl_min_conv_jump_plus_slope():
    # Jump 2 at t=0, then slope 1 on [1,3]: smoothing at rate 1 gives min(t, 4).
    f = PiecewiseLinearFn([(0, 0, 2), (1, 2, 2), (3, 4, 4)])
    g = pl_min_conv_rate(f, 1)
    for t in range(0, 7):
        assert g.eval(t) == min(t, 4)


def test_pl_min_conv_rejects_bad_rate():
    with pytest.raises(NonPositiveParameter):
        pl_min_conv_rate(PiecewiseLinearFn.step(1), 0)


def test_pl_min_conv_properties_random():
    rng = random.Random(31)
    for _ in range(200):
        bps = []
        t = 0
        val = 0
        for _ in range(rng.randint(1, 5)):
            t += Fraction(rng.randint(1, 4), rng.randint(1, 3))
            vl = val + (Fraction(rng.randint(0, 3)) if rng.random() < 0.7 else 0)
            vr = vl + (Fraction(rng.randint(0, 3)) if rng.random() < 0.5 else 0)
            bps.append((t, vl, vr))
            val = vr
        if bps and bps[0][1] != 0:
            bps[0] = (bps[0][0], 0, bps[0][2])
        f = PiecewiseLinearFn(bps)
        c = Fraction(rng.randint(1, 4), rng.randint(1, 2))
        g = pl_min_conv_rate(f, c)
        ts = sorted({t for t, _, _ in f.bps} | {t for t, _, _ in g.bps})
        samples = []
        for i, t in enumerate(ts):
            samples.append(t)
            if i + 1 < len(ts):
                samples.append(t + (ts[i + 1] - t) / 3)
        for t in samples:
            gv = g.eval(t)
            fv = f.eval(t)
            assert gv <= fv
            # Direct evaluation of the definition on breakpoint candidates.
            direct = fv
            for s, vl, vr in f.bps:
                if s <= t:
                    direct = min(direct, vl + c * (t - s), vr + c * (t - s))
            assert gv == direct
        assert g.total == f.total


def test_pl_sum_many():
    fns = [PiecewiseLinearFn.step(1, at=i) for i in range(5)]
    s = pl_sum(fns)
    assert s.total == 5
    assert s.eval(2) == 3


# -- completion-time evaluator ---------------------------------------------


def test_evac_single_edge_paper_value():
    t = build_tree([(0, 1, 3, 2)], [4, 0])
    assert evac_completion_time(t, {0, 1}, 1) == 5


def test_evac_sink_only_is_zero():
    t = build_tree([(0, 1, 3, 2)], [4, 9])
    assert evac_completion_time(t, {1}, 1) == 0


def test_evac_two_hop_congestion():
    # b's 2 units hold the (b,s) edge during [0,2]; a's units queue behind.
    t = build_tree([(0, 1, 1, 1), (1, 2, 1, 1)], [2, 2, 0])
    assert evac_completion_time(t, {0, 1, 2}, 2) == 5


def test_evac_sink_not_in_block():
    t = path_tree(3)
    with pytest.raises(SinkNotInBlock):
        evac_completion_time(t, {0, 1}, 2)


def test_evac_disconnected_block_is_inf():
    t = path_tree(3)
    assert evac_completion_time(t, {0, 2}, 2) == math.inf


def test_evac_lower_bounds_random():
    rng = random.Random(43)
    for _ in range(200):
        t = random_tree(rng, rng.randint(2, 12))
        block, s = random_block(rng, t)
        cost = evac_completion_time(t, block, s)
        # Distance lower bound for every supplied vertex.
        dist = {s: 0}
        stack = [s]
        while stack:
            x = stack.pop()
            nbrs = t.neighbors[x]
            for i, y in enumerate(nbrs):
                if y in block and y not in dist:
                    dist[y] = dist[x] + t.nbr_tau[x][i]
                    stack.append(y)
        for v in block:
            if t.weight[v] > 0:
                assert cost >= dist[v]
        # Final-edge bound when the sink has one block neighbor.
        inside = [y for y in t.adj(s) if y in block]
        supply = sum(t.weight[v] for v in block) - t.weight[s]
        if len(inside) == 1 and supply > 0:
            tau, cap = t.edge_params(s, inside[0])
            assert cost >= tau + supply / cap


def test_evac_set_monotone_random():
    rng = random.Random(47)
    for _ in range(200):
        t = random_tree(rng, rng.randint(3, 12))
        block, s = random_block(rng, t, grow=0.45)
        cost = evac_completion_time(t, block, s)
        outside = [v for v in range(t.n) if v not in block
                   and any(y in block for y in t.adj(v))]
        if not outside:
            continue
        bigger = set(block) | {rng.choice(outside)}
        assert evac_completion_time(t, bigger, s) >= cost


# -- simulator and cross-validation ----------------------------------------


def test_simulate_single_edge():
    t = build_tree([(0, 1, 1, 1)], [0, 3])
    plan = EvacuationPlan((0,), {1: 0})
    assert simulate_evacuation(t, plan) == 4  # 3 units through cap 1, plus travel


def test_simulate_two_hop():
    t = build_tree([(0, 1, 1, 1), (1, 2, 1, 1)], [2, 2, 0])
    plan = confluent_plan(t, {2: {0, 1, 2}})
    assert simulate_evacuation(t, plan) == 5


def test_simulate_no_movable_supply():
    t = build_tree([(0, 1, 1, 1)], [0, 3])
    plan = EvacuationPlan((1,), {0: 1})
    assert simulate_evacuation(t, plan) == 0


def test_invalid_plans():
    t = path_tree(3)
    with pytest.raises(InvalidPlan):
        simulate_evacuation(t, EvacuationPlan((), {}))
    with pytest.raises(InvalidPlan):
        simulate_evacuation(t, EvacuationPlan((0,), {1: 0}))  # 2 has no hop
    with pytest.raises(InvalidPlan):
        simulate_evacuation(t, EvacuationPlan((0,), {1: 0, 2: 0}))  # not an edge
    with pytest.raises(InvalidPlan):
        simulate_evacuation(t, EvacuationPlan((0,), {0: 1, 1: 0, 2: 1}))  # sink hops
    with pytest.raises(InvalidPlan):
        simulate_evacuation(t, EvacuationPlan((2,), {0: 1, 1: 0}))  # cycle


def test_engines_agree_random_exact():
    rng = random.Random(53)
    for _ in range(150):
        t = random_tree(rng, rng.randint(2, 12))
        # Random partition: pick sink per component of a random cut set.
        k = rng.randint(1, 3)
        cut = set()
        edges = list(range(len(t.edges)))
        rng.shuffle(edges)
        for i in edges[:k - 1]:
            cut.add(i)
        blocked = set()
        for i in cut:
            u, v, _, _ = t.edges[i]
            blocked.add((u, v))
            blocked.add((v, u))
        seen = set()
        partition = {}
        expected = 0
        for r in range(t.n):
            if r in seen:
                continue
            comp = {r}
            seen.add(r)
            stack = [r]
            while stack:
                x = stack.pop()
                for y in t.adj(x):
                    if y not in seen and (x, y) not in blocked:
                        seen.add(y)
                        comp.add(y)
                        stack.append(y)
            sink = rng.choice(sorted(comp))
            partition[sink] = comp
            expected = max(expected, evac_completion_time(t, comp, sink))
        got = simulate_evacuation(t, confluent_plan(t, partition))
        assert got == expected
