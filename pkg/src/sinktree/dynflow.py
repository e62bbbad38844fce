"""Dynamic confluent-flow evacuation on trees.

Public API
----------
``PiecewiseLinearFn``     cumulative-arrival functions (non-decreasing PWL)
``pl_min_conv_rate``      send a cumulative supply through a capacity-c gate
``EvacuationInstance``    a tree whose vertex weights are evacuee supplies
``EvacuationPlan``        sinks plus per-vertex next-hop assignment
``evac_completion_time``  completion time of a block confluently draining
                          into one sink (piecewise-linear composition)
``simulate_evacuation``   independent fluid event-driven simulator
``confluent_plan``        build the toward-the-sink plan of a partition

The two evaluators are deliberately independent implementations of the same
fluid model (continuous divisible flow, per-edge entry capacity, fixed
travel time) so they can cross-validate each other exactly under rational
arithmetic.

Arithmetic is generic: ``int``/``Fraction`` inputs stay exact (integer
division is promoted to ``Fraction``), ``float`` inputs stay ``float``.
"""

from __future__ import annotations

import heapq
import math
from fractions import Fraction
from typing import Iterable, NamedTuple

from .errors import InvalidPlan, NonPositiveParameter, SinkNotInBlock


def _div(a, b):
    """Exact division unless either operand is a float."""
    if isinstance(a, float) or isinstance(b, float):
        return a / b
    return Fraction(a) / Fraction(b)


class PiecewiseLinearFn:
    """Non-decreasing piecewise-linear cumulative function.

    The function is 0 before its first breakpoint, linear between
    breakpoints and constant after the last one. Each breakpoint stores the
    time, the left limit and the right value, so upward jumps are exact;
    the function itself is right-continuous.

    Breakpoints are kept canonical: strictly increasing times, no
    breakpoint that is collinear with its neighbors, first left limit 0.

    Complexity notes: ``eval`` is O(log m); ``__add__`` and
    ``min_conv_rate`` are O(m log m) in the number of breakpoints.
    """

    __slots__ = ("bps",)

    def __init__(self, bps: Iterable[tuple], canonical: bool = False):
        bps = list(bps)
        if not canonical:
            bps = _canonicalize(bps)
        if bps and bps[0][1] != 0:
            raise ValueError("cumulative function must start from 0")
        self.bps = bps

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls) -> "PiecewiseLinearFn":
        return cls([], canonical=True)

    @classmethod
    def step(cls, height, at=0) -> "PiecewiseLinearFn":
        """Jump of ``height`` at time ``at`` (a supply impulse)."""
        if height < 0:
            raise ValueError("step height must be nonnegative")
        if height == 0:
            return cls.zero()
        return cls([(at, 0, height)], canonical=True)

    # -- basic queries -----------------------------------------------------

    @property
    def total(self):
        return self.bps[-1][2] if self.bps else 0

    def eval(self, t):
        """Right-continuous value at ``t``."""
        bps = self.bps
        lo, hi = 0, len(bps)
        while lo < hi:
            mid = (lo + hi) // 2
            if bps[mid][0] <= t:
                lo = mid + 1
            else:
                hi = mid
        i = lo - 1
        if i < 0:
            return 0
        ti, _, vr = bps[i]
        if i + 1 == len(bps):
            return vr
        tn, vln, _ = bps[i + 1]
        if t == ti:
            return vr
        return vr + _div((vln - vr) * (t - ti), tn - ti)

    def eval_left(self, t):
        """Left limit at ``t``."""
        bps = self.bps
        lo, hi = 0, len(bps)
        while lo < hi:
            mid = (lo + hi) // 2
            if bps[mid][0] < t:
                lo = mid + 1
            else:
                hi = mid
        i = lo - 1
        if i < 0:
            return 0
        if lo < len(bps) and bps[lo][0] == t:
            # t is itself a breakpoint: its stored left limit.
            return bps[lo][1]
        ti, _, vr = bps[i]
        if i + 1 == len(bps):
            return vr
        tn, vln, _ = bps[i + 1]
        return vr + _div((vln - vr) * (t - ti), tn - ti)

    # -- algebra -----------------------------------------------------------

    def __add__(self, other: "PiecewiseLinearFn") -> "PiecewiseLinearFn":
        a, b = self.bps, other.bps
        if not a:
            return other
        if not b:
            return self
        la, lb = len(a), len(b)
        out = []
        i = j = 0
        while i < la or j < lb:
            if j >= lb or (i < la and a[i][0] <= b[j][0]):
                t = a[i][0]
            else:
                t = b[j][0]
            if i < la and a[i][0] == t:
                avl, avr = a[i][1], a[i][2]
                i += 1
            else:
                avl = avr = _seg_value(a, i, t)
            if j < lb and b[j][0] == t:
                bvl, bvr = b[j][1], b[j][2]
                j += 1
            else:
                bvl = bvr = _seg_value(b, j, t)
            out.append((t, avl + bvl, avr + bvr))
        # Times are strictly increasing by construction, so the full
        # sort-and-fuse pass is not needed.
        return PiecewiseLinearFn(_thin(out), canonical=True)

    def shift(self, dt) -> "PiecewiseLinearFn":
        """Delay by ``dt`` (edge travel time)."""
        if dt == 0 or not self.bps:
            return self
        return PiecewiseLinearFn([(t + dt, vl, vr) for t, vl, vr in self.bps],
                                 canonical=True)

    def min_conv_rate(self, c) -> "PiecewiseLinearFn":
        """Cumulative amount that passed a rate-``c`` gate fed by ``self``.

        E(t) = min(f(t), min over breakpoints t_j <= t of
        (left limit at t_j) + c (t - t_j)). The result is continuous,
        pointwise at most ``self`` and never climbs faster than ``c``.
        """
        if c <= 0:
            raise NonPositiveParameter(f"gate rate must be positive, got {c}")
        bps = self.bps
        if not bps:
            return self
        pts = []
        m = None  # running min of vl_j - c t_j
        k = len(bps)
        for j in range(k):
            t, vl, vr = bps[j]
            cand = vl - c * t
            if m is None or cand < m:
                m = cand
            line_t = m + c * t
            val_t = vr if vr < line_t else line_t
            pts.append((t, val_t))
            if j + 1 < k:
                nt, nvl, _ = bps[j + 1]
                d0 = vr - line_t
                d1 = nvl - (m + c * nt)
                if (d0 > 0 > d1) or (d0 < 0 < d1):
                    s = _div(nvl - vr, nt - t)
                    x = _div(vr - s * t - m, c - s)
                    if t < x < nt:
                        pts.append((x, m + c * x))
            elif val_t < vr:
                # f is flat at its total; the gate output ramps up to it.
                # Under floats the ramp end can round onto t itself.
                x = _div(vr - m, c)
                if x > t:
                    pts.append((x, vr))
        return PiecewiseLinearFn(_thin([(t, v, v) for t, v in pts]),
                                 canonical=True)

    def first_time_at_least(self, q):
        """Smallest t with f(t) >= q; +inf if q exceeds the total."""
        if q <= 0:
            return 0
        bps = self.bps
        for j, (t, vl, vr) in enumerate(bps):
            if vl >= q:
                pt, _, pvr = bps[j - 1]
                # Slope is positive here: vl > pvr since pvr < q <= vl.
                return pt + _div((q - pvr) * (t - pt), vl - pvr)
            if vr >= q:
                return t
        return math.inf

    def completion_time(self):
        """Time the last unit arrives: first time the total is reached."""
        return 0 if not self.bps else self.first_time_at_least(self.total)

    def __eq__(self, other):
        return isinstance(other, PiecewiseLinearFn) and self.bps == other.bps

    def __repr__(self):
        return f"PiecewiseLinearFn({self.bps!r})"


def _seg_value(bps: list[tuple], ix: int, t):
    """Value at ``t`` of the segment entering breakpoint ``ix``.

    ``ix`` is the first breakpoint with time >= t (possibly len(bps));
    ``t`` itself must not be a breakpoint time.
    """
    if ix == 0:
        return 0
    pt, _, pvr = bps[ix - 1]
    if ix == len(bps):
        return pvr
    nt, nvl, _ = bps[ix]
    return pvr + _div((nvl - pvr) * (t - pt), nt - pt)


_REL_SLACK = 1e-9


def _eased(v, floor):
    """Lift a float that slid below the running maximum by round-off.

    Returns the lifted value, or None when the drop is too large to be
    round-off. Exact values never qualify: any regression under exact
    arithmetic is an upstream bug and must keep raising.
    """
    if not (isinstance(v, float) or isinstance(floor, float)):
        return None
    scale = abs(floor) if abs(floor) > 1.0 else 1.0
    if floor - v > _REL_SLACK * scale:
        return None
    return floor


def _thin(bps: list[tuple]) -> list[tuple]:
    """One pass over strictly-time-increasing breakpoints: lift float
    round-off dips, drop collinear and no-op breakpoints.

    Slope comparisons cross-multiply, so exact inputs stay exact and
    the hot path spends no divisions.
    """
    out: list[tuple] = []
    run = 0
    for t, vl, vr in bps:
        if out and out[-1][0] == t:
            _, pvl, pvr = out.pop()
            vl = min(vl, pvl)
            vr = max(vr, pvr)
            run = out[-1][2] if out else 0
        if vl < run:
            lifted = _eased(vl, run)
            if lifted is None:
                raise ValueError(f"decreasing segment after t={t}")
            vl = lifted
        if vr < vl:
            lifted = _eased(vr, vl)
            if lifted is None:
                raise ValueError(f"downward jump at t={t}")
            vr = lifted
        run = vr
        while out:
            t1, vl1, vr1 = out[-1]
            if vl1 != vr1:
                break
            if len(out) >= 2:
                t0, _, vr0 = out[-2]
                if (vl1 - vr0) * (t - t1) != (vl - vr1) * (t1 - t0):
                    break
            elif vr1 != 0 or vl != 0:
                # A lone leading breakpoint stands for the jump off the
                # implicit zero level; it only vanishes when it is zero
                # itself and the segment toward us stays flat.
                break
            out.pop()
        out.append((t, vl, vr))
    return out


def _canonicalize(bps: list[tuple]) -> list[tuple]:
    """Sort, merge equal times, drop collinear breakpoints, check monotony."""
    if not bps:
        return []
    bps = sorted(bps)
    fused = []
    for t, vl, vr in bps:
        if fused and fused[-1][0] == t:
            _, pvl, pvr = fused[-1]
            fused[-1] = (t, min(pvl, vl), max(pvr, vr))
        else:
            fused.append((t, vl, vr))
    out = _thin(fused)
    if out and out[0][1] != 0:
        raise ValueError("cumulative function must start from 0")
    return out


def pl_min_conv_rate(f: PiecewiseLinearFn, c) -> PiecewiseLinearFn:
    """Functional alias for :meth:`PiecewiseLinearFn.min_conv_rate`."""
    return f.min_conv_rate(c)


def pl_sum(fns: Iterable[PiecewiseLinearFn]) -> PiecewiseLinearFn:
    """Sum several cumulative functions, merging small ones first."""
    fns = list(fns)
    if len(fns) <= 2:
        if not fns:
            return PiecewiseLinearFn.zero()
        return fns[0] if len(fns) == 1 else fns[0] + fns[1]
    heap = [(len(f.bps), i, f) for i, f in enumerate(fns)]
    heapq.heapify(heap)
    serial = len(heap)
    while len(heap) > 1:
        _, _, a = heapq.heappop(heap)
        _, _, b = heapq.heappop(heap)
        s = a + b
        heapq.heappush(heap, (len(s.bps), serial, s))
        serial += 1
    return heap[0][2]


# -- evacuation instances and plans ---------------------------------------


class EvacuationInstance:
    """A tree whose vertex weights are evacuee supplies."""

    __slots__ = ("tree",)

    def __init__(self, tree):
        self.tree = tree


class EvacuationPlan(NamedTuple):
    """Sinks plus the evacuation edge of every non-sink vertex.

    ``next_hop[v]`` is the neighbor all of v's throughput leaves toward;
    sinks must not appear in ``next_hop``. The hops must form an in-forest
    directed into the sinks.
    """

    sinks: tuple[int, ...]
    next_hop: dict


def _tree_of(inst):
    return inst.tree if isinstance(inst, EvacuationInstance) else inst


def confluent_plan(tree, partition: dict) -> EvacuationPlan:
    """Plan that drains each block of ``partition`` toward its own sink."""
    next_hop = {}
    for sink, block in partition.items():
        members = set(block)
        order, parent = _orient(tree, sink, members)
        for v in order:
            if v != sink:
                next_hop[v] = parent[v]
    return EvacuationPlan(tuple(sorted(partition.keys())), next_hop)


def _orient(tree, sink: int, members: set) -> tuple[list[int], dict]:
    """DFS order and parent map of ``members`` hanging from ``sink``."""
    parent = {sink: -1}
    order = [sink]
    stack = [sink]
    while stack:
        x = stack.pop()
        for y in tree.adj(x):
            if y in members and y not in parent:
                parent[y] = x
                order.append(y)
                stack.append(y)
    return order, parent


def evac_completion_time(inst, block, sink: int):
    """Completion time of ``block`` draining confluently into ``sink``.

    Every vertex sends its whole supply toward the sink; flows merge on the
    way and each edge admits at most its capacity per time unit, so supply
    queues at the entrance of saturated edges. The cumulative arrival at
    the sink is composed bottom-up with :class:`PiecewiseLinearFn`.

    Parameters
    ----------
    inst : TreeGraph or EvacuationInstance
    block : iterable of vertices
        Must induce a connected subtree; if it does not, the result is
        ``+inf`` (an unservable set, matching the oracle convention).
    sink : int
        Must belong to the block, else :class:`SinkNotInBlock`.

    Complexity: O(B log B) breakpoint work for a block of size B.
    """
    tree = _tree_of(inst)
    members = block if isinstance(block, (set, frozenset)) else set(block)
    if sink not in members:
        raise SinkNotInBlock(f"sink {sink} not in block")
    order, parent = _orient(tree, sink, members)
    if len(order) != len(members):
        return math.inf
    if not tree.exact:
        return _evac_completion_float(tree, order, parent, sink)
    arrivals: dict[int, list[PiecewiseLinearFn]] = {v: [] for v in order}
    weight = tree.weight
    for v in reversed(order):
        if v == sink:
            continue
        fns = arrivals.pop(v)
        w = weight[v]
        if w != 0:
            fns.append(PiecewiseLinearFn.step(w))
        avail = pl_sum(fns)
        p = parent[v]
        i = tree.neighbors[v].index(p)
        tau = tree.nbr_tau[v][i]
        cap = tree.nbr_cap[v][i]
        if avail.bps:
            arrivals[p].append(avail.min_conv_rate(cap).shift(tau))
    at_sink = pl_sum(arrivals[sink])
    return at_sink.completion_time()


# -- float fast path --------------------------------------------------------
#
# Instances with any float parameter lose exactness anyway, so their
# gated arrival curves are held as plain lists of (time, cumulative)
# floats instead of PiecewiseLinearFn objects. Every such curve is
# continuous: a vertex's own supply never becomes a step breakpoint, it
# enters the gate scan as an initial queue. That keeps the per-operation
# cost at a few arithmetic instructions per breakpoint, which is what the
# large-instance solve budget needs. The exact and float routes are
# cross-checked against each other in the test suite.


def _f_app(out: list, t: float, v: float) -> None:
    """Append breakpoint (t, v), fusing collinear and equal-time points."""
    if out:
        t1, v1 = out[-1]
        if t <= t1:
            if v > v1:
                out[-1] = (t1, v)
            return
        if len(out) >= 2:
            t0, v0 = out[-2]
            if (v1 - v0) * (t - t1) == (v - v1) * (t1 - t0):
                out[-1] = (t, v)
                return
    out.append((t, v))


def _f_add(a: list, b: list) -> list:
    """Pointwise sum of two breakpoint lists.

    Both inputs start at value 0 and are flat after their last point, so
    the sum is a plain two-pointer merge with segment interpolation.
    """
    out: list[tuple[float, float]] = []
    ia = ib = 0
    na, nb = len(a), len(b)
    t0a = v0a = ma = 0.0
    t0b = v0b = mb = 0.0
    while ia < na or ib < nb:
        ta = a[ia][0] if ia < na else math.inf
        tb = b[ib][0] if ib < nb else math.inf
        t = ta if ta <= tb else tb
        if ta == t:
            va = a[ia][1]
            if ia + 1 < na:
                nt, nv = a[ia + 1]
                ma = (nv - va) / (nt - ta)
            else:
                ma = 0.0
            t0a, v0a = ta, va
            ia += 1
        else:
            va = v0a + ma * (t - t0a)
        if tb == t:
            vb = b[ib][1]
            if ib + 1 < nb:
                nt, nv = b[ib + 1]
                mb = (nv - vb) / (nt - tb)
            else:
                mb = 0.0
            t0b, v0b = tb, vb
            ib += 1
        else:
            vb = v0b + mb * (t - t0b)
        _f_app(out, t, va + vb)
    return out


def _f_sum(fns: list) -> list:
    """Sum many breakpoint lists, merging the smallest pair first."""
    live = [f for f in fns if f]
    if not live:
        return []
    if len(live) == 1:
        return live[0]
    heap = [(len(f), i, f) for i, f in enumerate(live)]
    heapq.heapify(heap)
    serial = len(heap)
    while len(heap) > 1:
        _, _, x = heapq.heappop(heap)
        _, _, y = heapq.heappop(heap)
        s = _f_add(x, y)
        heapq.heappush(heap, (len(s), serial, s))
        serial += 1
    return heap[0][2]


def _f_gate(pts: list, w: float, cap: float, tau: float) -> list:
    """Drain ``pts`` plus an initial queue of ``w`` through a rate gate.

    Returns the cumulative mass conveyed past the gate as a breakpoint
    list, with every time already shifted ``tau`` later. The gate is
    greedy: whenever mass waits it runs at full rate ``cap``, so the
    output either follows the inflow (queue empty, inflow under the cap)
    or climbs at exactly ``cap``. The invariant q = inflow(t) + w - out(t)
    tracks the waiting mass; crossings where the queue empties inside a
    segment get their own breakpoint.
    """
    out: list[tuple[float, float]] = []
    base = float(w)
    g = 0.0
    q = base
    pt = pv = 0.0
    for nt, nv in pts:
        dt = nt - pt
        if dt <= 0.0:
            q += nv - pv
            pt, pv = nt, nv
            continue
        if q > 0.0 or nv > pv:
            # The output climbs over this segment; anchor the climb if
            # the gate sat idle since the last emitted point.
            if not out:
                out.append((pt + tau, 0.0))
            else:
                lt, lv = out[-1]
                if lt < pt + tau:
                    out.append((pt + tau, lv))
        m = (nv - pv) / dt
        if q > 0.0:
            gap = cap - m
            x = q / gap if gap > 0.0 else dt
            if 0.0 < x < dt:
                g += cap * x
                _f_app(out, pt + x + tau, g)
                q = 0.0
                g = nv + base
                _f_app(out, nt + tau, g)
            else:
                g += cap * dt
                q += (nv - pv) - cap * dt
                if q < 0.0:
                    q = 0.0
                _f_app(out, nt + tau, g)
        elif m > cap:
            g += cap * dt
            q = (nv + base) - g
            _f_app(out, nt + tau, g)
        elif nv > pv:
            g = nv + base
            _f_app(out, nt + tau, g)
        pt, pv = nt, nv
    if q > 0.0:
        if not out:
            out.append((pt + tau, 0.0))
        _f_app(out, pt + q / cap + tau, g + q)
    return out


def _evac_completion_float(tree, order, parent, sink: int) -> float:
    """Scan-based float twin of the exact bottom-up composition.

    Mirrors the PiecewiseLinearFn route gate for gate. Every gated
    arrival ends the moment it reaches its own total (its final segment
    always climbs), so the completion time at the sink is simply the
    latest final breakpoint among the arrivals that reach it.
    """
    arrivals: dict[int, list[list]] = {v: [] for v in order}
    weight = tree.weight
    for v in reversed(order):
        if v == sink:
            continue
        avail = _f_sum(arrivals.pop(v))
        w = float(weight[v])
        if w > 0.0 or avail:
            p = parent[v]
            i = tree.neighbors[v].index(p)
            tau = float(tree.nbr_tau[v][i])
            cap = float(tree.nbr_cap[v][i])
            arrivals[p].append(_f_gate(avail, w, cap, tau))
    best = 0.0
    for arr in arrivals[sink]:
        if arr and arr[-1][0] > best:
            best = arr[-1][0]
    return best


# -- independent fluid simulator -------------------------------------------


def _validate_plan(tree, plan: EvacuationPlan):
    sinks = set(plan.sinks)
    if len(sinks) != len(plan.sinks) or not sinks:
        raise InvalidPlan("sinks must be nonempty and distinct")
    for s in sinks:
        if not (0 <= s < tree.n):
            raise InvalidPlan(f"sink {s} out of range")
        if s in plan.next_hop:
            raise InvalidPlan(f"sink {s} must not have a next hop")
    state = {}  # 0 in progress, 1 reaches a sink
    for v in range(tree.n):
        if v in sinks:
            continue
        if v not in plan.next_hop:
            raise InvalidPlan(f"vertex {v} has no next hop")
        if plan.next_hop[v] not in tree.adj(v):
            raise InvalidPlan(f"hop {v}->{plan.next_hop[v]} is not an edge")
    for v in range(tree.n):
        chain = []
        x = v
        while x not in sinks and state.get(x) is None:
            state[x] = 0
            chain.append(x)
            x = plan.next_hop[x]
        if state.get(x) == 0:
            raise InvalidPlan("next hops form a cycle")
        for y in chain:
            state[y] = 1


def simulate_evacuation(inst, plan: EvacuationPlan):
    """Fluid event-driven simulation of ``plan``; returns completion time.

    Independent of the piecewise-linear algebra: it advances piecewise
    constant flow rates between events (buffer depletions and delayed rate
    changes) and reports the last instant any sink still receives flow.
    Intended as ground truth on small instances.
    """
    tree = _tree_of(inst)
    _validate_plan(tree, plan)
    sinks = set(plan.sinks)
    nxt = plan.next_hop

    out_tau = {}
    out_cap = {}
    for v, p in nxt.items():
        i = tree.neighbors[v].index(p)
        out_tau[v] = tree.nbr_tau[v][i]
        out_cap[v] = tree.nbr_cap[v][i]

    inflow = {v: 0 for v in range(tree.n)}
    buffer = {v: tree.weight[v] for v in range(tree.n) if v not in sinks}
    last_t = {v: 0 for v in buffer}
    admitted = {v: 0 for v in buffer}
    gen = {v: 0 for v in buffer}

    heap: list = []
    seq = 0

    def push(t, kind, v, payload):
        nonlocal seq
        heapq.heappush(heap, (t, seq, kind, v, payload))
        seq += 1

    def refresh(v, t):
        """Re-derive v's admitted rate after its state changed at time t."""
        gen[v] += 1
        cap = out_cap[v]
        new_adm = cap if buffer[v] > 0 else min(cap, inflow[v])
        if new_adm != admitted[v]:
            delta = new_adm - admitted[v]
            admitted[v] = new_adm
            push(t + out_tau[v], "dr", nxt[v], delta)
        if buffer[v] > 0 and admitted[v] > inflow[v]:
            t_empty = t + _div(buffer[v], admitted[v] - inflow[v])
            push(t_empty, "empty", v, gen[v])

    def advance(v, t):
        buffer[v] += (inflow[v] - admitted[v]) * (t - last_t[v])
        if buffer[v] < 0:
            buffer[v] = 0  # float round-off guard; exact mode lands on 0
        last_t[v] = t

    completion = 0
    for v in list(buffer):
        if buffer[v] > 0:
            refresh(v, 0)

    while heap:
        t = heap[0][0]
        batch = []
        while heap and heap[0][0] == t:
            batch.append(heapq.heappop(heap))
        touched = set()
        sink_was_positive = {s for s in sinks if inflow[s] > 0}
        for _, _, kind, v, payload in batch:
            if kind == "dr":
                if v in buffer:
                    if v not in touched:
                        advance(v, t)
                        touched.add(v)
                    inflow[v] += payload
                else:
                    inflow[v] += payload
                    touched.add(v)
            else:  # empty
                if payload != gen[v]:
                    continue
                advance(v, t)
                buffer[v] = 0
                touched.add(v)
        for v in touched:
            if v in buffer:
                refresh(v, t)
            elif v in sink_was_positive and inflow[v] <= 0:
                completion = max(completion, t)
    return completion
