"""Tree structures shared by every solver in the package.

Public API
----------
``build_tree``          validate an edge list and produce a :class:`TreeGraph`
``TreeGraph``           immutable weighted tree with dense integer vertices
``SubtreeView``         lazy view of one side of an edge, or an explicit block
``subtree_away``        the component of ``t - v`` that contains ``u``
``subdivide_edge``      split an edge at an interior point
``centroid_decompose``  stage-by-stage centroid decomposition
``path``                inclusive vertex path between two vertices
``VertexSink`` / ``EdgeSink``  sink locations (a vertex, or a point on an edge)

Vertices are re-indexed to ``0..n-1`` at construction; the original
identifiers survive in ``TreeGraph.labels`` for I/O. Everything here is
arithmetic-agnostic: weights, lengths and capacities may be ``int``,
``Fraction`` or ``float`` as long as they are mutually comparable.
"""

from __future__ import annotations

from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

from .errors import CycleOrDisconnected, NegativeWeight, NonPositiveParameter, NotAnEdge


class VertexSink(NamedTuple):
    """A sink placed on a vertex."""

    v: int


class EdgeSink(NamedTuple):
    """A sink placed on edge (u, v) at ``offset`` from u, ``0 <= offset <= tau``."""

    u: int
    v: int
    offset: object


SinkLocation = VertexSink | EdgeSink


class TreeGraph:
    """Immutable edge-weighted tree on dense integer vertices.

    Parameters are validated by :func:`build_tree`; construct through it
    rather than directly. Adjacency is stored as parallel lists so that a
    neighbor and its edge parameters come out of one index:
    ``neighbors[v][i]`` is a neighbor of ``v`` and ``nbr_tau[v][i]`` /
    ``nbr_cap[v][i]`` are the length and capacity of that edge.

    Attributes
    ----------
    n : int
        Number of vertices.
    weight : list
        Per-vertex nonnegative weight (supply, in evacuation terms).
    neighbors, nbr_tau, nbr_cap : list of lists
        Parallel adjacency arrays.
    edges : list of (u, v, tau, cap)
        Edges in input order, endpoints re-indexed.
    labels : list of str
        Original vertex identifiers, index-aligned.
    exact : bool
        True when no weight, length or capacity is a float, so exact
        arithmetic survives every downstream computation.
    """

    __slots__ = ("n", "weight", "neighbors", "nbr_tau", "nbr_cap", "edges",
                 "labels", "index_of", "exact", "_edge_params")

    def __init__(self, n, weight, neighbors, nbr_tau, nbr_cap, edges, labels, index_of):
        self.n = n
        self.weight = weight
        self.neighbors = neighbors
        self.nbr_tau = nbr_tau
        self.nbr_cap = nbr_cap
        self.edges = edges
        self.labels = labels
        self.index_of = index_of
        params = {}
        floaty = any(isinstance(w, float) for w in weight)
        for u, v, tau, cap in edges:
            params[(u, v)] = (tau, cap)
            params[(v, u)] = (tau, cap)
            if not floaty and (isinstance(tau, float) or isinstance(cap, float)):
                floaty = True
        self.exact = not floaty
        self._edge_params = params

    def adj(self, v: int) -> list[int]:
        return self.neighbors[v]

    def vertices(self) -> range:
        return range(self.n)

    def is_edge(self, u: int, v: int) -> bool:
        return (u, v) in self._edge_params

    def edge_params(self, u: int, v: int):
        """Return ``(tau, cap)`` of edge (u, v); raise :class:`NotAnEdge` otherwise."""
        try:
            return self._edge_params[(u, v)]
        except KeyError:
            raise NotAnEdge(f"({u}, {v}) is not an edge") from None

    def label(self, v: int) -> str:
        return self.labels[v]

    def __repr__(self) -> str:
        return f"TreeGraph(n={self.n})"


def build_tree(edge_list: Sequence[tuple], weights) -> TreeGraph:
    """Validate inputs and construct a :class:`TreeGraph`.

    Parameters
    ----------
    edge_list : sequence of (u, v, tau) or (u, v, tau, cap)
        Undirected edges with positive length ``tau`` and positive capacity
        ``cap`` (capacity defaults to 1 when omitted).
    weights : mapping or sequence
        Either ``{vertex_id: weight}`` over arbitrary identifiers (their
        iteration order fixes the dense re-indexing) or a plain sequence of
        weights for vertices already named ``0..n-1``.

    Returns
    -------
    TreeGraph

    Raises
    ------
    NegativeWeight, NonPositiveParameter, CycleOrDisconnected
    """
    if isinstance(weights, Mapping):
        ids = list(weights.keys())
        weight = [weights[i] for i in ids]
    else:
        weight = list(weights)
        ids = list(range(len(weight)))
    n = len(ids)
    if n == 0:
        raise CycleOrDisconnected("a tree needs at least one vertex")
    index_of = {vid: i for i, vid in enumerate(ids)}
    if len(index_of) != n:
        raise CycleOrDisconnected("duplicate vertex identifier")
    for i, w in enumerate(weight):
        if w < 0:
            raise NegativeWeight(f"vertex {ids[i]!r} has negative weight {w}")

    neighbors: list[list[int]] = [[] for _ in range(n)]
    nbr_tau: list[list] = [[] for _ in range(n)]
    nbr_cap: list[list] = [[] for _ in range(n)]
    edges = []
    seen = set()
    for e in edge_list:
        if len(e) == 3:
            uid, vid, tau = e
            cap = 1
        else:
            uid, vid, tau, cap = e
        if uid not in index_of or vid not in index_of:
            raise CycleOrDisconnected(f"edge ({uid!r}, {vid!r}) uses an unknown vertex")
        u, v = index_of[uid], index_of[vid]
        if u == v:
            raise CycleOrDisconnected(f"self-loop at {uid!r}")
        if tau <= 0 or cap <= 0:
            raise NonPositiveParameter(
                f"edge ({uid!r}, {vid!r}) needs tau > 0 and cap > 0, got tau={tau}, cap={cap}")
        key = (min(u, v), max(u, v))
        if key in seen:
            raise CycleOrDisconnected(f"duplicate edge ({uid!r}, {vid!r})")
        seen.add(key)
        neighbors[u].append(v)
        neighbors[v].append(u)
        nbr_tau[u].append(tau)
        nbr_tau[v].append(tau)
        nbr_cap[u].append(cap)
        nbr_cap[v].append(cap)
        edges.append((u, v, tau, cap))
    if len(edges) != n - 1:
        raise CycleOrDisconnected(f"{n} vertices need {n - 1} edges, got {len(edges)}")

    # Connectivity: n-1 edges + all vertices reachable means it is a tree.
    reached = bytearray(n)
    reached[0] = 1
    stack = [0]
    count = 1
    while stack:
        x = stack.pop()
        for y in neighbors[x]:
            if not reached[y]:
                reached[y] = 1
                count += 1
                stack.append(y)
    if count != n:
        raise CycleOrDisconnected("edge list is disconnected")

    labels = [str(vid) for vid in ids]
    return TreeGraph(n, weight, neighbors, nbr_tau, nbr_cap, edges,
                     labels, {str(vid): i for vid, i in index_of.items()})


class SubtreeView:
    """Lazy vertex set over a tree-like base.

    Two flavors:

    * cut view: ``V_{-v}(u)``, the component of ``base - v`` containing
      ``u``, described by the directed cut ``(u, v)`` and expanded only on
      demand (then cached);
    * explicit view: a concrete vertex collection.

    The base only needs an ``adj(v)`` method yielding neighbor indices, so
    solver working trees (with dead vertices masked out) work as bases too.
    """

    __slots__ = ("base", "cut", "_verts", "_set")

    def __init__(self, base, cut: tuple[int, int] | None = None,
                 vertices: Iterable[int] | None = None):
        if (cut is None) == (vertices is None):
            raise ValueError("exactly one of cut= or vertices= is required")
        self.base = base
        self.cut = cut
        self._verts = None if vertices is None else list(vertices)
        self._set = None

    def _expand(self) -> list[int]:
        if self._verts is None:
            u, v = self.cut
            out = [u]
            stack = [u]
            blocked = v
            base = self.base
            seen = {u, blocked}
            while stack:
                x = stack.pop()
                for y in base.adj(x):
                    if y not in seen:
                        seen.add(y)
                        out.append(y)
                        stack.append(y)
            self._verts = out
        return self._verts

    def vertices(self) -> list[int]:
        """The vertex list (expanding and caching a cut view on first use)."""
        return self._expand()

    def as_set(self) -> frozenset:
        if self._set is None:
            self._set = frozenset(self._expand())
        return self._set

    def __contains__(self, x: int) -> bool:
        return x in self.as_set()

    def __len__(self) -> int:
        return len(self._expand())

    def __iter__(self) -> Iterator[int]:
        return iter(self._expand())

    def __repr__(self) -> str:
        if self._verts is None:
            return f"SubtreeView(cut={self.cut})"
        return f"SubtreeView({len(self._verts)} vertices)"


def subtree_away(t, u: int, v: int) -> SubtreeView:
    """The component of ``t - v`` containing ``u``, as a lazy view.

    Raises :class:`NotAnEdge` unless (u, v) is an edge of ``t``.
    """
    if hasattr(t, "is_edge"):
        if not t.is_edge(u, v):
            raise NotAnEdge(f"({u}, {v}) is not an edge")
    elif v not in t.adj(u):
        raise NotAnEdge(f"({u}, {v}) is not an edge")
    return SubtreeView(t, cut=(u, v))


class CentroidStages:
    """Result of :func:`centroid_decompose`: stages ``L_1 .. L_t``.

    ``stages[i]`` lists the vertices removed at stage ``i+1``; together the
    stages partition the vertex set, and after peeling stage ``i`` every
    remaining component has at most ``n / 2**i`` vertices.
    """

    __slots__ = ("stages",)

    def __init__(self, stages: list[list[int]]):
        self.stages = stages

    def __len__(self) -> int:
        return len(self.stages)

    def __iter__(self) -> Iterator[list[int]]:
        return iter(self.stages)

    def stage_of(self) -> dict[int, int]:
        """Map vertex -> 0-based stage index."""
        out = {}
        for i, stage in enumerate(self.stages):
            for v in stage:
                out[v] = i
        return out


def _component_centroid(root: int, adj, removed: bytearray) -> tuple[int, list[int]]:
    """Centroid (lowest index on ties) and vertex list of root's component.

    Iterative: one DFS for the order, a reverse sweep for subtree sizes,
    then the classic max-piece argmin.
    """
    order = [root]
    parent = {root: -1}
    stack = [root]
    while stack:
        x = stack.pop()
        for y in adj(x):
            if not removed[y] and y != parent[x]:
                parent[y] = x
                order.append(y)
                stack.append(y)
    size = {x: 1 for x in order}
    for x in reversed(order):
        p = parent[x]
        if p != -1:
            size[p] += size[x]
    total = size[root]
    best = None
    best_piece = total + 1
    for x in order:
        # Largest piece left if x is removed: the biggest child subtree or
        # the part containing the parent.
        piece = total - size[x]
        for y in adj(x):
            if not removed[y] and y != parent[x]:
                piece = max(piece, size[y])
        if piece < best_piece or (piece == best_piece and x < best):
            best = x
            best_piece = piece
    return best, order


def centroid_decompose(t) -> CentroidStages:
    """Stage-by-stage centroid decomposition of ``t``.

    Stage 1 holds the centroid of the whole tree; removing a stage splits
    each component, and the next stage holds all their centroids. Ties
    between the two possible centroids of a component go to the lower
    vertex index.

    Complexity: O(n log n).
    """
    n = t.n
    removed = bytearray(n)
    stages: list[list[int]] = []
    roots = [0] if n else []
    while roots:
        stage = []
        next_roots = []
        for r in roots:
            c, comp = _component_centroid(r, t.adj, removed)
            stage.append(c)
        stage.sort()
        for c in stage:
            removed[c] = 1
        for r in stage:
            for y in t.adj(r):
                if not removed[y]:
                    next_roots.append(y)
        # Deduplicate roots that fell into the same component: flood each
        # candidate and skip ones already reached.
        seen_comp = set()
        uniq = []
        for r in next_roots:
            if r in seen_comp:
                continue
            uniq.append(r)
            seen_comp.add(r)
            comp_stack = [r]
            while comp_stack:
                x = comp_stack.pop()
                for y in t.adj(x):
                    if not removed[y] and y not in seen_comp:
                        seen_comp.add(y)
                        comp_stack.append(y)
        stages.append(stage)
        roots = uniq
    return CentroidStages(stages)


def subdivide_edge(t: TreeGraph, u: int, v: int, offset) -> tuple[TreeGraph, int]:
    """Insert a weightless vertex on edge (u, v) at ``offset`` from ``u``.

    Returns the new tree and the index of the inserted vertex (always
    ``t.n``). Both half-edges inherit the original capacity. ``offset``
    must lie strictly inside ``(0, tau)``; use the endpoint vertex itself
    otherwise.

    Complexity: O(n), it rebuilds the tree.
    """
    tau, cap = t.edge_params(u, v)
    if not (0 < offset < tau):
        raise NonPositiveParameter(
            f"offset must be strictly inside (0, {tau}), got {offset}")
    x = t.n
    edges = []
    for a, b, et, ec in t.edges:
        if (a, b) == (u, v) or (a, b) == (v, u):
            edges.append((u, x, offset, cap))
            edges.append((x, v, tau - offset, cap))
        else:
            edges.append((a, b, et, ec))
    return build_tree(edges, list(t.weight) + [0]), x


def path(t, u: int, v: int) -> list[int]:
    """Inclusive vertex path from ``u`` to ``v``. O(n) BFS."""
    if u == v:
        return [u]
    parent = {u: -1}
    stack = [u]
    while stack:
        x = stack.pop()
        if x == v:
            break
        for y in t.adj(x):
            if y not in parent:
                parent[y] = x
                stack.append(y)
    if v not in parent:
        raise CycleOrDisconnected(f"no path between {u} and {v}")
    out = [v]
    while out[-1] != u:
        out.append(parent[out[-1]])
    out.reverse()
    return out
