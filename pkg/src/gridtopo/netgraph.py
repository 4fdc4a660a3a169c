"""Graph representation, Laplacian algebra and the graph algorithms feeding
variable-bound computation: spanning trees, shortest paths, and min-cut based
critical-edge enumeration.

All operations are pure functions of immutable inputs; buses are integer ids
``0..n-1`` and edges are unordered pairs with positive weights. Dense numpy
matrices are used throughout (desk scale, a few hundred buses at most).
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .network import Line


class GraphError(ValueError):
    """Raised on structurally invalid graph inputs (disconnected, not a tree, ...)."""


# ---------------------------------------------------------------------------
# Laplacians and incidence
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LaplacianMatrix:
    """Susceptance Laplacian of a selected line set.

    ``full`` is the (N+1)x(N+1) matrix with zero row sums; ``reduced`` drops
    the reference row and column and is positive definite exactly when the
    selected lines connect the graph.
    """

    full: np.ndarray
    reduced: np.ndarray
    reference: int

    @property
    def reduced_index(self) -> list[int]:
        """Bus ids, in order, of the rows/columns of ``reduced``."""
        n = self.full.shape[0]
        return [i for i in range(n) if i != self.reference]


def build_laplacian(lines: Sequence[Line], n_buses: int, reference: int) -> LaplacianMatrix:
    """Assemble the susceptance Laplacian of ``lines`` (full and reduced form).

    Accumulates per line in input order so the result is bitwise identical to
    a rank-one incidence assembly done in the same order.
    """
    if not 0 <= reference < n_buses:
        raise GraphError(f"reference bus {reference} out of range")
    full = np.zeros((n_buses, n_buses))
    for l in lines:
        i, j, b = l.from_bus, l.to_bus, l.susceptance
        full[i, i] += b
        full[j, j] += b
        full[i, j] -= b
        full[j, i] -= b
    keep = [i for i in range(n_buses) if i != reference]
    reduced = full[np.ix_(keep, keep)].copy()
    return LaplacianMatrix(full=full, reduced=reduced, reference=reference)


def reduced_incidence(lines: Sequence[Line], n_buses: int, reference: int) -> np.ndarray:
    """Signed incidence vectors with the reference entry dropped.

    Row ``m`` is the reduced vector for ``lines[m]``: +1 at the from-bus, -1
    at the to-bus, with the reference component removed (edges touching the
    reference keep a single nonzero).
    """
    keep = {b: k for k, b in enumerate(i for i in range(n_buses) if i != reference)}
    a = np.zeros((len(lines), n_buses - 1))
    for m, l in enumerate(lines):
        if l.from_bus in keep:
            a[m, keep[l.from_bus]] = 1.0
        if l.to_bus in keep:
            a[m, keep[l.to_bus]] = -1.0
    return a


def assemble_reduced_laplacian(
    lines: Sequence[Line], z: Sequence[float], n_buses: int, reference: int
) -> np.ndarray:
    """Sum of ``z_m * b_m * a_m a_m^T`` over the reduced incidence vectors.

    Accumulated in line order; for binary ``z`` this reproduces
    ``build_laplacian`` of the selected lines element-wise exactly.
    """
    a = reduced_incidence(lines, n_buses, reference)
    out = np.zeros((n_buses - 1, n_buses - 1))
    for m, l in enumerate(lines):
        if z[m] != 0.0:
            out += (z[m] * l.susceptance) * np.outer(a[m], a[m])
    return out


# ---------------------------------------------------------------------------
# Connectivity
# ---------------------------------------------------------------------------


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, x: int, y: int) -> bool:
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return False
        self.parent[ry] = rx
        return True


def is_connected(lines: Sequence[Line], n_buses: int) -> bool:
    """True iff every bus lies in a single component of the selected lines."""
    if n_buses <= 1:
        return True
    uf = _UnionFind(n_buses)
    comps = n_buses
    for l in lines:
        if uf.union(l.from_bus, l.to_bus):
            comps -= 1
    return comps == 1


def pairs_connected(pairs: Sequence[tuple[int, int]], n_buses: int) -> bool:
    """Connectivity over bare (i, j) pairs."""
    if n_buses <= 1:
        return True
    uf = _UnionFind(n_buses)
    comps = n_buses
    for i, j in pairs:
        if uf.union(i, j):
            comps -= 1
    return comps == 1


# ---------------------------------------------------------------------------
# Inverse-weight graph and its tree/path constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InverseWeightGraph:
    """Candidate graph with edge weights ``x = 1/b`` (reactance-like)."""

    n_buses: int
    edges: tuple[tuple[int, int], ...]
    weights: tuple[float, ...]

    @classmethod
    def from_lines(cls, lines: Sequence[Line], n_buses: int) -> "InverseWeightGraph":
        return cls(
            n_buses=n_buses,
            edges=tuple(l.pair for l in lines),
            weights=tuple(1.0 / l.susceptance for l in lines),
        )

    def adjacency(self) -> list[list[tuple[int, int]]]:
        """Per-bus list of (neighbor, edge index)."""
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.n_buses)]
        for m, (i, j) in enumerate(self.edges):
            adj[i].append((j, m))
            adj[j].append((i, m))
        return adj


def max_spanning_tree_weight(g: InverseWeightGraph) -> float:
    """Total weight of a maximum-weight spanning tree of ``g``.

    Kruskal on negated weights; ties broken by lowest edge index so the
    selected tree is deterministic.
    """
    if not pairs_connected(g.edges, g.n_buses):
        raise GraphError("graph not connected")
    order = sorted(range(len(g.edges)), key=lambda m: (-g.weights[m], m))
    uf = _UnionFind(g.n_buses)
    total = 0.0
    taken = 0
    for m in order:
        i, j = g.edges[m]
        if uf.union(i, j):
            total += g.weights[m]
            taken += 1
            if taken == g.n_buses - 1:
                break
    return total


def shortest_path_weights(g: InverseWeightGraph, reference: int) -> dict[int, float]:
    """Minimum path weight from every non-reference bus to the reference.

    Dijkstra with (distance, edge index) keys for deterministic tie handling.
    """
    adj = g.adjacency()
    dist = {reference: 0.0}
    heap: list[tuple[float, int, int]] = [(0.0, -1, reference)]
    done: set[int] = set()
    while heap:
        d, _, v = heapq.heappop(heap)
        if v in done:
            continue
        done.add(v)
        for w, m in adj[v]:
            nd = d + g.weights[m]
            if w not in dist or nd < dist[w]:
                dist[w] = nd
                heapq.heappush(heap, (nd, m, w))
    missing = [v for v in range(g.n_buses) if v not in dist]
    if missing:
        raise GraphError(f"graph not connected: buses {missing} unreachable from {reference}")
    return {v: dist[v] for v in range(g.n_buses) if v != reference}


# ---------------------------------------------------------------------------
# Bridges: classical oracle and min-cut based enumeration
# ---------------------------------------------------------------------------


def bridges_oracle(g: InverseWeightGraph) -> set[tuple[int, int]]:
    """All bridges of ``g`` by iterative DFS low-link (independent of max-flow)."""
    adj = g.adjacency()
    n = g.n_buses
    pre = [-1] * n
    low = [0] * n
    bridges: set[tuple[int, int]] = set()
    counter = 0
    for root in range(n):
        if pre[root] != -1:
            continue
        # stack entries: (vertex, incoming edge index, adjacency cursor)
        stack = [(root, -1, 0)]
        pre[root] = low[root] = counter
        counter += 1
        while stack:
            v, in_edge, cursor = stack.pop()
            if cursor < len(adj[v]):
                stack.append((v, in_edge, cursor + 1))
                w, m = adj[v][cursor]
                if m == in_edge:
                    continue
                if pre[w] == -1:
                    pre[w] = low[w] = counter
                    counter += 1
                    stack.append((w, m, 0))
                else:
                    low[v] = min(low[v], pre[w])
            else:
                if in_edge != -1:
                    parent = stack[-1][0]
                    low[parent] = min(low[parent], low[v])
                    if low[v] > pre[parent]:
                        bridges.add(g.edges[in_edge])
    return bridges


def _max_flow(
    n: int, arcs: list[list[float]], adj: list[list[int]], heads: list[int], s: int, t: int
) -> tuple[float, set[int]]:
    """Edmonds-Karp on a prebuilt arc structure; returns (value, source side)."""
    # arcs[k] = [capacity remaining]; arc k^1 is the reverse of arc k
    cap = arcs
    total = 0.0
    while True:
        parent_arc = [-1] * n
        parent_arc[s] = -2
        queue = deque([s])
        while queue and parent_arc[t] == -1:
            v = queue.popleft()
            for k in adj[v]:
                w = heads[k]
                if parent_arc[w] == -1 and cap[k][0] > 1e-12:
                    parent_arc[w] = k
                    queue.append(w)
        if parent_arc[t] == -1:
            side = {v for v in range(n) if parent_arc[v] != -1}
            return total, side
        # trace the path, find bottleneck
        bottleneck = float("inf")
        v = t
        while v != s:
            k = parent_arc[v]
            bottleneck = min(bottleneck, cap[k][0])
            v = heads[k ^ 1]
        v = t
        while v != s:
            k = parent_arc[v]
            cap[k][0] -= bottleneck
            cap[k ^ 1][0] += bottleneck
            v = heads[k ^ 1]
        total += bottleneck


def global_min_cut(
    g: InverseWeightGraph, weights: Sequence[float]
) -> tuple[float, list[int]]:
    """Global minimum cut of the undirected graph under the given edge weights.

    Standard max-flow/min-cut sweep: fix s = 0 and minimize over all other
    sinks, scanning sinks in ascending order so ties are deterministic.
    Returns (cut value, cut edge indices).
    """
    n = g.n_buses
    best_value = float("inf")
    best_side: set[int] = set()
    for t in range(1, n):
        heads: list[int] = []
        arcs: list[list[float]] = []
        adj: list[list[int]] = [[] for _ in range(n)]
        for m, (i, j) in enumerate(g.edges):
            for a, b in ((i, j), (j, i)):
                adj[a].append(len(heads))
                heads.append(b)
                arcs.append([weights[m]])
        value, side = _max_flow(n, arcs, adj, heads, 0, t)
        if value < best_value - 1e-12:
            best_value = value
            best_side = side
    cut = [
        m
        for m, (i, j) in enumerate(g.edges)
        if (i in best_side) != (j in best_side)
    ]
    return best_value, cut


@dataclass(frozen=True)
class CutsetReport:
    """Size-1 and size-2 cutsets of the candidate graph.

    ``critical_edges`` are the bridges; ``splits`` maps each critical edge
    (i, j) to the two components (side containing i, side containing j) left
    by its removal. ``pair_cutsets`` lists every unordered pair whose joint
    removal disconnects the graph and that contains no critical edge.
    """

    critical_edges: tuple[tuple[int, int], ...]
    splits: dict[tuple[int, int], tuple[frozenset[int], frozenset[int]]] = field(repr=False)
    pair_cutsets: tuple[frozenset[tuple[int, int]], ...] = ()


def _component_of(start: int, skip: set[int], g: InverseWeightGraph) -> frozenset[int]:
    adj = g.adjacency()
    seen = {start}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w, m in adj[v]:
            if m in skip or w in seen:
                continue
            seen.add(w)
            queue.append(w)
    return frozenset(seen)


def _mincut_bridges(g: InverseWeightGraph, epsilon: float = 0.5) -> list[int]:
    """All single critical edges via the iterated min-cut sweep.

    Edge weights start at one; each critical edge found is raised to
    ``1 + epsilon`` and the sweep repeats. The loop stops once the global
    min-cut value shows no fresh unit bridge remains (value above 1).
    """
    weights = [1.0] * len(g.edges)
    critical: list[int] = []
    while True:
        value, cut = global_min_cut(g, weights)
        if value > 1.0 + epsilon / 2.0:
            return critical
        # value <= 1 + eps/2 can only be a single still-unit edge
        fresh = [m for m in cut if weights[m] == 1.0]
        m = fresh[0]
        critical.append(m)
        weights[m] = 1.0 + epsilon


def enumerate_critical_edges(g: InverseWeightGraph, epsilon: float = 0.5) -> CutsetReport:
    """Critical edges (size-1 cutsets) and size-2 cutsets of ``g``.

    Bridges come from the iterated unit-weight min-cut sweep. Size-2 cutsets
    are enumerated completely by running the same sweep on each single-edge-
    deleted graph: the pairs through edge ``e`` are exactly the bridges of
    ``g - e``. Pairs containing a critical edge are excluded.
    """
    if not pairs_connected(g.edges, g.n_buses):
        raise GraphError("graph not connected")
    critical_idx = _mincut_bridges(g, epsilon)
    critical = tuple(sorted(g.edges[m] for m in critical_idx))
    critical_set = set(critical)

    splits = {}
    for m in critical_idx:
        i, j = g.edges[m]
        side_i = _component_of(i, {m}, g)
        side_j = _component_of(j, {m}, g)
        splits[g.edges[m]] = (side_i, side_j)

    pairs: set[frozenset[tuple[int, int]]] = set()
    for m, e in enumerate(g.edges):
        if e in critical_set:
            continue
        sub_edges = tuple(f for k, f in enumerate(g.edges) if k != m)
        sub = InverseWeightGraph(g.n_buses, sub_edges, (1.0,) * len(sub_edges))
        for partner_idx in _mincut_bridges(sub, epsilon):
            partner = sub_edges[partner_idx]
            if partner not in critical_set:
                pairs.add(frozenset((e, partner)))
    return CutsetReport(
        critical_edges=critical,
        splits=splits,
        pair_cutsets=tuple(sorted(pairs, key=lambda p: tuple(sorted(p)))),
    )


# ---------------------------------------------------------------------------
# Radial (tree) inverse via shared reference paths
# ---------------------------------------------------------------------------


def radial_inverse_by_paths(
    lines: Sequence[Line], n_buses: int, reference: int
) -> np.ndarray:
    """Dense inverse of a spanning tree's reduced Laplacian, built from paths.

    Entry (i, j) equals the summed inverse susceptances shared by the two
    buses' paths to the reference, i.e. the weighted depth of their lowest
    common ancestor with the tree rooted at the reference.
    """
    if len(lines) != n_buses - 1 or not is_connected(lines, n_buses):
        raise GraphError("not radial: line set is not a spanning tree")
    g = InverseWeightGraph.from_lines(lines, n_buses)
    adj = g.adjacency()
    parent = [-1] * n_buses
    depth_x = [0.0] * n_buses  # summed x-weight from the reference
    hops = [0] * n_buses
    order = deque([reference])
    seen = {reference}
    while order:
        v = order.popleft()
        for w, m in adj[v]:
            if w in seen:
                continue
            seen.add(w)
            parent[w] = v
            depth_x[w] = depth_x[v] + g.weights[m]
            hops[w] = hops[v] + 1
            order.append(w)

    def lca_depth(i: int, j: int) -> float:
        while i != j:
            if hops[i] < hops[j]:
                i, j = j, i
            i = parent[i]
        return depth_x[i]

    others = [i for i in range(n_buses) if i != reference]
    x = np.zeros((n_buses - 1, n_buses - 1))
    for a, i in enumerate(others):
        for b, j in enumerate(others[a:], start=a):
            x[a, b] = x[b, a] = lca_depth(i, j)
    return x
