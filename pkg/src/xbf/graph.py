"""Directed network graphs and their link-adjacency (connectivity) graphs.

Nodes are dense integer ids ``0..n-1``; links are dense integer ids into
``NetworkGraph.links``.  Everything here is immutable once built.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Hashable, Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order

log = logging.getLogger(__name__)


class GraphError(ValueError):
    """Raised for malformed graph input."""


class UnpartitionableError(ValueError):
    """A merged vertex cannot fit inside a single partition."""


@dataclass(frozen=True)
class DirectedLink:
    src: int
    dst: int
    traffic: float = 1.0


@dataclass(frozen=True, eq=False)
class NetworkGraph:
    """A simple directed graph of switches and unidirectional links.

    ``out_links[v]`` is sorted by destination id, which fixes the BFS
    tie-breaking used throughout the simulator.
    """

    labels: tuple[Hashable, ...]
    links: tuple[DirectedLink, ...]
    dropped_nodes: int = 0
    dropped_links: int = 0
    out_links: tuple[tuple[int, ...], ...] = field(init=False, repr=False)
    in_links: tuple[tuple[int, ...], ...] = field(init=False, repr=False)
    _index: dict[tuple[int, int], int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        n = len(self.labels)
        outs: list[list[int]] = [[] for _ in range(n)]
        ins: list[list[int]] = [[] for _ in range(n)]
        index: dict[tuple[int, int], int] = {}
        for i, link in enumerate(self.links):
            if link.src == link.dst:
                raise GraphError(f"self-loop on node {link.src}")
            if (link.src, link.dst) in index:
                raise GraphError(f"duplicate link {link.src}->{link.dst}")
            index[(link.src, link.dst)] = i
            outs[link.src].append(i)
            ins[link.dst].append(i)
        for lst in outs:
            lst.sort(key=lambda e: self.links[e].dst)
        for lst in ins:
            lst.sort(key=lambda e: self.links[e].src)
        object.__setattr__(self, "out_links", tuple(map(tuple, outs)))
        object.__setattr__(self, "in_links", tuple(map(tuple, ins)))
        object.__setattr__(self, "_index", index)

    @property
    def n_nodes(self) -> int:
        return len(self.labels)

    @property
    def n_links(self) -> int:
        return len(self.links)

    def link_id(self, src: int, dst: int) -> int | None:
        return self._index.get((src, dst))

    def reverse(self, link: int) -> int | None:
        """Index of the opposite-direction link, if the graph has one."""
        e = self.links[link]
        return self._index.get((e.dst, e.src))

    def endpoints(self, link: int) -> tuple[int, int]:
        e = self.links[link]
        return e.src, e.dst

    def traffic(self) -> list[float]:
        return [e.traffic for e in self.links]

    def with_traffic(self, weights: Sequence[float]) -> NetworkGraph:
        if len(weights) != self.n_links:
            raise GraphError("weights must cover every link")
        links = tuple(DirectedLink(e.src, e.dst, float(w)) for e, w in zip(self.links, weights))
        return NetworkGraph(self.labels, links, self.dropped_nodes, self.dropped_links)

    def incident_links(self, node: int) -> tuple[int, ...]:
        return self.out_links[node] + self.in_links[node]

    def successors(self, node: int) -> list[int]:
        return [self.links[e].dst for e in self.out_links[node]]

    def edge_list(self) -> list[tuple[Hashable, Hashable, float]]:
        return [(self.labels[e.src], self.labels[e.dst], e.traffic) for e in self.links]

    @cached_property
    def _csr(self) -> csr_matrix:
        n = self.n_nodes
        rows, cols = [], []
        for v in range(n):
            for e in self.out_links[v]:
                rows.append(v)
                cols.append(self.links[e].dst)
        data = np.ones(len(rows), dtype=np.int8)
        mat = csr_matrix((data, (rows, cols)), shape=(n, n))
        mat.sort_indices()
        return mat

    def bfs_parents(self, source: int) -> np.ndarray:
        """BFS predecessor array from ``source`` (-1 for source/unreachable).

        Neighbours are explored in ascending node id, so a node's parent is
        its first discoverer in that order.
        """
        _, pred = breadth_first_order(self._csr, source, directed=True, return_predecessors=True)
        pred = pred.astype(np.int64)
        pred[pred < 0] = -1
        return pred

    def bfs_distances(self, source: int) -> list[int]:
        dist = [-1] * self.n_nodes
        dist[source] = 0
        queue = deque([source])
        while queue:
            v = queue.popleft()
            for e in self.out_links[v]:
                w = self.links[e].dst
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
        return dist

    @cached_property
    def diameter(self) -> int:
        """Longest finite shortest-path hop count."""
        from scipy.sparse.csgraph import shortest_path

        if self.n_nodes <= 1:
            return 0
        dist = shortest_path(self._csr, method="D", directed=True, unweighted=True)
        finite = dist[np.isfinite(dist)]
        return int(finite.max())


def _largest_weak_component(n: int, pairs: Iterable[tuple[int, int]]) -> list[int]:
    parent = list(range(n))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    sizes: dict[int, int] = {}
    for v in range(n):
        r = find(v)
        sizes[r] = sizes.get(r, 0) + 1
    # ties go to the component whose first node appeared earliest
    best = min(sizes, key=lambda r: (-sizes[r], r))
    return [v for v in range(n) if find(v) == best]


def build_network_graph(
    edges: Iterable[tuple[Hashable, Hashable, float]] | Iterable[tuple[Hashable, Hashable]],
    symmetrize: bool = False,
    nodes: Iterable[Hashable] = (),
) -> NetworkGraph:
    """Build a graph from ``(src, dst[, traffic])`` tuples.

    Node ids are assigned in first-appearance order (``nodes`` are
    registered first), parallel links are merged with their traffic summed,
    and only the largest weakly connected component is kept.
    """
    ids: dict[Hashable, int] = {}
    labels: list[Hashable] = []
    for node in nodes:
        if node not in ids:
            ids[node] = len(labels)
            labels.append(node)
    traffic: dict[tuple[int, int], float] = {}
    for i, item in enumerate(edges):
        src, dst = item[0], item[1]
        tau = float(item[2]) if len(item) > 2 else 1.0
        if src == dst:
            raise GraphError(f"self-loop at edge-list index {i}: {src!r}")
        if tau < 0:
            raise GraphError(f"negative traffic at edge-list index {i}")
        for node in (src, dst):
            if node not in ids:
                ids[node] = len(labels)
                labels.append(node)
        key = (ids[src], ids[dst])
        traffic[key] = traffic.get(key, 0.0) + tau
    if not traffic:
        raise GraphError("empty edge list")
    if symmetrize:
        for (a, b), tau in list(traffic.items()):
            traffic.setdefault((b, a), tau)

    keep = _largest_weak_component(len(labels), traffic)
    remap = {old: new for new, old in enumerate(keep)}
    links = tuple(
        DirectedLink(remap[a], remap[b], tau)
        for (a, b), tau in traffic.items()
        if a in remap
    )
    dropped_nodes = len(labels) - len(keep)
    dropped_links = len(traffic) - len(links)
    if dropped_nodes:
        log.info("dropped %d nodes / %d links outside the largest component", dropped_nodes, dropped_links)
    return NetworkGraph(tuple(labels[v] for v in keep), links, dropped_nodes, dropped_links)


def read_edge_list(path: str | Path, symmetrize: bool = False) -> NetworkGraph:
    """Parse a ``src<TAB>dst<TAB>traffic`` file; ``#`` lines are comments."""
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t") if "\t" in line else line.split()
            if len(parts) == 2:
                parts.append("1")
            if len(parts) != 3:
                raise GraphError(f"{path}:{lineno}: expected src, dst, traffic")
            try:
                tau = float(parts[2])
            except ValueError:
                raise GraphError(f"{path}:{lineno}: bad traffic value {parts[2]!r}") from None
            edges.append((parts[0], parts[1], tau))
    return build_network_graph(edges, symmetrize=symmetrize)


def format_edge_list(g: NetworkGraph, header: str | None = None) -> str:
    lines = [f"# {h}" for h in (header.splitlines() if header else [])]
    for src, dst, tau in g.edge_list():
        lines.append(f"{src}\t{dst}\t{tau:g}")
    return "\n".join(lines) + "\n"


def write_edge_list(g: NetworkGraph, path: str | Path, header: str | None = None) -> None:
    Path(path).write_text(format_edge_list(g, header), encoding="utf-8")


@dataclass(frozen=True, eq=False)
class ConnectivityGraph:
    """Vertices are (groups of) directed links; ``succ[u]`` holds the
    vertices a packet may move to after traversing ``u``."""

    graph: NetworkGraph = field(repr=False)
    members: tuple[tuple[int, ...], ...]
    weights: tuple[float, ...]
    succ: tuple[tuple[int, ...], ...] = field(repr=False)
    pred: tuple[tuple[int, ...], ...] = field(init=False, repr=False)
    vertex_of: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        preds: list[list[int]] = [[] for _ in self.members]
        for u, outs in enumerate(self.succ):
            for v in outs:
                preds[v].append(u)
        vertex_of = [-1] * self.graph.n_links
        for v, group in enumerate(self.members):
            for link in group:
                vertex_of[link] = v
        object.__setattr__(self, "pred", tuple(map(tuple, preds)))
        object.__setattr__(self, "vertex_of", tuple(vertex_of))

    @property
    def n_vertices(self) -> int:
        return len(self.members)

    @property
    def n_edges(self) -> int:
        return sum(len(s) for s in self.succ)

    def multiplicity(self, v: int) -> int:
        return len(self.members[v])

    def edges(self) -> Iterable[tuple[int, int]]:
        for u, outs in enumerate(self.succ):
            for v in outs:
                yield u, v

    @property
    def back_map(self) -> dict[int, frozenset[int]]:
        return {v: frozenset(group) for v, group in enumerate(self.members)}


def build_connectivity_graph(g: NetworkGraph, weights: Sequence[float] | None = None) -> ConnectivityGraph:
    """One vertex per link; ``(a,b) -> (b,c)`` whenever ``c != a``."""
    if g.n_links == 0:
        raise GraphError("graph has no links")
    if weights is None:
        weights = g.traffic()
    elif len(weights) != g.n_links:
        raise GraphError("weights must cover every link")
    succ = []
    for e, link in enumerate(g.links):
        succ.append(tuple(n for n in g.out_links[link.dst] if g.links[n].dst != link.src))
    return ConnectivityGraph(
        graph=g,
        members=tuple((e,) for e in range(g.n_links)),
        weights=tuple(float(w) for w in weights),
        succ=tuple(succ),
    )


def collapse_legacy(cg: ConnectivityGraph, legacy: Iterable[int], cap: int | None = None) -> ConnectivityGraph:
    """Merge every vertex touching a legacy switch into one super-vertex.

    Legacy switches cannot pop, so all their links must share a partition.
    Switches sharing a link end up in the same super-vertex.
    """
    legacy = sorted(set(legacy))
    g = cg.graph
    for node in legacy:
        if not 0 <= node < g.n_nodes:
            raise GraphError(f"legacy switch {node} not in graph")
    if not legacy:
        return cg

    parent = list(range(cg.n_vertices))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for node in legacy:
        verts = sorted({cg.vertex_of[e] for e in g.incident_links(node)})
        for v in verts[1:]:
            ra, rb = find(verts[0]), find(v)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

    roots = sorted({find(v) for v in range(cg.n_vertices)})
    new_id = {r: i for i, r in enumerate(roots)}
    groups: list[list[int]] = [[] for _ in roots]
    weights = [0.0] * len(roots)
    for v in range(cg.n_vertices):
        nv = new_id[find(v)]
        groups[nv].extend(cg.members[v])
        weights[nv] += cg.weights[v]
    succ: list[set[int]] = [set() for _ in roots]
    for u, v in cg.edges():
        a, b = new_id[find(u)], new_id[find(v)]
        if a != b:
            succ[a].add(b)
    if cap is not None:
        for grp in groups:
            if len(grp) > cap:
                raise UnpartitionableError(
                    f"legacy super-vertex with {len(grp)} links exceeds partition size {cap}"
                )
    return ConnectivityGraph(
        graph=g,
        members=tuple(tuple(sorted(grp)) for grp in groups),
        weights=tuple(weights),
        succ=tuple(tuple(sorted(s)) for s in succ),
    )


def betweenness_weights(g: NetworkGraph) -> list[float]:
    """Shortest-path edge betweenness per directed link, normalised by n(n-1).

    Brandes' accumulation over unweighted BFS; equal-length paths share
    credit evenly.
    """
    n = g.n_nodes
    bc = [0.0] * g.n_links
    for s in range(n):
        order: list[int] = []
        preds: list[list[int]] = [[] for _ in range(n)]  # incoming links on shortest paths
        sigma = [0] * n
        dist = [-1] * n
        sigma[s], dist[s] = 1, 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            order.append(v)
            for e in g.out_links[v]:
                w = g.links[e].dst
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(e)
        delta = [0.0] * n
        for w in reversed(order):
            for e in preds[w]:
                v = g.links[e].src
                c = sigma[v] / sigma[w] * (1.0 + delta[w])
                bc[e] += c
                delta[v] += c
    norm = n * (n - 1)
    return [b / norm for b in bc] if norm else bc
