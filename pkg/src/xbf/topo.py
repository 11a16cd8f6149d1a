"""Synthetic topologies and traffic synthesis."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .graph import GraphError, NetworkGraph, build_network_graph, read_edge_list
from .trees import build_multicast_tree

TOPO_KINDS = ("ba", "er", "sized", "file")
TRAFFIC_KINDS = ("uniform", "high_demand", "spatial_cluster")


def er_probability(n: int, eps: float = 0.1) -> float:
    """Edge probability just above the connectivity threshold."""
    return (1 + eps) * math.log(n) / n


def _undirected(pairs, n: int) -> NetworkGraph:
    edges = []
    for a, b in pairs:
        edges.append((a, b, 1.0))
        edges.append((b, a, 1.0))
    return build_network_graph(edges, nodes=range(n))


def gen_ba(n: int, m: int = 2, seed: int = 0) -> NetworkGraph:
    """Barabási–Albert preferential attachment.

    Growth starts from ``m`` unconnected seed nodes; each of the remaining
    ``n - m`` nodes attaches to ``m`` distinct existing nodes, giving
    ``m (n - m)`` undirected edges.
    """
    if not n > m >= 1:
        raise GraphError("BA needs n > m >= 1")
    rng = np.random.default_rng(seed)
    targets = list(range(m))
    repeated: list[int] = []
    pairs = []
    for node in range(m, n):
        pairs.extend((node, t) for t in targets)
        repeated.extend(targets)
        repeated.extend([node] * m)
        chosen: set[int] = set()
        while len(chosen) < m:
            chosen.add(repeated[int(rng.integers(len(repeated)))])
        targets = sorted(chosen)
    return _undirected(pairs, n)


def gen_er(n: int, p: float | None = None, seed: int = 0) -> NetworkGraph:
    """Erdős–Rényi G(n, p), largest component only."""
    if p is None:
        p = er_probability(n)
    if not 0 < p <= 1:
        raise GraphError("ER needs 0 < p <= 1")
    rng = np.random.default_rng(seed)
    pairs = []
    for a in range(n - 1):
        hits = np.flatnonzero(rng.random(n - a - 1) < p)
        pairs.extend((a, a + 1 + int(j)) for j in hits)
    if not pairs:
        raise GraphError("ER draw produced no edges")
    return _undirected(pairs, n)


def gen_sized(n: int, n_links: int, seed: int = 0) -> NetworkGraph:
    """Connected graph with exactly ``n`` nodes and ``n_links`` directed links.

    A BA backbone with ``m = floor(E / 2n)`` (at least 1) is topped up with
    uniformly random extra edges.  Used as a stand-in for ISP maps of a
    given size.
    """
    undirected = n_links // 2
    if n_links % 2 or undirected < n - 1 or undirected > n * (n - 1) // 2:
        raise GraphError("infeasible size for a connected symmetric graph")
    m = max(1, min(undirected // n, n - 1))
    base = gen_ba(n, m, seed)
    present = {tuple(sorted(g)) for g in ((e.src, e.dst) for e in base.links)}
    rng = np.random.default_rng([seed, 1])
    pairs = sorted(present)
    while len(pairs) < undirected:
        a, b = (int(x) for x in rng.choice(n, size=2, replace=False))
        key = (min(a, b), max(a, b))
        if key not in present:
            present.add(key)
            pairs.append(key)
    return _undirected(pairs, n)


@dataclass(frozen=True)
class TopoSpec:
    kind: str = "ba"
    n: int = 500
    m: int = 2
    p: float | None = None
    links: int = 0
    path: str | None = None
    seed: int = 0
    symmetrize: bool = False

    def __post_init__(self) -> None:
        if self.kind not in TOPO_KINDS:
            raise GraphError(f"unknown topology kind {self.kind!r}")
        if self.kind == "ba" and not self.n > self.m >= 1:
            raise GraphError("BA needs n > m >= 1")
        if self.kind == "er" and self.p is not None and not 0 < self.p <= 1:
            raise GraphError("ER needs 0 < p <= 1")
        if self.kind == "file" and not self.path:
            raise GraphError("file topology needs a path")

    @property
    def name(self) -> str:
        if self.kind == "ba":
            return f"ba-{self.n}-{self.m}-s{self.seed}"
        if self.kind == "er":
            return f"er-{self.n}-s{self.seed}" if self.p is None else f"er-{self.n}-{self.p:g}-s{self.seed}"
        if self.kind == "sized":
            return f"sized-{self.n}-{self.links}-s{self.seed}"
        return Path(self.path).stem

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


def build_topology(spec: TopoSpec) -> NetworkGraph:
    if spec.kind == "ba":
        return gen_ba(spec.n, spec.m, spec.seed)
    if spec.kind == "er":
        return gen_er(spec.n, spec.p, spec.seed)
    if spec.kind == "sized":
        return gen_sized(spec.n, spec.links, spec.seed)
    return read_edge_list(spec.path, symmetrize=spec.symmetrize)


@dataclass(frozen=True)
class TrafficModel:
    """Who sends multicast traffic, and how much.

    ``high_demand`` marks a random ``fraction`` of nodes that send
    ``multiplier`` times the traffic of the others; ``spatial_cluster``
    picks those nodes from one BFS neighbourhood instead.
    """

    kind: str = "uniform"
    fraction: float = 0.1
    multiplier: float = 10.0
    seed: int = 0
    sink_min: int = 1
    sink_max: int = 20

    def __post_init__(self) -> None:
        if self.kind not in TRAFFIC_KINDS:
            raise ValueError(f"unknown traffic model {self.kind!r}")
        if not 0 < self.fraction < 1:
            raise ValueError("fraction must lie in (0, 1)")
        if self.multiplier < 1:
            raise ValueError("multiplier must be >= 1")
        if not 1 <= self.sink_min <= self.sink_max:
            raise ValueError("need 1 <= sink_min <= sink_max")

    def to_dict(self) -> dict:
        return asdict(self)


def demand_nodes(g: NetworkGraph, model: TrafficModel) -> frozenset[int]:
    if model.kind == "uniform":
        return frozenset()
    rng = np.random.default_rng([model.seed, 7])
    count = max(1, round(model.fraction * g.n_nodes))
    if model.kind == "high_demand":
        return frozenset(int(v) for v in rng.choice(g.n_nodes, size=count, replace=False))
    center = int(rng.integers(g.n_nodes))
    seen = {center}
    order = [center]
    queue = deque([center])
    while queue and len(order) < count:
        v = queue.popleft()
        for w in g.successors(v):
            if w not in seen:
                seen.add(w)
                order.append(w)
                queue.append(w)
    return frozenset(order[:count])


def source_weights(g: NetworkGraph, model: TrafficModel) -> list[float] | None:
    hot = demand_nodes(g, model)
    if not hot:
        return None
    return [model.multiplier if v in hot else 1.0 for v in range(g.n_nodes)]


def gen_traffic(g: NetworkGraph, model: TrafficModel | None = None, trials_per_node: int = 1) -> list[float]:
    """Per-link packet counts from simulated multicast sessions.

    Every node sources ``trials_per_node`` trees to a uniformly drawn number
    of uniformly drawn sinks; a tree from a high-demand node counts
    ``multiplier`` packets on each of its links.
    """
    model = model or TrafficModel()
    rng = np.random.default_rng(model.seed)
    hot = demand_nodes(g, model)
    tau = np.zeros(g.n_links)
    hi = min(model.sink_max, g.n_nodes - 1)
    lo = min(model.sink_min, hi)
    for source in range(g.n_nodes):
        parents = g.bfs_parents(source)
        weight = model.multiplier if source in hot else 1.0
        for _ in range(trials_per_node):
            s = int(rng.integers(lo, hi + 1))
            others = rng.choice(g.n_nodes - 1, size=s, replace=False)
            sinks = [int(x) + int(x >= source) for x in others]
            tree = build_multicast_tree(g, source, sinks, parents)
            for e in tree.links:
                tau[e] += weight
    return tau.tolist()

