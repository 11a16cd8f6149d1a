"""Shortest-path multicast trees."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .graph import GraphError, NetworkGraph


@dataclass(frozen=True)
class MulticastTree:
    source: int
    sinks: frozenset[int]
    links: frozenset[int]

    def nodes(self, g: NetworkGraph) -> set[int]:
        out = {self.source}
        for e in self.links:
            out.update(g.endpoints(e))
        return out


def build_multicast_tree(
    g: NetworkGraph,
    source: int,
    sinks: Iterable[int],
    parents: Sequence[int] | None = None,
) -> MulticastTree:
    """Union of BFS shortest paths from ``source`` to every sink.

    All paths come from a single BFS tree, so shared prefixes coincide and
    the union is itself a tree.
    """
    sinks = frozenset(sinks)
    if not sinks:
        raise GraphError("a multicast tree needs at least one sink")
    if parents is None:
        parents = g.bfs_parents(source)
    links: set[int] = set()
    for sink in sinks:
        v = sink
        while v != source:
            u = int(parents[v])
            if u < 0:
                raise GraphError(f"sink {sink} unreachable from {source}")
            e = g.link_id(u, v)
            if e in links:
                break
            links.add(e)
            v = u
    return MulticastTree(source, sinks, frozenset(links))


def sample_endpoints(
    rng: np.random.Generator,
    n_nodes: int,
    n_sinks: int,
    source_weights: Sequence[float] | None = None,
) -> tuple[int, list[int]]:
    """Pick a source (optionally weighted) and ``n_sinks`` distinct others uniformly."""
    if n_sinks < 1 or n_sinks > n_nodes - 1:
        raise GraphError(f"cannot pick {n_sinks} sinks among {n_nodes} nodes")
    if source_weights is None:
        source = int(rng.integers(n_nodes))
    else:
        w = np.asarray(source_weights, dtype=float)
        source = int(rng.choice(n_nodes, p=w / w.sum()))
    others = rng.choice(n_nodes - 1, size=n_sinks, replace=False)
    sinks = [int(x) + int(x >= source) for x in others]
    return source, sinks
