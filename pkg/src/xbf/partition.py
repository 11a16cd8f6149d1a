"""Balanced edge partitioning of a network into Bloom-filter partitions.

Jigsaw turns the edge partitioning problem into vertex partitioning of the
connectivity graph and solves it with a small multilevel k-way scheme.
The first coarsening step merges the out-links of each switch, later ones
use heavy-edge matching; the coarsest graph is split by region growing and
every level on the way back is refined against exact volume.  The
objective is the traffic-weighted communication volume ``totalv``, which
equals the number of popping operations in the network.

Powergraph's greedy streaming vertex-cut placement is provided as the
baseline.
"""

from __future__ import annotations

import heapq
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .graph import (
    ConnectivityGraph,
    NetworkGraph,
    UnpartitionableError,
    build_connectivity_graph,
    collapse_legacy,
)

log = logging.getLogger(__name__)

DEFAULT_PARTITION_SIZE = 256
BALANCE_TOLERANCE = 1.03
_EPS = 1e-9


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class PartitionConfig:
    max_partition_size: int = DEFAULT_PARTITION_SIZE
    imbalance: float = 1.1
    seed: int = 0
    traffic_aware: bool = True
    n_init: int = 4

    def __post_init__(self) -> None:
        if self.max_partition_size < 1:
            raise PartitionError("max_partition_size must be >= 1")
        if self.imbalance < 1:
            raise PartitionError("imbalance must be >= 1")
        if self.n_init < 1:
            raise PartitionError("n_init must be >= 1")

    def partition_count(self, n_links: int) -> int:
        return max(1, math.ceil(n_links / self.max_partition_size * self.imbalance - _EPS))


@dataclass(frozen=True, eq=False)
class Partitioning:
    """Assignment of every directed link to a partition.

    Partition ids are dense (``0..partition_count-1``).  Within a partition,
    links get one-bit identifiers in ascending link order.
    """

    graph: NetworkGraph = field(repr=False)
    assignment: tuple[int, ...]
    max_partition_size: int = DEFAULT_PARTITION_SIZE
    partition_count: int = field(init=False)
    members: tuple[tuple[int, ...], ...] = field(init=False, repr=False)
    bit_of: tuple[int, ...] = field(init=False, repr=False)
    poppers: frozenset[int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        g = self.graph
        if len(self.assignment) != g.n_links:
            raise PartitionError("assignment must cover every link")
        # compact ids, keeping relative order
        used = sorted(set(self.assignment))
        relabel = {p: i for i, p in enumerate(used)}
        assignment = tuple(relabel[p] for p in self.assignment)
        members: list[list[int]] = [[] for _ in used]
        for e, p in enumerate(assignment):
            members[p].append(e)
        bit_of = [0] * g.n_links
        for group in members:
            if len(group) > self.max_partition_size:
                raise PartitionError(
                    f"partition with {len(group)} links exceeds size {self.max_partition_size}"
                )
            for bit, e in enumerate(group):
                bit_of[e] = bit
        object.__setattr__(self, "assignment", assignment)
        object.__setattr__(self, "partition_count", len(used))
        object.__setattr__(self, "members", tuple(map(tuple, members)))
        object.__setattr__(self, "bit_of", tuple(bit_of))
        object.__setattr__(self, "poppers", frozenset(popper_nodes(g, assignment)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Partitioning):
            return NotImplemented
        return self.assignment == other.assignment and self.max_partition_size == other.max_partition_size

    def __hash__(self) -> int:
        return hash((self.assignment, self.max_partition_size))

    def partition_of(self, link: int) -> int:
        return self.assignment[link]

    def one_bit_ids(self) -> list[tuple[int, int, int]]:
        """``(link, partition, bit)`` triples."""
        return [(e, self.assignment[e], self.bit_of[e]) for e in range(len(self.assignment))]

    def fill(self) -> list[int]:
        return [len(m) for m in self.members]

    def to_json(self) -> dict:
        return {
            "partition_count": self.partition_count,
            "max_partition_size": self.max_partition_size,
            "assignment": list(self.assignment),
            "one_bit_ids": [{"link": e, "partition": p, "bit": b} for e, p, b in self.one_bit_ids()],
            "poppers": sorted(self.poppers),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1)

    @classmethod
    def from_json(cls, g: NetworkGraph, data: dict) -> Partitioning:
        part = cls(g, tuple(data["assignment"]), data.get("max_partition_size", DEFAULT_PARTITION_SIZE))
        if part.partition_count != data["partition_count"]:
            raise PartitionError("partition_count does not match assignment")
        if "poppers" in data and sorted(part.poppers) != sorted(data["poppers"]):
            raise PartitionError("popper set does not match assignment")
        for rec in data.get("one_bit_ids", ()):
            if part.bit_of[rec["link"]] != rec["bit"] or part.assignment[rec["link"]] != rec["partition"]:
                raise PartitionError(f"one-bit id mismatch for link {rec['link']}")
        return part


def popper_nodes(g: NetworkGraph, assignment: Sequence[int]) -> set[int]:
    """Switches with incident links in at least two partitions."""
    out = set()
    for v in range(g.n_nodes):
        parts = {assignment[e] for e in g.incident_links(v)}
        if len(parts) >= 2:
            out.add(v)
    return out


def next_hops(g: NetworkGraph, link: int) -> list[int]:
    """Links a packet may take after ``link`` (never straight back)."""
    src, dst = g.endpoints(link)
    return [e for e in g.out_links[dst] if g.links[e].dst != src]


def phi(partitioning: Partitioning, link: int, present: Iterable[int] | None = None) -> int:
    """Poppings a packet needs after traversing ``link``.

    With ``present`` given, only partitions carried in the packet's header
    are counted.
    """
    a = partitioning.assignment
    parts = {a[e] for e in next_hops(partitioning.graph, link)}
    parts.discard(a[link])
    if present is not None:
        parts &= set(present)
    return len(parts)


@dataclass(frozen=True)
class PartitionQuality:
    totalv: float
    phi: tuple[int, ...]
    popper_count: int
    max_fill: int
    min_fill: int


def totalv(cg: ConnectivityGraph, vertex_part: Sequence[int]) -> float:
    total = 0.0
    for v, outs in enumerate(cg.succ):
        pv = vertex_part[v]
        n = len({vertex_part[u] for u in outs if vertex_part[u] != pv})
        total += cg.weights[v] * n
    return total


def quality(partitioning: Partitioning, cg: ConnectivityGraph | None = None) -> PartitionQuality:
    g = partitioning.graph
    if cg is None:
        cg = build_connectivity_graph(g)
    a = partitioning.assignment
    vertex_part = []
    for group in cg.members:
        parts = {a[e] for e in group}
        if len(parts) != 1:
            raise PartitionError("a connectivity vertex is split across partitions")
        vertex_part.append(parts.pop())
    poppers = popper_nodes(g, a)
    if poppers != partitioning.poppers:
        raise PartitionError("stored popper set disagrees with assignment")
    fill = partitioning.fill()
    return PartitionQuality(
        totalv=totalv(cg, vertex_part),
        phi=tuple(phi(partitioning, e) for e in range(g.n_links)),
        popper_count=len(poppers),
        max_fill=max(fill),
        min_fill=min(fill),
    )


# --------------------------------------------------------------------------
# multilevel vertex partitioning


@dataclass
class _Level:
    vwgt: list[int]
    adj: list[dict[int, float]]
    cmap: list[int] | None = None  # finer vertex -> this level's vertex

    @property
    def n(self) -> int:
        return len(self.vwgt)


def _finest_level(cg: ConnectivityGraph) -> _Level:
    adj: list[dict[int, float]] = [dict() for _ in range(cg.n_vertices)]
    # Edges are unweighted: traffic enters only through the volume
    # objective at the finest level (as vertex communication sizes), which
    # keeps a few very busy links from dominating matching and growing.
    for u, v in cg.edges():
        adj[u][v] = adj[u].get(v, 0.0) + 1.0
        adj[v][u] = adj[v].get(u, 0.0) + 1.0
    return _Level([cg.multiplicity(v) for v in range(cg.n_vertices)], adj)


def _coarsen(level: _Level, max_vwgt: int, rng: np.random.Generator) -> _Level:
    match = [-1] * level.n
    for v in rng.permutation(level.n).tolist():
        if match[v] >= 0:
            continue
        best, best_w = v, -1.0
        for u, w in level.adj[v].items():
            if match[u] < 0 and u != v and level.vwgt[u] + level.vwgt[v] <= max_vwgt:
                if w > best_w or (w == best_w and u < best):
                    best, best_w = u, w
        match[v] = best
        match[best] = v
    cmap = [-1] * level.n
    nc = 0
    for v in range(level.n):
        if cmap[v] < 0:
            cmap[v] = nc
            cmap[match[v]] = nc
            nc += 1
    return _contract(level, cmap, nc)


def _contract_tails(level: _Level, cg: ConnectivityGraph, max_vwgt: int) -> _Level:
    """First coarsening step: merge links leaving the same switch.

    Such links share all their predecessors except one another's reverse
    links, so they are two-hop twins in the connectivity graph; ordinary
    heavy-edge matching pairs consecutive links instead and never brings
    them together.  Groups are cut at ``max_vwgt``; collapsed legacy
    super-vertices stay on their own.
    """
    g = cg.graph
    cmap = [-1] * level.n
    nc = 0
    for node in range(g.n_nodes):
        load = max_vwgt
        for e in g.out_links[node]:
            v = cg.vertex_of[e]
            if cmap[v] >= 0 or cg.multiplicity(v) > 1:
                continue
            if load + level.vwgt[v] > max_vwgt:
                nc += 1
                load = 0
            cmap[v] = nc - 1
            load += level.vwgt[v]
    for v in range(level.n):
        if cmap[v] < 0:
            cmap[v] = nc
            nc += 1
    return _contract(level, cmap, nc)


def _contract(level: _Level, cmap: list[int], nc: int) -> _Level:
    vwgt = [0] * nc
    adj: list[dict[int, float]] = [dict() for _ in range(nc)]
    for v in range(level.n):
        cv = cmap[v]
        vwgt[cv] += level.vwgt[v]
        for u, w in level.adj[v].items():
            cu = cmap[u]
            if cu != cv:
                adj[cv][cu] = adj[cv].get(cu, 0.0) + w
    level.cmap = cmap
    return _Level(vwgt, adj)


def _grow(level: _Level, k: int, cap: int, first_seed: int) -> list[int]:
    """Greedy region growing: fill partitions one after another by absorbing
    the most strongly connected unassigned vertex."""
    part = [-1] * level.n
    target = sum(level.vwgt) / k
    conn = [0.0] * level.n  # connection to already-assigned vertices
    for p in range(k - 1):
        load = 0
        if p == 0:
            seed = first_seed
        else:
            free = [v for v in range(level.n) if part[v] < 0]
            if not free:
                break
            seed = max(free, key=lambda v: (conn[v], -v))
        gain: dict[int, float] = {seed: 0.0}
        heap = [(-0.0, seed)]
        skipped: set[int] = set()
        while load < target:
            if not heap:
                # region exhausted: jump to the lowest free vertex that fits
                free = [v for v in range(level.n) if part[v] < 0 and v not in skipped]
                if not free:
                    break
                s = free[0]
                gain[s] = 0.0
                heap = [(-0.0, s)]
            neg, v = heapq.heappop(heap)
            if part[v] >= 0 or v in skipped or gain.get(v) != -neg:
                continue
            if load + level.vwgt[v] > cap:
                skipped.add(v)
                continue
            part[v] = p
            load += level.vwgt[v]
            for u, w in level.adj[v].items():
                conn[u] += w
                if part[u] < 0:
                    gain[u] = gain.get(u, 0.0) + w
                    heapq.heappush(heap, (-gain[u], u))
    for v in range(level.n):
        if part[v] < 0:
            part[v] = k - 1
    return part


def _cut(level: _Level, part: Sequence[int]) -> float:
    return sum(w for v in range(level.n) for u, w in level.adj[v].items() if part[u] != part[v]) / 2


def _refine_cut(level: _Level, part: list[int], k: int, cap: int, max_passes: int = 8) -> None:
    loads = [0] * k
    for v, p in enumerate(part):
        loads[p] += level.vwgt[v]
    for _ in range(max_passes):
        moved = 0
        for v in range(level.n):
            pv = part[v]
            ext: dict[int, float] = defaultdict(float)
            for u, w in level.adj[v].items():
                ext[part[u]] += w
            internal = ext.pop(pv, 0.0)
            best, best_gain = -1, _EPS
            for b in sorted(ext):
                g = ext[b] - internal
                if g > best_gain and loads[b] + level.vwgt[v] <= cap:
                    best, best_gain = b, g
            if best >= 0:
                part[v] = best
                loads[pv] -= level.vwgt[v]
                loads[best] += level.vwgt[v]
                moved += 1
        if not moved:
            break


class _VolumeState:
    """Incremental bookkeeping for exact ``totalv`` move gains."""

    def __init__(self, cg: ConnectivityGraph, part: list[int], k: int):
        self.cg = cg
        self.part = part
        self.k = k
        self.tau = cg.weights
        self.vwgt = [cg.multiplicity(v) for v in range(cg.n_vertices)]
        self.loads = [0] * k
        for v, p in enumerate(part):
            self.loads[p] += self.vwgt[v]
        self.cnt: list[dict[int, int]] = []
        for outs in cg.succ:
            c: dict[int, int] = defaultdict(int)
            for u in outs:
                c[part[u]] += 1
            self.cnt.append(c)

    def delta(self, v: int, b: int) -> float:
        """Change in totalv if ``v`` moves to partition ``b``."""
        a = self.part[v]
        if a == b:
            return 0.0
        cv = self.cnt[v]
        d = self.tau[v] * ((cv.get(a, 0) > 0) - (cv.get(b, 0) > 0))
        for u in self.cg.pred[v]:
            cu = self.cnt[u]
            pu = self.part[u]
            if cu[a] == 1 and a != pu:
                d -= self.tau[u]
            if cu.get(b, 0) == 0 and b != pu:
                d += self.tau[u]
        return d

    def move(self, v: int, b: int) -> None:
        a = self.part[v]
        for u in self.cg.pred[v]:
            cu = self.cnt[u]
            cu[a] -= 1
            if cu[a] == 0:
                del cu[a]
            cu[b] += 1
        self.part[v] = b
        self.loads[a] -= self.vwgt[v]
        self.loads[b] += self.vwgt[v]

    def neighbour_parts(self, v: int) -> set[int]:
        p = self.part
        out = {p[u] for u in self.cg.succ[v]}
        out.update(p[u] for u in self.cg.pred[v])
        out.discard(p[v])
        return out

    def neighbours(self, v: int) -> set[int]:
        return set(self.cg.succ[v]) | set(self.cg.pred[v])


def _refine_groups(
    cg: ConnectivityGraph, fine_of: list[int], part: list[int], k: int, cap: int, max_passes: int = 4
) -> None:
    """totalv refinement at a coarse level.

    ``fine_of`` maps every finest-level vertex to its coarse vertex; moving
    a coarse vertex moves all of its members, and gains are exact totalv
    changes evaluated on the finest graph.
    """
    groups: list[list[int]] = [[] for _ in part]
    for v, c in enumerate(fine_of):
        groups[c].append(v)
    state = _VolumeState(cg, [part[c] for c in fine_of], k)
    weight = [sum(state.vwgt[v] for v in grp) for grp in groups]
    for _ in range(max_passes):
        moved = 0
        for c, grp in enumerate(groups):
            a = part[c]
            targets: set[int] = set()
            for v in grp:
                targets |= state.neighbour_parts(v)
            targets.discard(a)
            best_d, best_b = -_EPS, -1
            for b in sorted(targets):
                if state.loads[b] + weight[c] > cap:
                    continue
                d = 0.0
                for v in grp:
                    d += state.delta(v, b)
                    state.move(v, b)
                for v in grp:
                    state.move(v, a)
                if d < best_d:
                    best_d, best_b = d, b
            if best_b >= 0:
                for v in grp:
                    state.move(v, best_b)
                part[c] = best_b
                moved += 1
        if not moved:
            break


def _balance(state: _VolumeState, cap: int) -> None:
    """Evict vertices from over-full partitions at the least totalv cost."""
    for p in range(state.k):
        if state.loads[p] <= cap:
            continue
        inside = [v for v, q in enumerate(state.part) if q == p]
        while state.loads[p] > cap:
            best = None
            for any_target in (False, True):
                for v in inside:
                    targets = range(state.k) if any_target else sorted(state.neighbour_parts(v))
                    for b in targets:
                        if b != p and state.loads[b] + state.vwgt[v] <= cap:
                            key = (state.delta(v, b), v, b)
                            if best is None or key < best:
                                best = key
                if best is not None:
                    break
            if best is None:
                raise UnpartitionableError("cannot satisfy the partition size cap")
            _, v, b = best
            state.move(v, b)
            inside.remove(v)


def refine_volume(
    cg: ConnectivityGraph, part: list[int], k: int, cap: int, max_passes: int = 50
) -> list[float]:
    """Greedy boundary refinement of ``part`` (in place) against ``totalv``.

    Each accepted move or swap strictly lowers ``totalv``; refinement stops
    after the first pass without improvement.  Returns the ``totalv`` after
    every accepted step, starting with the initial value.
    """
    state = _VolumeState(cg, part, k)
    current = totalv(cg, part)
    history = [current]
    exhaustive_swaps = cg.n_vertices <= 64
    for _ in range(max_passes):
        improved = False
        for v in range(cg.n_vertices):
            targets = state.neighbour_parts(v)
            if not targets:
                continue
            best_d, best_b = -_EPS, -1
            full = []
            for b in sorted(targets):
                if state.loads[b] + state.vwgt[v] > cap:
                    full.append(b)
                    continue
                d = state.delta(v, b)
                if d < best_d:
                    best_d, best_b = d, b
            if best_b >= 0:
                state.move(v, best_b)
                current += best_d
                history.append(current)
                improved = True
                continue
            # swap with a vertex of a full partition
            a = state.part[v]
            swapped = False
            for b in full:
                if exhaustive_swaps:
                    partners = [w for w in range(cg.n_vertices) if state.part[w] == b]
                else:
                    partners = sorted(w for w in state.neighbours(v) if state.part[w] == b)
                d1 = state.delta(v, b)
                state.move(v, b)
                for w in partners:
                    if w == v or state.loads[a] + state.vwgt[w] > cap:
                        continue
                    if state.loads[b] - state.vwgt[w] > cap:
                        continue
                    d2 = state.delta(w, a)
                    if d1 + d2 < -_EPS:
                        state.move(w, a)
                        current += d1 + d2
                        history.append(current)
                        swapped = True
                        break
                if swapped:
                    break
                state.move(v, a)
            if swapped:
                improved = True
        if not improved and exhaustive_swaps:
            gain = _kl_pass(state, cap)
            if gain >= -_EPS and cg.n_vertices <= 24:
                gain = _rotate3(state, cap)
            if gain < -_EPS:
                current += gain
                history.append(current)
                improved = True
        if not improved:
            break
    return history


def _rotate3(state: _VolumeState, cap: int) -> float:
    """First strictly improving cyclic exchange ``v: a->b, w: b->c, x: c->a``
    (tiny graphs only); applies it and returns its totalv change, else 0."""
    part, loads, vwgt = state.part, state.loads, state.vwgt
    n = len(part)
    for v in range(n):
        for w in range(n):
            a, b = part[v], part[w]
            if a == b:
                continue
            for x in range(n):
                c = part[x]
                if c in (a, b):
                    continue
                if (
                    loads[b] + vwgt[v] - vwgt[w] > cap
                    or loads[c] + vwgt[w] - vwgt[x] > cap
                    or loads[a] + vwgt[x] - vwgt[v] > cap
                ):
                    continue
                d = state.delta(v, b)
                state.move(v, b)
                d += state.delta(w, c)
                state.move(w, c)
                d += state.delta(x, a)
                if d < -_EPS:
                    state.move(x, a)
                    return d
                state.move(w, b)
                state.move(v, a)
    return 0.0


def _kl_pass(state: _VolumeState, cap: int) -> float:
    """One Kernighan-Lin pass over a small graph.

    Repeatedly makes the best available move or swap even when it raises
    totalv, locking the vertex that initiated it, then rolls back to the
    best prefix.  Returns that prefix's
    (non-positive) totalv change; the state is left at that prefix.
    """
    n = len(state.part)
    part, loads, vwgt = state.part, state.loads, state.vwgt
    locked: set[int] = set()
    undo: list[tuple[int, int]] = []  # (vertex, previous partition), in order applied
    cum, best, best_len = 0.0, 0.0, 0
    while True:
        choice = None
        for v in range(n):
            if v in locked:
                continue
            a = part[v]
            for b in range(state.k):
                if b != a and loads[b] + vwgt[v] <= cap:
                    key = (state.delta(v, b), v, -1, b)
                    if choice is None or key < choice:
                        choice = key
            for w in range(n):
                b = part[w]
                if w in locked or b == a:
                    continue
                if loads[b] - vwgt[w] + vwgt[v] > cap or loads[a] - vwgt[v] + vwgt[w] > cap:
                    continue
                d1 = state.delta(v, b)
                state.move(v, b)
                d2 = state.delta(w, a)
                state.move(v, a)
                key = (d1 + d2, v, w, b)
                if choice is None or key < choice:
                    choice = key
        if choice is None:
            break
        d, v, w, b = choice
        a = part[v]
        undo.append((v, a))
        state.move(v, b)
        locked.add(v)
        if w >= 0:
            # the partner stays unlocked so that chains of swaps can rotate
            # vertices around several full partitions
            undo.append((w, b))
            state.move(w, a)
        cum += d
        if cum < best - _EPS:
            best, best_len = cum, len(undo)
    for v, p in reversed(undo[best_len:]):
        state.move(v, p)
    return best


def vertex_partition(
    cg: ConnectivityGraph,
    k: int,
    cap: int,
    seed: int = 0,
    n_init: int = 4,
    balance_tol: float = BALANCE_TOLERANCE,
) -> list[int]:
    """Assign connectivity vertices to ``k`` partitions of at most ``cap``
    member links, minimising ``totalv``.

    Partitions are additionally held to ``balance_tol`` times the mean
    load, so that all ``k`` partitions end up in use.
    """
    total = sum(cg.multiplicity(v) for v in range(cg.n_vertices))
    if k < 1 or k * cap < total:
        raise PartitionError(f"infeasible: {k} partitions of {cap} cannot hold {total} links")
    if any(cg.multiplicity(v) > cap for v in range(cg.n_vertices)):
        raise UnpartitionableError("a connectivity vertex exceeds the partition size cap")
    if k == 1:
        return [0] * cg.n_vertices
    biggest = max(cg.multiplicity(v) for v in range(cg.n_vertices))
    cap = min(cap, max(math.ceil(total / k * balance_tol), biggest))

    rng = np.random.default_rng(seed)
    levels = [_finest_level(cg)]
    max_vwgt = max(max(levels[0].vwgt), math.ceil(total / (8 * k)))
    coarsen_to = max(20 * k, 40)
    while levels[-1].n > coarsen_to:
        if len(levels) == 1:
            coarse = _contract_tails(levels[0], cg, max_vwgt)
        else:
            coarse = _coarsen(levels[-1], max_vwgt, rng)
        if coarse.n > 0.95 * levels[-1].n:
            levels[-1].cmap = None
            break
        levels.append(coarse)

    coarsest = levels[-1]
    seeds = rng.choice(coarsest.n, size=min(n_init, coarsest.n), replace=False).tolist()

    # finest vertex -> vertex of every level
    fine_of = [list(range(cg.n_vertices))]
    for lvl in range(len(levels) - 1):
        cmap = levels[lvl].cmap
        fine_of.append([cmap[c] for c in fine_of[-1]])

    def finish(part: list[int]) -> list[int]:
        for lvl in range(len(levels) - 2, -1, -1):
            cmap = levels[lvl].cmap
            part = [part[cmap[v]] for v in range(levels[lvl].n)]
            if lvl > 0:
                _refine_groups(cg, fine_of[lvl], part, k, cap)
        state = _VolumeState(cg, part, k)
        _balance(state, cap)
        refine_volume(cg, part, k, cap)
        return part

    candidates = []
    for s in seeds:
        part = _grow(coarsest, k, cap, s)
        if len(levels) > 1:
            _refine_cut(coarsest, part, k, cap)
        candidates.append(part)
    if len(levels) == 1:
        # uncoarsened (small) graphs are cheap: add random balanced starts
        for _ in range(n_init):
            order = rng.permutation(cg.n_vertices).tolist()
            part = [0] * cg.n_vertices
            loads = [0] * k
            for v in order:
                p = min(range(k), key=lambda q: (loads[q], q))
                part[v] = p
                loads[p] += cg.multiplicity(v)
            candidates.append(part)

    if len(levels) > 1:
        best = min(candidates, key=lambda p: _cut(coarsest, p))
        return finish(best)
    finished = [finish(p) for p in candidates]
    return min(finished, key=lambda p: totalv(cg, p))


def jigsaw(
    g: NetworkGraph,
    weights: Sequence[float] | None = None,
    cfg: PartitionConfig | None = None,
    legacy: Iterable[int] = (),
) -> Partitioning:
    """Traffic-aware partitioning of ``g``'s links.

    ``weights`` defaults to the link traffic stored in ``g``; with
    ``cfg.traffic_aware`` false every link weighs 1.
    """
    cfg = cfg or PartitionConfig()
    if g.n_links < 1:
        raise PartitionError("graph has no links")
    if not cfg.traffic_aware:
        weights = [1.0] * g.n_links
    k = cfg.partition_count(g.n_links)
    cg = build_connectivity_graph(g, weights)
    cg = collapse_legacy(cg, legacy, cap=cfg.max_partition_size)
    vertex_part = vertex_partition(cg, k, cfg.max_partition_size, cfg.seed, cfg.n_init)
    assignment = [0] * g.n_links
    for v, group in enumerate(cg.members):
        for e in group:
            assignment[e] = vertex_part[v]
    return Partitioning(g, tuple(assignment), cfg.max_partition_size)


# --------------------------------------------------------------------------
# Powergraph baseline


def _powergraph_split(g: NetworkGraph, links: list[int], k: int, rng: np.random.Generator) -> list[list[int]]:
    parts: list[list[int]] = [[] for _ in range(k)]
    replicas: dict[int, set[int]] = defaultdict(set)
    for i in rng.permutation(len(links)).tolist():
        e = links[i]
        u, v = g.endpoints(e)
        au, av = replicas[u], replicas[v]
        best = min(range(k), key=lambda p: ((p not in au) + (p not in av), len(parts[p]), p))
        parts[best].append(e)
        au.add(best)
        av.add(best)
    return [sorted(p) for p in parts if p]


def powergraph_partition(g: NetworkGraph, target: int = DEFAULT_PARTITION_SIZE, seed: int = 0) -> Partitioning:
    """Greedy vertex-cut streaming placement, re-splitting oversized parts.

    Each link (in a seeded random stream order) joins the partition that
    adds the fewest new vertex replicas; ties go to the least-loaded, then
    lowest-numbered partition.
    """
    if target < 1:
        raise PartitionError("target must be >= 1")
    rng = np.random.default_rng(seed)
    pending = [list(range(g.n_links))]
    done: list[list[int]] = []
    while pending:
        links = pending.pop()
        if len(links) <= target:
            done.append(links)
            continue
        k = math.ceil(len(links) / target)
        pieces = _powergraph_split(g, links, k, rng)
        if max(len(p) for p in pieces) >= len(links):
            # no progress: cut the stream into consecutive chunks
            order = [links[i] for i in rng.permutation(len(links)).tolist()]
            pieces = [sorted(order[i : i + target]) for i in range(0, len(order), target)]
        pending.extend(pieces)
    done.sort(key=lambda p: p[0])
    assignment = [0] * g.n_links
    for pid, group in enumerate(done):
        for e in group:
            assignment[e] = pid
    return Partitioning(g, tuple(assignment), target)
