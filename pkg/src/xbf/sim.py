"""Packet-level forwarding simulation and the experiment runner.

Two delivery models share one traversal skeleton: a packet copy sits at a
node having arrived over some link, tests each out-link except the one
leading straight back, and a copy goes out over every positive.

* XBF: links of the packet's current partition are tested against the
  iBF; links of any other partition carried in the header are tested
  after popping that partition's filter from the zBF.
* classical: every link is tested against one Bloom filter of random-k
  identifiers, with a hop limit against forwarding loops.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .bloom import K_RULES, BitFilter, gen_random_ids
from .graph import NetworkGraph, betweenness_weights
from .header import XbfHeader, build_header, compress_zbf, entry_partition
from .partition import PartitionConfig, Partitioning, jigsaw, powergraph_partition, quality
from .topo import TopoSpec, TrafficModel, build_topology, gen_traffic, source_weights
from .trees import MulticastTree, build_multicast_tree, sample_endpoints

log = logging.getLogger(__name__)

METRIC_COLUMNS = (
    "topology",
    "scheme",
    "sinks",
    "trial",
    "hdr_bits",
    "hdr_bits_compressed",
    "partitions",
    "poppers_on_tree",
    "pops",
    "false_firings",
    "loop",
)


class SimulationError(ValueError):
    pass


@dataclass
class DeliveryTrace:
    traversed_links: list[int] = field(default_factory=list)
    delivered: set[int] = field(default_factory=set)
    reached: set[int] = field(default_factory=set)
    pops: list[tuple[int, int]] = field(default_factory=list)
    false_firings: list[int] = field(default_factory=list)
    loop_detected: bool = False
    partitions_touched: set[int] = field(default_factory=set)
    # (node, arrival link or None, partition the packet was in)
    visits: list[tuple[int, int | None, int]] = field(default_factory=list)

    @property
    def duplicate_links(self) -> bool:
        return len(self.traversed_links) != len(set(self.traversed_links))

    @property
    def popping_nodes(self) -> set[int]:
        return {v for v, _ in self.pops}


def _back_node(g: NetworkGraph, arrival: int | None) -> int:
    return -1 if arrival is None else g.links[arrival].src


def deliver_xbf(
    g: NetworkGraph,
    partitioning: Partitioning,
    tree: MulticastTree,
    header: XbfHeader | None = None,
    entry: int | None = None,
) -> DeliveryTrace:
    """Forward one packet carrying ``tree``'s XBF header from its source."""
    for e in tree.links:
        if not 0 <= e < g.n_links:
            raise SimulationError(f"tree link {e} not in graph")
    if header is None:
        header = build_header(tree, partitioning, entry)
    assign = partitioning.assignment
    bit_of = partitioning.bit_of
    zbf = {p: f.bits for p, f in header.zbf}
    start = entry
    if start is None:
        # filters of different partitions can coincide bit for bit
        start = entry_partition(tree, partitioning)
        if zbf.get(start) != header.ibf.bits:
            start = next(p for p, f in header.zbf if f.bits == header.ibf.bits)

    trace = DeliveryTrace()
    seen: set[tuple[int, int | None]] = set()
    queue = deque([(tree.source, None, start, header.ibf.bits)])
    while queue:
        node, arrival, cur, ibf = queue.popleft()
        if (node, arrival) in seen:
            trace.loop_detected = True
            continue
        seen.add((node, arrival))
        trace.reached.add(node)
        trace.visits.append((node, arrival, cur))
        trace.partitions_touched.add(cur)
        back = _back_node(g, arrival)
        outs = [e for e in g.out_links[node] if g.links[e].dst != back]
        # current partition first (iBF), then foreign partitions in id order (zBF)
        outs.sort(key=lambda e: (assign[e] != cur, assign[e], e))
        popped: set[int] = set()
        for e in outs:
            p = assign[e]
            if p == cur:
                f = ibf
            elif p in zbf:
                if p not in popped:
                    popped.add(p)
                    trace.pops.append((node, p))
                f = zbf[p]
            else:
                continue
            if f >> bit_of[e] & 1:
                trace.traversed_links.append(e)
                if e not in tree.links:
                    trace.false_firings.append(e)
                queue.append((g.links[e].dst, e, p, f))
    trace.delivered = trace.reached & set(tree.sinks)
    return trace


def deliver_classical(
    g: NetworkGraph,
    ids,
    f: BitFilter,
    source: int,
    ttl: int | None = None,
    intended: Iterable[int] | None = None,
    stop_on_false: bool = False,
    sinks: Iterable[int] | None = None,
) -> DeliveryTrace:
    """Flood a classical in-packet Bloom filter from ``source``.

    ``ids[link]`` gives each link's identifier.  A copy travels at most
    ``ttl`` links (default four times the diameter).  A repeated
    ``(node, arrival link)`` state marks a loop; it is not expanded again,
    since breadth-first order means the first arrival already carried the
    larger remaining hop budget.
    """
    if ttl is None:
        ttl = 4 * max(g.diameter, 1)
    if ttl < 1:
        raise SimulationError("ttl must be >= 1")
    intended = None if intended is None else set(intended)
    fb = f.bits
    trace = DeliveryTrace()
    seen: set[tuple[int, int | None]] = set()
    queue = deque([(source, None, 0)])
    while queue:
        node, arrival, hops = queue.popleft()
        if (node, arrival) in seen:
            trace.loop_detected = True
            continue
        seen.add((node, arrival))
        trace.reached.add(node)
        trace.visits.append((node, arrival, 0))
        if hops >= ttl:
            continue
        back = _back_node(g, arrival)
        for e in g.out_links[node]:
            if g.links[e].dst == back:
                continue
            lb = ids[e].bits
            if fb & lb == lb:
                trace.traversed_links.append(e)
                if intended is not None and e not in intended:
                    trace.false_firings.append(e)
                    if stop_on_false:
                        return trace
                queue.append((g.links[e].dst, e, hops + 1))
    if sinks is not None:
        trace.delivered = trace.reached & set(sinks)
    return trace


def static_pops(partitioning: Partitioning, visit: tuple[int, int | None, int], present: Iterable[int]) -> int:
    """Distinct foreign partitions among a visit's candidate next hops that
    the header carries (the per-link popping count restricted to the tree)."""
    from .partition import phi

    node, arrival, cur = visit
    present = set(present)
    if arrival is not None:
        return phi(partitioning, arrival, present)
    a = partitioning.assignment
    parts = {a[e] for e in partitioning.graph.out_links[node]} & present
    parts.discard(cur)
    return len(parts)


# --------------------------------------------------------------------------
# experiments


@dataclass(frozen=True)
class ExperimentConfig:
    topology: TopoSpec = TopoSpec()
    sinks: tuple[int, ...] = (1, 10, 20)
    trials: int = 1000
    seed: int = 0
    scheme: str = "xbf"
    traffic: TrafficModel = TrafficModel()
    partitioner: str = "jigsaw"
    partition: PartitionConfig = PartitionConfig()
    weighting: str = "traffic"
    traffic_trials_per_node: int = 5
    classical_m: int = 256
    k_rule: str = "optimal"

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise SimulationError("trials must be >= 1")
        if self.scheme not in ("xbf", "classical"):
            raise SimulationError(f"unknown scheme {self.scheme!r}")
        if self.partitioner not in ("jigsaw", "powergraph"):
            raise SimulationError(f"unknown partitioner {self.partitioner!r}")
        if self.weighting not in ("traffic", "betweenness"):
            raise SimulationError(f"unknown weighting {self.weighting!r}")
        if self.k_rule not in K_RULES:
            raise SimulationError(f"unknown k rule {self.k_rule!r}")
        if not self.sinks or min(self.sinks) < 1:
            raise SimulationError("sink counts must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sinks"] = list(self.sinks)
        d["topology"] = self.topology.to_dict()
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def link_weights(g: NetworkGraph, cfg: ExperimentConfig) -> list[float]:
    if cfg.weighting == "betweenness":
        return betweenness_weights(g)
    return gen_traffic(g, cfg.traffic, cfg.traffic_trials_per_node)


def partition_network(g: NetworkGraph, cfg: ExperimentConfig) -> Partitioning:
    if cfg.partitioner == "powergraph":
        return powergraph_partition(g, cfg.partition.max_partition_size, cfg.partition.seed)
    weights = link_weights(g, cfg) if cfg.partition.traffic_aware else None
    return jigsaw(g, weights, cfg.partition)


def sample_tree(
    g: NetworkGraph,
    n_sinks: int,
    rng: np.random.Generator,
    weights: Sequence[float] | None = None,
) -> MulticastTree:
    source, sinks = sample_endpoints(rng, g.n_nodes, n_sinks, weights)
    return build_multicast_tree(g, source, sinks)


def trial_rng(seed: int, n_sinks: int, trial: int) -> np.random.Generator:
    return np.random.default_rng((seed, n_sinks, trial))


def measure_xbf(g: NetworkGraph, partitioning: Partitioning, tree: MulticastTree) -> dict:
    header = build_header(tree, partitioning)
    trace = deliver_xbf(g, partitioning, tree, header)
    if trace.delivered != set(tree.sinks) or trace.false_firings or trace.loop_detected:
        raise SimulationError("XBF delivery was not exact")
    return {
        "hdr_bits": header.size_bits(),
        "hdr_bits_compressed": header.m + header.partition_count + compress_zbf(header).bit_length,
        "partitions": len(header.zbf),
        "poppers_on_tree": len(tree.nodes(g) & partitioning.poppers),
        "pops": len(trace.pops),
        "false_firings": 0,
        "loop": False,
    }


def measure_classical(g: NetworkGraph, tree: MulticastTree, m: int, k_rule: str, seed: int) -> dict:
    k = K_RULES[k_rule](m, len(tree.links))
    ids = gen_random_ids(g.n_links, m, k, seed)
    f = ids.encode(tree.links)
    trace = deliver_classical(g, ids, f, tree.source, intended=tree.links, sinks=tree.sinks)
    return {
        "hdr_bits": m,
        "hdr_bits_compressed": m,
        "partitions": 0,
        "poppers_on_tree": 0,
        "pops": 0,
        "false_firings": len(trace.false_firings),
        "loop": trace.loop_detected,
    }


def _run_trials(args) -> list[dict]:
    cfg, g, partitioning, weights, n_sinks, trials = args
    rows = []
    for t in trials:
        rng = trial_rng(cfg.seed, n_sinks, t)
        tree = sample_tree(g, n_sinks, rng, weights)
        if cfg.scheme == "xbf":
            metrics = measure_xbf(g, partitioning, tree)
        else:
            metrics = measure_classical(g, tree, cfg.classical_m, cfg.k_rule, int(rng.integers(2**31)))
        rows.append({"topology": cfg.topology.name, "scheme": cfg.scheme, "sinks": n_sinks, "trial": t, **metrics})
    return rows


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list[dict]
    summary: dict


def summarize(rows: Sequence[dict], metrics: Sequence[str] = METRIC_COLUMNS[4:]) -> dict:
    out = {}
    for name in metrics:
        vals = np.array([float(r[name]) for r in rows])
        out[name] = {
            "mean": float(vals.mean()),
            "p5": float(np.percentile(vals, 5)),
            "p95": float(np.percentile(vals, 95)),
        }
    return out


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    """Sample ``cfg.trials`` trees per sink count and record per-packet metrics.

    Results do not depend on ``jobs``: every trial draws from its own
    generator seeded by ``(seed, sinks, trial)``.
    """
    g = build_topology(cfg.topology)
    if max(cfg.sinks) > g.n_nodes - 1:
        raise SimulationError(f"{max(cfg.sinks)} sinks requested on {g.n_nodes} nodes")
    partitioning = partition_network(g, cfg) if cfg.scheme == "xbf" else None
    weights = source_weights(g, cfg.traffic)

    tasks = []
    chunk = max(1, math.ceil(cfg.trials / max(jobs, 1)))
    for s in cfg.sinks:
        for lo in range(0, cfg.trials, chunk):
            tasks.append((cfg, g, partitioning, weights, s, range(lo, min(lo + chunk, cfg.trials))))
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            batches = list(pool.map(_run_trials, tasks))
    else:
        batches = [_run_trials(t) for t in tasks]
    rows = [r for b in batches for r in b]

    network = {"nodes": g.n_nodes, "links": g.n_links, "diameter": g.diameter}
    if partitioning is not None:
        q = quality(partitioning)
        network.update(partitions=partitioning.partition_count, poppers=q.popper_count, totalv=q.totalv)
    summary = {
        "config_hash": cfg.config_hash(),
        "config": cfg.to_dict(),
        "network": network,
        "by_sinks": {str(s): summarize([r for r in rows if r["sinks"] == s]) for s in cfg.sinks},
    }
    return ExperimentResult(cfg, rows, summary)


def write_metrics_csv(rows: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        for r in rows:
            writer.writerow({**r, "loop": str(bool(r["loop"])).lower()})


def write_summary_json(summary: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
