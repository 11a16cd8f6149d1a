import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import random_small_graph, undirected
from xbf.bloom import BitFilter, LinkIdAssignment, gen_random_ids, one_bit_ids_for
from xbf.graph import build_network_graph
from xbf.header import build_header
from xbf.partition import PartitionConfig, Partitioning, jigsaw, powergraph_partition
from xbf.sim import (
    METRIC_COLUMNS,
    ExperimentConfig,
    SimulationError,
    deliver_classical,
    deliver_xbf,
    measure_xbf,
    run_experiment,
    static_pops,
    write_metrics_csv,
)
from xbf.topo import TopoSpec, gen_ba
from xbf.trees import build_multicast_tree, sample_endpoints


def named(pairs):
    g = build_network_graph(undirected(pairs))
    lab = {x: i for i, x in enumerate(g.labels)}
    return g, lab, lambda a, b: g.link_id(lab[a], lab[b])


def test_neighbour_tree_is_one_link():
    g = gen_ba(30, 2, seed=0)
    v = g.links[0].dst
    tree = build_multicast_tree(g, g.links[0].src, [v])
    assert tree.links == {0}


def test_four_link_tree_false_positive():
    g, lab, link = named([("v1", "v2"), ("v2", "v7"), ("v1", "v3"), ("v3", "v6"), ("v3", "v5")])
    tree = build_multicast_tree(g, lab["v1"], [lab["v6"], lab["v7"]])
    assert len(tree.links) == 4
    ids = [BitFilter.from_string("10000000")] * g.n_links
    green = {
        link("v1", "v2"): "00100000",
        link("v2", "v7"): "00010100",
        link("v1", "v3"): "00001000",
        link("v3", "v6"): "00000001",
    }
    assert set(green) == tree.links
    for e, s in green.items():
        ids[e] = BitFilter.from_string(s)
    ids[link("v3", "v5")] = BitFilter.from_string("00101000")
    f = BitFilter.from_string("00111101")
    assert f == BitFilter(sum(x.bits for x in (ids[e] for e in green)), 8)
    trace = deliver_classical(g, ids, f, lab["v1"], intended=tree.links, sinks=tree.sinks)
    assert trace.false_firings == [link("v3", "v5")]
    assert lab["v5"] in trace.reached
    assert trace.delivered == {lab["v6"], lab["v7"]}


def test_tree_reaches_sinks_through_tree_links_only():
    rng = np.random.default_rng(0)
    for _ in range(20):
        g = random_small_graph(rng, 12)
        src, sinks = sample_endpoints(rng, g.n_nodes, min(3, g.n_nodes - 1))
        tree = build_multicast_tree(g, src, sinks)
        reach, frontier = {src}, [src]
        while frontier:
            v = frontier.pop()
            for e in g.out_links[v]:
                if e in tree.links and g.links[e].dst not in reach:
                    reach.add(g.links[e].dst)
                    frontier.append(g.links[e].dst)
        assert set(sinks) <= reach
        # in-degree one everywhere but the source: a tree
        heads = [g.links[e].dst for e in tree.links]
        assert len(heads) == len(set(heads)) and src not in heads
        parents = g.bfs_parents(src)
        hops = 0
        for s in sinks:
            while s != src:
                s = int(parents[s])
                hops += 1
        assert len(tree.links) <= hops


def test_intra_partition_no_pops():
    g = gen_ba(40, 2, seed=1)
    p = Partitioning(g, (0,) * g.n_links)
    tree = build_multicast_tree(g, 0, [5, 17, 33])
    trace = deliver_xbf(g, p, tree)
    assert trace.pops == [] and trace.delivered == {5, 17, 33}
    assert trace.partitions_touched == {0}


def test_single_pop_entering_partition():
    g, lab, link = named([("v5", "v1"), ("v1", "v6"), ("v1", "v2")])
    a = [0] * g.n_links
    a[link("v1", "v6")] = 1
    a[link("v6", "v1")] = 1
    p = Partitioning(g, tuple(a), 4)
    tree = build_multicast_tree(g, lab["v5"], [lab["v6"]])
    h = build_header(tree, p)
    assert h.present == (0, 1)
    trace = deliver_xbf(g, p, tree, h)
    assert trace.pops == [(lab["v1"], 1)]
    assert trace.delivered == {lab["v6"]}
    # zBF untouched by delivery
    assert build_header(tree, p) == h


def test_popper_pops_once_per_partition():
    g, lab, link = named([("s", "v3"), ("v3", "a"), ("v3", "b"), ("v3", "c")])
    a = [0] * g.n_links
    a[link("v3", "a")] = a[link("v3", "b")] = 1
    a[link("v3", "c")] = 2
    p = Partitioning(g, tuple(a), 8)
    tree = build_multicast_tree(g, lab["s"], [lab["a"], lab["b"], lab["c"]])
    trace = deliver_xbf(g, p, tree)
    assert sorted(trace.pops) == [(lab["v3"], 1), (lab["v3"], 2)]


def test_identical_filters_in_two_partitions():
    # both partitions use bit 0 only; the entry partition must still be right
    g, lab, link = named([("a", "b"), ("b", "c")])
    a = [0] * g.n_links
    a[link("b", "c")] = a[link("c", "b")] = 1
    a[link("a", "b")], a[link("b", "a")] = 1, 0
    p = Partitioning(g, tuple(a), 4)
    tree = build_multicast_tree(g, lab["a"], [lab["c"]])
    trace = deliver_xbf(g, p, tree)
    assert trace.delivered == {lab["c"]} and not trace.false_firings


def test_saturated_classical_loops_and_stops():
    g = gen_ba(30, 2, seed=2)
    ids = LinkIdAssignment("random_k", 8, 1, tuple(BitFilter(1, 8) for _ in range(g.n_links)))
    trace = deliver_classical(g, ids, BitFilter(255, 8), 0, ttl=6)
    assert trace.loop_detected
    assert len(trace.reached) == g.n_nodes
    with pytest.raises(SimulationError):
        deliver_classical(g, ids, BitFilter(255, 8), 0, ttl=0)


def test_sparse_classical_is_clean():
    g, lab, link = named([(0, 1), (1, 2), (1, 3), (3, 4)])
    clean = 0
    for seed in range(50):
        ids = gen_random_ids(g.n_links, 1024, 2, seed)
        tree = build_multicast_tree(g, lab[0], [lab[2]])
        trace = deliver_classical(g, ids, ids.encode(tree.links), lab[0], intended=tree.links, sinks=tree.sinks)
        assert trace.delivered == {lab[2]}
        clean += not trace.false_firings
    assert clean >= 48


def test_classical_one_bit_matches_xbf_single_partition():
    g = gen_ba(60, 2, seed=3)
    p = Partitioning(g, (0,) * g.n_links)
    ids = one_bit_ids_for(p)
    rng = np.random.default_rng(1)
    for _ in range(30):
        tree = build_multicast_tree(g, *sample_endpoints(rng, g.n_nodes, 4))
        x = deliver_xbf(g, p, tree)
        c = deliver_classical(g, ids, ids.encode(tree.links), tree.source, intended=tree.links, sinks=tree.sinks)
        assert sorted(x.traversed_links) == sorted(c.traversed_links)
        assert x.delivered == c.delivered and not c.false_firings and not c.loop_detected


@st.composite
def xbf_cases(draw):
    seed = draw(st.integers(0, 2**20))
    rng = np.random.default_rng(seed)
    g = random_small_graph(rng, draw(st.integers(1, 14)))
    cap = draw(st.sampled_from([2, 3, 4, 8, 32]))
    if draw(st.booleans()):
        p = jigsaw(g, None, PartitionConfig(max_partition_size=cap, seed=seed))
    else:
        p = powergraph_partition(g, cap, seed=seed)
    s = draw(st.integers(1, g.n_nodes - 1))
    tree = build_multicast_tree(g, *sample_endpoints(rng, g.n_nodes, s))
    return g, p, tree


@given(xbf_cases())
@settings(max_examples=100, deadline=None)
def test_xbf_exact_delivery(case):
    g, p, tree = case
    trace = deliver_xbf(g, p, tree)
    assert trace.delivered == tree.sinks
    assert not trace.false_firings and not trace.loop_detected and not trace.duplicate_links
    assert set(trace.traversed_links) == tree.links


@given(xbf_cases())
@settings(max_examples=100, deadline=None)
def test_dynamic_pops_match_static(case):
    g, p, tree = case
    h = build_header(tree, p)
    trace = deliver_xbf(g, p, tree, h)
    per_visit = {}
    for node, part in trace.pops:
        per_visit[node] = per_visit.get(node, 0) + 1
    expected = {}
    for visit in trace.visits:
        n = static_pops(p, visit, h.present)
        if n:
            expected[visit[0]] = expected.get(visit[0], 0) + n
    assert per_visit == expected


def test_measure_xbf_single_partition_overhead():
    g = gen_ba(30, 2, seed=0)
    p = Partitioning(g, (0,) * g.n_links)
    tree = build_multicast_tree(g, 0, [7])
    m = measure_xbf(g, p, tree)
    assert m["hdr_bits"] == 256 + 1 + 256
    assert m["pops"] == 0 and m["partitions"] == 1 and m["poppers_on_tree"] == 0


def small_cfg(**kw):
    base = dict(topology=TopoSpec("ba", 80, 2, seed=1), sinks=(1, 5), trials=12, seed=3)
    base.update(kw)
    return ExperimentConfig(**base)


def test_run_experiment_deterministic_and_jobs_independent():
    a = run_experiment(small_cfg())
    b = run_experiment(small_cfg(), jobs=2)
    assert a.rows == b.rows and a.summary == b.summary
    assert len(a.rows) == 24
    assert a.summary["config_hash"] == small_cfg().config_hash() != small_cfg(seed=4).config_hash()
    s = a.summary["by_sinks"]["5"]["pops"]
    assert s["p5"] <= s["mean"] <= s["p95"]


def test_run_experiment_classical():
    res = run_experiment(small_cfg(scheme="classical", classical_m=32, sinks=(10,)))
    assert any(r["false_firings"] > 0 for r in res.rows)
    assert all(r["hdr_bits"] == 32 for r in res.rows)


def test_partitions_touched_grows_with_sinks():
    res = run_experiment(
        ExperimentConfig(topology=TopoSpec("ba", 500, 2), sinks=(1, 5, 10, 20), trials=100, seed=0)
    )
    means = [res.summary["by_sinks"][str(s)]["partitions"]["mean"] for s in (1, 5, 10, 20)]
    assert means == sorted(means)


def test_bad_configs():
    with pytest.raises(SimulationError):
        small_cfg(trials=0)
    with pytest.raises(SimulationError):
        small_cfg(scheme="ip")
    with pytest.raises(SimulationError):
        small_cfg(sinks=())
    with pytest.raises(SimulationError):
        run_experiment(small_cfg(sinks=(500,)))


def test_metrics_csv(tmp_path):
    res = run_experiment(small_cfg(trials=2, sinks=(1,)))
    path = tmp_path / "m.csv"
    write_metrics_csv(res.rows, path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == METRIC_COLUMNS
    assert ",".join(METRIC_COLUMNS) == (
        "topology,scheme,sinks,trial,hdr_bits,hdr_bits_compressed,partitions,poppers_on_tree,pops,false_firings,loop"
    )
    assert len(rows) == 3 and rows[1][-1] == "false"
