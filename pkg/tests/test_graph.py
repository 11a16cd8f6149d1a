import itertools
from collections import deque

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xbf.graph import (
    GraphError,
    UnpartitionableError,
    betweenness_weights,
    build_connectivity_graph,
    build_network_graph,
    collapse_legacy,
    format_edge_list,
    read_edge_list,
    write_edge_list,
)
from xbf.topo import gen_ba, gen_er


def undirected(pairs):
    out = []
    for a, b in pairs:
        out += [(a, b, 1.0), (b, a, 1.0)]
    return out


@st.composite
def connected_graphs(draw, max_nodes=9):
    n = draw(st.integers(2, max_nodes))
    pairs = [(i, draw(st.integers(0, i - 1))) for i in range(1, n)]
    extra = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), max_size=2 * n))
    pairs += [(a, b) for a, b in extra if a != b]
    return build_network_graph(undirected(pairs))


def test_two_way_pair():
    g = build_network_graph([("a", "b", 1), ("b", "a", 1)])
    assert g.n_nodes == 2 and g.n_links == 2
    assert g.labels == ("a", "b")


def test_smaller_component_dropped():
    edges = undirected([("a", "b"), ("b", "c"), ("c", "d")]) + undirected([("x", "y")])
    g = build_network_graph(edges)
    assert set(g.labels) == {"a", "b", "c", "d"}
    assert g.dropped_nodes == 2 and g.dropped_links == 2


def test_duplicates_merged_and_densified():
    g = build_network_graph([(5, 7, 1.0), (7, 5, 2.0), (5, 7, 3.0)])
    assert g.labels == (5, 7)
    assert g.n_links == 2
    assert g.links[g.link_id(0, 1)].traffic == 4.0


def test_rejects_bad_input():
    with pytest.raises(GraphError):
        build_network_graph([])
    with pytest.raises(GraphError, match="1"):
        build_network_graph([("a", "b", 1), ("c", "c", 1)])
    with pytest.raises(GraphError):
        build_network_graph([("a", "b", -1)])


def test_symmetrize_adds_reverse():
    g = build_network_graph([("a", "b", 2.0), ("b", "c", 1.0)], symmetrize=True)
    assert g.n_links == 4
    assert g.links[g.link_id(1, 0)].traffic == 2.0


def test_edge_list_roundtrip(tmp_path):
    g = gen_ba(30, 2, seed=3)
    path = tmp_path / "g.tsv"
    write_edge_list(g, path, "demo")
    text = path.read_text()
    assert text.startswith("# demo\n")
    h = read_edge_list(path)
    assert format_edge_list(h) == format_edge_list(g)


def test_edge_list_two_columns(tmp_path):
    path = tmp_path / "g.txt"
    path.write_text("# comment\na b\nb a\n\n")
    g = read_edge_list(path)
    assert g.n_links == 2 and g.traffic() == [1.0, 1.0]


def test_edge_list_bad_line(tmp_path):
    path = tmp_path / "g.txt"
    path.write_text("a\tb\tx\n")
    with pytest.raises(GraphError, match=":1:"):
        read_edge_list(path)


# connectivity graph


def named_cg(g, cg):
    name = lambda e: "".join(str(g.labels[x]) for x in g.endpoints(e))
    return {(name(cg.members[u][0]), name(cg.members[v][0])) for u, v in cg.edges()}


def test_triangle_connectivity_graph():
    g = build_network_graph(undirected([(2, 3), (3, 4), (4, 2)]))
    cg = build_connectivity_graph(g)
    assert cg.n_vertices == 6
    assert named_cg(g, cg) == {
        ("23", "34"), ("34", "42"), ("42", "23"),
        ("24", "43"), ("43", "32"), ("32", "24"),
    }


def test_single_link_connectivity():
    g = build_network_graph([("a", "b", 1)])
    cg = build_connectivity_graph(g)
    assert cg.n_vertices == 1 and cg.n_edges == 0


def test_directed_cycle_connectivity():
    g = build_network_graph([("a", "b", 1), ("b", "c", 1), ("c", "a", 1)])
    cg = build_connectivity_graph(g)
    assert named_cg(g, cg) == {("ab", "bc"), ("bc", "ca"), ("ca", "ab")}


@given(connected_graphs())
@settings(max_examples=60, deadline=None)
def test_connectivity_graph_oracle(g):
    cg = build_connectivity_graph(g)
    assert cg.n_vertices == g.n_links
    expected = set()
    for e1, e2 in itertools.product(range(g.n_links), repeat=2):
        a, b = g.endpoints(e1)
        b2, c = g.endpoints(e2)
        if b == b2 and c != a:
            expected.add((e1, e2))
    assert {(cg.members[u][0], cg.members[v][0]) for u, v in cg.edges()} == expected
    assert sum(cg.weights) == pytest.approx(sum(g.traffic()))


def test_collapse_identity():
    g = gen_ba(20, 2, seed=1)
    cg = build_connectivity_graph(g)
    assert collapse_legacy(cg, []) is cg


def test_collapse_legacy_switch_counts_its_links():
    # v3 joined to v1, v2 by two-way links: four incident links
    g = build_network_graph(undirected([(1, 3), (2, 3), (1, 2), (2, 4)]))
    cg = build_connectivity_graph(g)
    v3 = g.labels.index(3)
    merged = collapse_legacy(cg, [v3], cap=8)
    sizes = sorted(merged.multiplicity(v) for v in range(merged.n_vertices))
    assert sizes == [1] * (g.n_links - 4) + [4]
    super_v = next(v for v in range(merged.n_vertices) if merged.multiplicity(v) == 4)
    assert set(merged.members[super_v]) == set(g.incident_links(v3))
    assert sum(merged.weights) == pytest.approx(sum(cg.weights))
    assert all(u != v for u, v in merged.edges())


def test_collapse_transitive():
    g = build_network_graph(undirected([(0, 1), (1, 2), (2, 3), (3, 0)]))
    cg = build_connectivity_graph(g)
    merged = collapse_legacy(cg, [0, 1])
    group = max(merged.members, key=len)
    expected = set(g.incident_links(0)) | set(g.incident_links(1))
    assert set(group) == expected


def test_collapse_exceeding_cap():
    g = build_network_graph(undirected([(0, 1), (0, 2), (0, 3)]))
    with pytest.raises(UnpartitionableError):
        collapse_legacy(build_connectivity_graph(g), [0], cap=5)


@given(connected_graphs(), st.data())
@settings(max_examples=40, deadline=None)
def test_collapse_preserves_totals(g, data):
    legacy = data.draw(st.sets(st.integers(0, g.n_nodes - 1), max_size=3))
    cg = build_connectivity_graph(g, [float(i + 1) for i in range(g.n_links)])
    merged = collapse_legacy(cg, legacy)
    assert sorted(e for grp in merged.members for e in grp) == list(range(g.n_links))
    assert sum(merged.weights) == pytest.approx(sum(cg.weights))
    for node in legacy:
        assert len({merged.vertex_of[e] for e in g.incident_links(node)}) == 1


# betweenness


def brute_edge_betweenness(g):
    """Enumerate every shortest path explicitly."""
    n = g.n_nodes
    adj = {v: [g.links[e].dst for e in g.out_links[v]] for v in range(n)}
    bc = [0.0] * g.n_links
    for s in range(n):
        for t in range(n):
            if s == t:
                continue
            paths = []
            queue = deque([[s]])
            best = None
            while queue:
                p = queue.popleft()
                if best is not None and len(p) > best:
                    break
                if p[-1] == t:
                    best = len(p)
                    paths.append(p)
                    continue
                for w in adj[p[-1]]:
                    if w not in p:
                        queue.append(p + [w])
            for p in paths:
                for a, b in zip(p, p[1:]):
                    bc[g.link_id(a, b)] += 1 / len(paths)
    return [x / (n * (n - 1)) for x in bc]


def test_betweenness_pair():
    g = build_network_graph(undirected([(0, 1)]))
    assert betweenness_weights(g) == [0.5, 0.5]


def test_betweenness_star():
    g = build_network_graph(undirected([("c", "x"), ("c", "y"), ("c", "z")]))
    w = betweenness_weights(g)
    # leaf->centre link: 1 path to c plus 2 through to the other leaves
    c = g.labels.index("c")
    for e in g.in_links[c]:
        assert w[e] == pytest.approx(3 / 12)
    assert w == pytest.approx(brute_edge_betweenness(g))


def test_betweenness_symmetric_path():
    g = build_network_graph(undirected([("a", "b"), ("b", "c")]))
    w = betweenness_weights(g)
    a, b, c = (g.labels.index(x) for x in "abc")
    assert w[g.link_id(a, b)] == pytest.approx(w[g.link_id(b, c)])
    assert w[g.link_id(a, b)] == pytest.approx(w[g.link_id(c, b)])


@given(connected_graphs(max_nodes=7))
@settings(max_examples=40, deadline=None)
def test_betweenness_matches_enumeration(g):
    assert betweenness_weights(g) == pytest.approx(brute_edge_betweenness(g))


def test_betweenness_matches_networkx():
    g = gen_er(40, 0.15, seed=2)
    G = nx.DiGraph()
    G.add_edges_from((e.src, e.dst) for e in g.links)
    ref = nx.edge_betweenness_centrality(G, normalized=False)
    n = g.n_nodes
    w = betweenness_weights(g)
    for e, link in enumerate(g.links):
        assert w[e] == pytest.approx(ref[(link.src, link.dst)] / (n * (n - 1)))


# BFS


def python_bfs_parents(g, source):
    parent = [-1] * g.n_nodes
    seen = {source}
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for w in sorted(g.successors(v)):
            if w not in seen:
                seen.add(w)
                parent[w] = v
                queue.append(w)
    return parent


@given(connected_graphs(max_nodes=12), st.data())
@settings(max_examples=60, deadline=None)
def test_bfs_parents_lowest_id_first_discoverer(g, data):
    s = data.draw(st.integers(0, g.n_nodes - 1))
    assert g.bfs_parents(s).tolist() == python_bfs_parents(g, s)


def test_diameter_and_distances():
    g = build_network_graph(undirected([(0, 1), (1, 2), (2, 3)]))
    assert g.diameter == 3
    assert g.bfs_distances(0) == [0, 1, 2, 3]
    G = nx.DiGraph((e.src, e.dst) for e in gen_ba(60, 2, 4).links)
    assert gen_ba(60, 2, 4).diameter == nx.diameter(G)


def test_graph_arrays_consistent():
    g = gen_er(50, seed=5)
    for v in range(g.n_nodes):
        for e in g.out_links[v]:
            assert g.links[e].src == v
        for e in g.in_links[v]:
            assert g.links[e].dst == v
        dsts = [g.links[e].dst for e in g.out_links[v]]
        assert dsts == sorted(dsts)
    for e in range(g.n_links):
        r = g.reverse(e)
        assert r is not None and g.endpoints(r) == g.endpoints(e)[::-1]
    assert np.all(np.asarray(g.bfs_parents(0)) < g.n_nodes)
