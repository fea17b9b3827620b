import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_min_code, brute_mine, canonical_form, random_labeled_graph
from segcl.events import CATEGORIES, Category
from segcl.graph import Edge, IntraRelationGraph, Node, edge_type
from segcl.gspan import (
    EDGE_RANK,
    DisconnectedGraphError,
    LabeledGraph,
    MinerConfig,
    SkeletonPattern,
    load_patterns,
    mark_skeletons,
    min_dfs_code,
    mine,
    pattern_table,
    prune_infrequent,
    save_patterns,
)

E, P, A = Category.ENTITY, Category.PREDICATE, Category.ARGUMENT


def intra(doc_id, cats, pairs):
    nodes = [Node(i, f"{doc_id}-{i}", c) for i, c in enumerate(cats)]
    edges = [Edge(u, v, edge_type(cats[u], cats[v])) for u, v in pairs]
    return IntraRelationGraph(doc_id, nodes, edges)


def as_oracle(labels, pairs):
    return labels, {frozenset(p): EDGE_RANK[edge_type(CATEGORIES[labels[p[0]]], CATEGORIES[labels[p[1]]])]
                    for p in pairs}


def test_single_edge_code():
    (e,) = min_dfs_code(intra("g", [P, E], [(0, 1)]))
    assert e.labels() == (0, 1, "ENTITY", "ENTITY-PREDICATE", "PREDICATE")


def test_triangle_relabel_invariant():
    base = min_dfs_code(intra("g", [E, E, E], [(0, 1), (1, 2), (0, 2)]))
    for perm in itertools.permutations(range(3)):
        pairs = [(perm[u], perm[v]) for u, v in [(0, 1), (1, 2), (0, 2)]]
        assert min_dfs_code(intra("g", [E, E, E], pairs)) == base


def test_path_vs_star_differ():
    labels = [P, E, E, E]
    path = intra("p", labels, [(1, 0), (0, 2), (2, 3)])
    star = intra("s", labels, [(0, 1), (0, 2), (0, 3)])
    cp, cs = min_dfs_code(path), min_dfs_code(star)
    assert cp != cs
    for g, c in ((path, cp), (star, cs)):
        lab = {n.node_id: n.category.rank for n in g.nodes}
        assert tuple(c) == brute_min_code(*as_oracle(lab, [(e.u, e.v) for e in g.edges]))


def test_disconnected_rejected():
    with pytest.raises(DisconnectedGraphError):
        min_dfs_code(intra("g", [E, P, E, P], [(0, 1), (2, 3)]))


def _connected(labels, pairs):
    lg = LabeledGraph()
    for v, l in labels.items():
        lg.add_vertex(v, l)
    for u, v in pairs:
        lg.add_edge(u, v, 0)
    return lg.is_connected()


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_min_code_matches_exhaustive_enumeration(seed):
    rng = np.random.default_rng(seed)
    labels, pairs = random_labeled_graph(rng, max_nodes=6, max_edges=7)
    used = {v for p in pairs for v in p}
    labels = {v: l for v, l in labels.items() if v in used}
    if not _connected(labels, pairs):
        return
    g = intra("g", [CATEGORIES[labels.get(i, 0)] for i in range(max(labels) + 1)], pairs)
    g.nodes = [n for n in g.nodes if n.node_id in labels]
    code = min_dfs_code(g)
    assert tuple(code) == brute_min_code(*as_oracle(labels, pairs))
    # relabeling the vertices never changes the code
    perm = rng.permutation(max(labels) + 1)
    g2 = intra("g", [CATEGORIES[0]] * (max(labels) + 1), [])
    g2.nodes = [Node(int(perm[v]), str(v), CATEGORIES[labels[v]]) for v in labels]
    g2.edges = [Edge(int(perm[u]), int(perm[v]), e.edge_type) for (u, v), e in zip(pairs, g.edges)]
    assert min_dfs_code(g2) == code


def _random_corpus(rng, n_graphs=10):
    graphs, oracle = [], []
    for k in range(n_graphs):
        labels, pairs = random_labeled_graph(rng)
        graphs.append(intra(str(k), [CATEGORIES[labels[v]] for v in range(len(labels))], pairs))
        oracle.append(as_oracle(labels, pairs))
    return graphs, oracle


def _pattern_map(patterns):
    out = {}
    for p in patterns:
        lg = p.graph()
        edges = {}
        for u, nb in lg.adj.items():
            for v, le in nb.items():
                edges[frozenset((u, v))] = le
        key = canonical_form(lg.vlabel, edges)
        assert key not in out, "duplicate pattern"
        out[key] = p.support
    return out


@pytest.mark.parametrize("seed", range(8))
def test_mine_matches_bruteforce(seed):
    rng = np.random.default_rng(1000 + seed)
    graphs, oracle = _random_corpus(rng)
    for min_sup in (2, 4):
        pats = mine(graphs, MinerConfig(min_support=min_sup, min_edges=1, max_edges=10))
        assert _pattern_map(pats) == brute_mine(oracle, min_sup, 1, 10)


def test_mine_duplicates_and_thresholds():
    g = [intra(str(k), [E, P, A], [(0, 1), (1, 2)]) for k in range(2)]
    pats = mine(g, MinerConfig(min_support=2, min_edges=1, max_edges=6))
    assert sorted(p.n_edges for p in pats) == [1, 1, 2]
    assert all(p.support == 2 for p in pats)
    assert [p.n_edges for p in mine(g, MinerConfig(min_support=2, min_edges=2))] == [2]
    assert mine(g, MinerConfig(min_support=3, min_edges=1)) == []


def test_seed_order_does_not_change_result():
    rng = np.random.default_rng(7)
    graphs, _ = _random_corpus(rng)
    a = mine(graphs, MinerConfig(min_support=2, min_edges=1, max_edges=5))
    b = mine(graphs, MinerConfig(min_support=2, min_edges=1, max_edges=5, seed_order="descending"))
    assert [(p.code, p.support) for p in a] == [(p.code, p.support) for p in b]


@pytest.mark.parametrize("seed", range(4))
def test_pattern_invariants(seed):
    rng = np.random.default_rng(seed)
    graphs, _ = _random_corpus(rng)
    pats = mine(graphs, MinerConfig(min_support=2, min_edges=1, max_edges=6))
    by_code = {p.code: p for p in pats}
    gmap = {g.doc_id: g for g in graphs}
    for p in pats:
        assert min_dfs_code(p.graph()) == p.code
        assert p.support == len(p.matches) >= 2
        # every proper prefix is itself a reported, at-least-as-frequent pattern
        if p.n_edges > 1:
            assert by_code[p.code[:-1]].support >= p.support
        for doc, sets in p.matches.items():
            g = gmap[doc]
            cat = {n.node_id: n.category.rank for n in g.nodes}
            for s in sets:
                sub_edges = {frozenset((e.u, e.v)): EDGE_RANK[e.edge_type]
                             for e in g.edges if e.u in s and e.v in s}
                assert len(s) == len(p.graph().vlabel)
                assert len(sub_edges) >= p.n_edges  # pattern embeds in the induced subgraph


def test_prune_infrequent():
    graphs = [intra(str(k), [E, P, E], [(0, 1), (1, 2)]) for k in range(9)]
    graphs.append(intra("9", [E, P, A], [(0, 1), (1, 2)]))
    assert prune_infrequent(graphs, 0) == graphs
    pruned = prune_infrequent(graphs, 2)
    assert all(n.category is not A for g in pruned for n in g.nodes)
    assert len(pruned[9].nodes) == 2 and len(pruned[9].edges) == 1
    assert pruned[:9] == graphs[:9]
    for g in pruned:
        M = g.adjacency
        assert (M == M.T).all()


def test_mark_skeletons():
    star = intra("s", [P, E, E, E], [(0, 1), (0, 2), (0, 3)])
    path = intra("p", [E, P, E], [(0, 1), (1, 2)])
    lone = intra("x", [A, A], [(0, 1)])
    pat = [p for p in mine([star, path], MinerConfig(min_support=2, min_edges=2)) if p.n_edges == 2]
    assert len(pat) == 1
    marked = {g.doc_id: g for g in mark_skeletons([star, path, lone], pat, top_m=1)}
    assert [n.in_skeleton for n in marked["p"].nodes] == [True, True, True]
    assert [n.in_skeleton for n in marked["x"].nodes] == [True, True]  # fallback
    assert sum(n.in_skeleton for n in marked["s"].nodes) == 4  # union of all E-P-E matches
    only = mark_skeletons([path, lone], pat, top_m=0)
    assert all(n.in_skeleton for g in only for n in g.nodes)


def test_mark_single_match_exact_nodes():
    g = intra("g", [E, P, E, A, A], [(0, 1), (1, 2), (2, 3), (3, 4)])
    other = intra("h", [E, P, E], [(0, 1), (1, 2)])
    pat = [p for p in mine([g, other], MinerConfig(min_support=2, min_edges=2)) if p.n_edges == 2]
    (marked,) = mark_skeletons([g], pat, top_m=1)
    assert [n.node_id for n in marked.nodes if n.in_skeleton] == [0, 1, 2]


def test_patterns_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    graphs, _ = _random_corpus(rng)
    pats = mine(graphs, MinerConfig(min_support=3, min_edges=1, max_edges=4))
    save_patterns(pats, tmp_path / "p.json")
    back = load_patterns(tmp_path / "p.json")
    assert [(p.code, p.support, p.matches) for p in back] == [(p.code, p.support, {d: s for d, s in p.matches.items()}) for p in pats]
    assert "support" in pattern_table(pats)
