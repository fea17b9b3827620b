"""Brute-force reference implementations used only by the test-suite.

Nothing here imports the search code it checks: DFS codes are enumerated
exhaustively and patterns are canonicalized by permutation search.
"""
from __future__ import annotations

import itertools
from collections import defaultdict

import numpy as np


# --- labeled graphs as (labels: dict[v] -> int, edges: dict[frozenset] -> int) ----


def dfs_edge_less(a, b):
    """gSpan's DFS lexicographic order between two edge tuples at one position."""
    (ai, aj, *al), (bi, bj, *bl) = a, b
    a_fwd, b_fwd = ai < aj, bi < bj
    if (ai, aj) == (bi, bj):
        return tuple(al) < tuple(bl)
    if not a_fwd and b_fwd:
        return True
    if a_fwd and not b_fwd:
        return False
    if a_fwd and b_fwd:
        return aj < bj or (aj == bj and ai > bi)
    return ai < bi or (ai == bi and aj < bj)


def code_less(c1, c2):
    for a, b in zip(c1, c2):
        if a == b:
            continue
        return dfs_edge_less(a, b)
    return len(c1) < len(c2)


def all_dfs_codes(labels, edges):
    """Every DFS code of a connected labeled graph, by exhaustive search."""
    adj = defaultdict(dict)
    for e, le in edges.items():
        u, v = tuple(e)
        adj[u][v] = le
        adj[v][u] = le
    total = len(edges)
    out = []

    def rec(code, order, parent, used):
        if len(code) == total:
            out.append(tuple(code))
            return
        rm = len(order) - 1
        path = [rm]
        while path[-1] in parent:
            path.append(parent[path[-1]])
        # backward edges from the rightmost vertex
        for k in path[1:]:
            key = frozenset((order[rm], order[k]))
            if key in edges and key not in used:
                rec(code + [(rm, k, labels[order[rm]], edges[key], labels[order[k]])],
                    order, parent, used | {key})
        for k in path:
            for w, le in adj[order[k]].items():
                if w in order:
                    continue
                n = len(order)
                rec(code + [(k, n, labels[order[k]], le, labels[w])],
                    order + [w], {**parent, n: k}, used | {frozenset((order[k], w))})

    for e in edges:
        u, v = tuple(e)
        for a, b in ((u, v), (v, u)):
            rec([(0, 1, labels[a], edges[e], labels[b])], [a, b], {1: 0}, {e})
    return out


def brute_min_code(labels, edges):
    best = None
    for c in all_dfs_codes(labels, edges):
        if best is None or code_less(c, best):
            best = c
    return best


def canonical_form(labels, edges):
    """Permutation-minimal (labels, edges) tuple; equal iff label-isomorphic."""
    verts = sorted(labels, key=lambda v: labels[v])
    groups = [list(g) for _, g in itertools.groupby(verts, key=lambda v: labels[v])]
    best = None
    for perm_parts in itertools.product(*(itertools.permutations(g) for g in groups)):
        order = [v for part in perm_parts for v in part]
        pos = {v: i for i, v in enumerate(order)}
        es = tuple(sorted(
            (min(pos[u], pos[v]), max(pos[u], pos[v]), le)
            for (u, v), le in ((tuple(e), le) for e, le in edges.items())
        ))
        if best is None or es < best:
            best = es
    return (tuple(labels[v] for v in verts), best)


def connected_edge_subsets(edges, max_edges):
    adj_edges = defaultdict(set)
    for e in edges:
        for v in e:
            adj_edges[v].add(e)
    seen = set()
    frontier = [frozenset([e]) for e in edges]
    seen.update(frontier)
    while frontier:
        nxt = []
        for s in frontier:
            yield s
            if len(s) >= max_edges:
                continue
            verts = set().union(*s)
            for v in verts:
                for e in adj_edges[v]:
                    if e not in s:
                        t = s | {e}
                        if t not in seen:
                            seen.add(t)
                            nxt.append(t)
        frontier = nxt


def brute_mine(graphs, min_support, min_edges, max_edges):
    """{canonical form: support} over all connected subgraphs of every graph."""
    support = defaultdict(set)
    for gi, (labels, edges) in enumerate(graphs):
        for s in connected_edge_subsets(list(edges), max_edges):
            if len(s) < min_edges:
                continue
            verts = set().union(*s)
            sub_labels = {v: labels[v] for v in verts}
            sub_edges = {e: edges[e] for e in s}
            support[canonical_form(sub_labels, sub_edges)].add(gi)
    return {k: len(v) for k, v in support.items() if len(v) >= min_support}


def random_labeled_graph(rng: np.random.Generator, max_nodes=8, max_edges=10, n_labels=3):
    n = int(rng.integers(2, max_nodes + 1))
    labels = {v: int(rng.integers(0, n_labels)) for v in range(n)}
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    m = int(rng.integers(1, min(max_edges, len(pairs)) + 1))
    chosen = rng.choice(len(pairs), size=m, replace=False)
    return labels, [pairs[k] for k in sorted(chosen)]


def central_difference(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + eps
        fp = f()
        x[idx] = old - eps
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2 * eps)
    return g
