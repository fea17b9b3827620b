"""Frequent event-skeleton mining with gSpan over category-labeled graphs.

Node labels are the three element categories and edge labels the six category
pairs, both encoded as small integer ranks. A DFS code is a tuple of
``(i, j, label_i, edge_label, label_j)`` edge tuples over discovery indices.
"""
from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .events import CATEGORIES, Category
from .graph import EDGE_TYPES, Edge, IntraRelationGraph, edge_type

EDGE_RANK = {name: i for i, name in enumerate(EDGE_TYPES)}


class DFSEdge(NamedTuple):
    i: int
    j: int
    li: int
    le: int
    lj: int

    @property
    def forward(self) -> bool:
        return self.i < self.j

    def labels(self) -> tuple[int, int, str, str, str]:
        return (self.i, self.j, CATEGORIES[self.li].value, EDGE_TYPES[self.le],
                CATEGORIES[self.lj].value)


DFSCode = tuple[DFSEdge, ...]


class DisconnectedGraphError(ValueError):
    pass


@dataclass
class LabeledGraph:
    """Minimal undirected labeled graph: vertex labels plus labeled adjacency."""

    vlabel: dict[int, int] = field(default_factory=dict)
    adj: dict[int, dict[int, int]] = field(default_factory=dict)

    def add_vertex(self, v: int, label: int) -> None:
        self.vlabel[v] = label
        self.adj.setdefault(v, {})

    def add_edge(self, u: int, v: int, label: int) -> None:
        self.adj[u][v] = label
        self.adj[v][u] = label

    @property
    def n_edges(self) -> int:
        return sum(len(a) for a in self.adj.values()) // 2

    def is_connected(self) -> bool:
        if not self.vlabel:
            return True
        start = next(iter(self.vlabel))
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for w in self.adj[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == len(self.vlabel)

    @classmethod
    def from_intra(cls, g: IntraRelationGraph) -> "LabeledGraph":
        lg = cls()
        for n in g.nodes:
            lg.add_vertex(n.node_id, n.category.rank)
        for e in g.edges:
            lg.add_edge(e.u, e.v, EDGE_RANK[e.edge_type])
        return lg

    @classmethod
    def from_code(cls, code: Sequence[DFSEdge]) -> "LabeledGraph":
        lg = cls()
        for e in code:
            if e.i not in lg.vlabel:
                lg.add_vertex(e.i, e.li)
            if e.j not in lg.vlabel:
                lg.add_vertex(e.j, e.lj)
            lg.add_edge(e.i, e.j, e.le)
        return lg


# ---------------------------------------------------------------------------
# rightmost extension machinery


def rightmost_path(code: Sequence[DFSEdge]) -> list[int]:
    """Vertex indices on the rightmost path, rightmost vertex first."""
    if not code:
        return [0]
    parent = {e.j: e.i for e in code if e.forward}
    v = max(parent) if parent else 0
    path = [v]
    while v in parent:
        v = parent[v]
        path.append(v)
    return path


def _extension_key(e: DFSEdge) -> tuple:
    # gSpan order among extensions of a common prefix: backward edges first (to the
    # shallowest vertex), then forward edges from the deepest rightmost-path vertex.
    if e.forward:
        return (1, -e.i, e.le, e.lj)
    return (0, e.j, e.le)


Embedding = tuple[int, ...]  # pattern vertex index -> graph vertex id


class _ExtensionContext:
    """Per-code data shared by every embedding during rightmost extension."""

    __slots__ = ("rm", "n", "rmpath", "back", "labels", "min_label")

    def __init__(self, code: Sequence[DFSEdge], rmpath: list[int], prune: bool = False):
        # prune: skip forward edges to labels below vertex 0's, never canonical
        self.min_label = code[0].li if (prune and code) else -1
        self.rm = rmpath[0]
        self.rmpath = rmpath
        edges = {(e.i, e.j) for e in code} | {(e.j, e.i) for e in code}
        self.back = [k for k in rmpath[1:] if (self.rm, k) not in edges]
        labels: dict[int, int] = {}
        for e in code:
            labels[e.i] = e.li
            labels[e.j] = e.lj
        self.labels = labels
        self.n = len(labels) if labels else 1

    def extend(self, g: LabeledGraph, emb: Embedding) -> Iterable[tuple[tuple, Embedding]]:
        rm, n, labels = self.rm, self.n, self.labels
        adj_rm = g.adj[emb[rm]]
        l_rm = labels.get(rm, g.vlabel[emb[rm]])
        for k in self.back:
            le = adj_rm.get(emb[k])
            if le is not None:
                yield (rm, k, l_rm, le, labels[k]), emb
        vlabel = g.vlabel
        floor = self.min_label
        for k in self.rmpath:
            lk = labels.get(k, vlabel[emb[k]])
            for w, le in g.adj[emb[k]].items():
                if w not in emb and vlabel[w] >= floor:
                    yield (k, n, lk, le, vlabel[w]), emb + (w,)

    def keys(self, g: LabeledGraph, emb: Embedding) -> Iterable[tuple]:
        """Same candidates as :meth:`extend` without building new embeddings."""
        rm, n, labels = self.rm, self.n, self.labels
        adj_rm = g.adj[emb[rm]]
        l_rm = labels[rm]
        for k in self.back:
            le = adj_rm.get(emb[k])
            if le is not None:
                yield (rm, k, l_rm, le, labels[k])
        vlabel = g.vlabel
        floor = self.min_label
        for k in self.rmpath:
            lk = labels[k]
            for w, le in g.adj[emb[k]].items():
                if w not in emb and vlabel[w] >= floor:
                    yield (k, n, lk, le, vlabel[w])


def _initial_edges(g: LabeledGraph) -> Iterable[tuple[DFSEdge, Embedding]]:
    for u, nbrs in g.adj.items():
        for v, le in nbrs.items():
            yield DFSEdge(0, 1, g.vlabel[u], le, g.vlabel[v]), (u, v)


def min_dfs_code(g: LabeledGraph | IntraRelationGraph) -> DFSCode:
    """Lexicographically minimal DFS code of a connected labeled graph."""
    if isinstance(g, IntraRelationGraph):
        g = LabeledGraph.from_intra(g)
    if not g.is_connected():
        raise DisconnectedGraphError("min_dfs_code needs a connected graph")
    total = g.n_edges
    if total == 0:
        return ()
    first: dict[tuple, list[Embedding]] = defaultdict(list)
    for e, emb in _initial_edges(g):
        first[(e.li, e.le, e.lj)].append(emb)
    best = min(first)
    code: list[DFSEdge] = [DFSEdge(0, 1, *best)]
    embs = first[best]
    while len(code) < total:
        ctx = _ExtensionContext(code, rightmost_path(code))
        cands: dict[tuple, list[Embedding]] = defaultdict(list)
        for emb in embs:
            for key, new in ctx.extend(g, emb):
                cands[key].append(new)
        e_min = min(cands, key=lambda t: _extension_key(DFSEdge(*t)))
        code.append(DFSEdge(*e_min))
        embs = cands[e_min]
    return tuple(code)


def is_min_code(code: Sequence[DFSEdge]) -> bool:
    return tuple(code) == min_dfs_code(LabeledGraph.from_code(code))


# ---------------------------------------------------------------------------
# pruning and mining


@dataclass(frozen=True)
class MinerConfig:
    min_support: int | None = None  # None -> 10% of corpus size, at least 2
    min_edges: int = 2
    max_edges: int = 6
    label_frequency_floor: int = 0
    seed_order: str = "ascending"
    top_m: int = 3

    def __post_init__(self) -> None:
        if self.min_support is not None and self.min_support < 1:
            raise ValueError("min_support must be >= 1")
        if self.min_edges < 1:
            raise ValueError("min_edges must be >= 1")
        if self.min_edges > self.max_edges:
            raise ValueError("min_edges must not exceed max_edges")
        if self.label_frequency_floor < 0:
            raise ValueError("label_frequency_floor must be >= 0")
        if self.seed_order not in ("ascending", "descending"):
            raise ValueError("seed_order must be 'ascending' or 'descending'")
        if self.top_m < 0:
            raise ValueError("top_m must be >= 0")

    def resolved_support(self, n_graphs: int) -> int:
        if self.min_support is not None:
            return self.min_support
        return max(2, -(-n_graphs // 10))


@dataclass
class SkeletonPattern:
    code: DFSCode
    support: int
    matches: dict[str, list[frozenset[int]]] = field(default_factory=dict)

    @property
    def n_edges(self) -> int:
        return len(self.code)

    def graph(self) -> LabeledGraph:
        return LabeledGraph.from_code(self.code)


def prune_infrequent(graphs: Sequence[IntraRelationGraph], floor: int) -> list[IntraRelationGraph]:
    """Drop node categories and edge types present in fewer than ``floor`` graphs.

    Node ids are preserved so matches on the pruned graphs address the originals.
    """
    if floor <= 0:
        return [g.copy() for g in graphs]
    node_df: Counter = Counter()
    edge_df: Counter = Counter()
    for g in graphs:
        node_df.update({n.category for n in g.nodes})
        edge_df.update({e.edge_type for e in g.edges})
    keep_cat = {c for c, k in node_df.items() if k >= floor}
    keep_edge = {t for t, k in edge_df.items() if k >= floor}
    out = []
    for g in graphs:
        h = g.copy()
        h.nodes = [n for n in h.nodes if n.category in keep_cat]
        alive = {n.node_id for n in h.nodes}
        h.edges = [
            e for e in h.edges if e.edge_type in keep_edge and e.u in alive and e.v in alive
        ]
        h.__dict__.pop("index", None)
        out.append(h)
    return out


def mine(graphs: Sequence[IntraRelationGraph], cfg: MinerConfig | None = None) -> list[SkeletonPattern]:
    """All connected patterns with enough per-graph support, in minimal DFS code."""
    cfg = cfg or MinerConfig()
    lgs = [LabeledGraph.from_intra(g) for g in graphs]
    doc_ids = [g.doc_id for g in graphs]
    min_sup = cfg.resolved_support(len(graphs))
    results: list[SkeletonPattern] = []

    seeds: dict[DFSEdge, list[tuple[int, Embedding]]] = defaultdict(list)
    for gi, g in enumerate(lgs):
        for e, emb in _initial_edges(g):
            if e.li <= e.lj:
                seeds[e].append((gi, emb))

    def support(proj: list[tuple[int, Embedding]]) -> int:
        return len({gi for gi, _ in proj})

    frequent = [(e, p) for e, p in seeds.items() if support(p) >= min_sup]
    frequent.sort(key=lambda ep: (ep[0], -support(ep[1])))
    if cfg.seed_order == "descending":
        frequent.reverse()

    def record(code: DFSCode, proj: list[tuple[int, Embedding]]) -> None:
        found: dict[str, dict[frozenset[int], None]] = {}
        for gi, emb in proj:
            found.setdefault(doc_ids[gi], {})[frozenset(emb)] = None
        matches = {d: list(sets) for d, sets in found.items()}
        results.append(SkeletonPattern(code, len(found), matches))

    def grow(code: DFSCode, proj: list[tuple[int, Embedding]]) -> None:
        if len(code) >= cfg.min_edges:
            record(code, proj)
        if len(code) >= cfg.max_edges:
            return
        ctx = _ExtensionContext(code, rightmost_path(code), prune=True)
        # pass 1: supporting graphs per candidate; pass 2: embeddings of survivors only
        graphs_of: dict[tuple, set[int]] = defaultdict(set)
        for gi, emb in proj:
            for key in ctx.keys(lgs[gi], emb):
                graphs_of[key].add(gi)
        keep = {
            k for k, gs in graphs_of.items()
            if len(gs) >= min_sup and is_min_code(code + (DFSEdge(*k),))
        }
        if not keep:
            return
        cands: dict[tuple, list[tuple[int, Embedding]]] = defaultdict(list)
        for gi, emb in proj:
            for key, new in ctx.extend(lgs[gi], emb):
                if key in keep:
                    cands[key].append((gi, new))
        for e in sorted((DFSEdge(*k) for k in keep), key=_extension_key):
            grow(code + (e,), cands[tuple(e)])

    for e, proj in frequent:
        grow((e,), proj)

    results.sort(key=lambda p: (len(p.code), p.code))
    return results


def mark_skeletons(
    graphs: Sequence[IntraRelationGraph], patterns: Sequence[SkeletonPattern], top_m: int = 3
) -> list[IntraRelationGraph]:
    """Flag nodes covered by the ``top_m`` strongest patterns; unmatched graphs get all nodes."""
    ranked = sorted(patterns, key=lambda p: (-p.support, -p.n_edges, p.code))[: max(top_m, 0)]
    out = []
    for g in graphs:
        h = g.copy()
        hit: set[int] = set()
        for p in ranked:
            for s in p.matches.get(g.doc_id, ()):
                hit |= s
        hit &= {n.node_id for n in h.nodes}
        for n in h.nodes:
            n.in_skeleton = (n.node_id in hit) if hit else True
        out.append(h)
    return out


# ---------------------------------------------------------------------------
# persistence and display


def pattern_to_json(p: SkeletonPattern) -> dict:
    return {
        "code": [list(e.labels()) for e in p.code],
        "support": p.support,
        "matches": {d: [sorted(s) for s in sets] for d, sets in sorted(p.matches.items())},
    }


def pattern_from_json(obj: dict) -> SkeletonPattern:
    cat = {c.value: c.rank for c in Category}
    code = tuple(
        DFSEdge(int(i), int(j), cat[li], EDGE_RANK[le], cat[lj]) for i, j, li, le, lj in obj["code"]
    )
    matches = {d: [frozenset(s) for s in sets] for d, sets in obj["matches"].items()}
    return SkeletonPattern(code, int(obj["support"]), matches)


def save_patterns(patterns: Iterable[SkeletonPattern], path: str | Path) -> None:
    data = [pattern_to_json(p) for p in patterns]
    Path(path).write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")


def load_patterns(path: str | Path) -> list[SkeletonPattern]:
    return [pattern_from_json(o) for o in json.loads(Path(path).read_text(encoding="utf-8"))]


_ABBREV = {"ENTITY": "E", "PREDICATE": "P", "ARGUMENT": "A"}


def format_code(code: Sequence[DFSEdge]) -> str:
    parts = []
    for e in code:
        _, _, li, _, lj = e.labels()
        parts.append(f"({e.i},{e.j},{_ABBREV[li]},{_ABBREV[lj]})")
    return " ".join(parts)


def pattern_table(patterns: Sequence[SkeletonPattern]) -> str:
    lines = [f"{'#':>4}  {'support':>7}  {'edges':>5}  code"]
    for k, p in enumerate(sorted(patterns, key=lambda p: (-p.support, -p.n_edges, p.code))):
        lines.append(f"{k:>4}  {p.support:>7}  {p.n_edges:>5}  {format_code(p.code)}")
    return "\n".join(lines)


def code_to_edges(code: Sequence[DFSEdge]) -> list[Edge]:
    return [
        Edge(e.i, e.j, edge_type(CATEGORIES[e.li], CATEGORIES[e.lj])) for e in code
    ]
