"""Per-document intra-relation graphs built from event blocks."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .events import Category, EventBlock, EventElement

log = logging.getLogger(__name__)

GRAPH_FORMAT_VERSION = 1
SIMILARITY_METRICS = ("exact-match", "jaccard-char-3gram", "cosine-pretrained")


class GraphFormatError(ValueError):
    pass


class GraphVersionError(GraphFormatError):
    pass


def edge_type(a: Category, b: Category) -> str:
    """Unordered category pair, e.g. ``ENTITY-PREDICATE``. Six values in total."""
    lo, hi = sorted((a, b), key=lambda c: c.rank)
    return f"{lo.value}-{hi.value}"


EDGE_TYPES = tuple(
    edge_type(a, b) for i, a in enumerate(Category) for b in list(Category)[i:]
)


@dataclass
class Node:
    node_id: int
    surface: str
    category: Category
    in_skeleton: bool = False


@dataclass(frozen=True)
class Edge:
    u: int
    v: int
    edge_type: str


@dataclass
class IntraRelationGraph:
    doc_id: str
    nodes: list[Node] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.nodes)

    @cached_property
    def index(self) -> dict[int, int]:
        """node_id -> row position."""
        return {n.node_id: i for i, n in enumerate(self.nodes)}

    @property
    def adjacency(self) -> np.ndarray:
        n = len(self.nodes)
        A = np.zeros((n, n), dtype=bool)
        idx = self.index
        for e in self.edges:
            A[idx[e.u], idx[e.v]] = A[idx[e.v], idx[e.u]] = True
        return A

    @property
    def skeleton_mask(self) -> np.ndarray:
        return np.array([n.in_skeleton for n in self.nodes], dtype=bool)

    def edge_set(self) -> set[frozenset[int]]:
        return {frozenset((e.u, e.v)) for e in self.edges}

    def validate(self) -> None:
        ids = self.index
        if len(ids) != len(self.nodes):
            raise GraphFormatError(f"graph {self.doc_id!r}: duplicate node ids")
        surfaces = [n.surface for n in self.nodes]
        if len(set(surfaces)) != len(surfaces):
            raise GraphFormatError(f"graph {self.doc_id!r}: duplicate node surfaces")
        seen = set()
        cat = {n.node_id: n.category for n in self.nodes}
        for e in self.edges:
            if e.u not in ids or e.v not in ids:
                raise GraphFormatError(
                    f"graph {self.doc_id!r}: edge references missing node ({e.u}, {e.v})"
                )
            if e.u == e.v:
                raise GraphFormatError(f"graph {self.doc_id!r}: self-edge on node {e.u}")
            key = frozenset((e.u, e.v))
            if key in seen:
                raise GraphFormatError(f"graph {self.doc_id!r}: duplicate edge ({e.u}, {e.v})")
            seen.add(key)
            if e.edge_type != edge_type(cat[e.u], cat[e.v]):
                raise GraphFormatError(
                    f"graph {self.doc_id!r}: edge ({e.u}, {e.v}) has type {e.edge_type!r}, "
                    f"expected {edge_type(cat[e.u], cat[e.v])!r}"
                )

    def copy(self) -> "IntraRelationGraph":
        return IntraRelationGraph(self.doc_id, [replace(n) for n in self.nodes], list(self.edges))


@dataclass(frozen=True)
class GraphBuildConfig:
    similarity_threshold_y: float = 0.8
    similarity_metric: str = "jaccard-char-3gram"
    pretrained_vectors: str | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.similarity_threshold_y <= 1.0:
            raise ValueError("similarity_threshold_y must lie in [0, 1]")
        if self.similarity_metric not in SIMILARITY_METRICS:
            raise ValueError(
                f"unknown similarity_metric {self.similarity_metric!r}; "
                f"choose from {', '.join(SIMILARITY_METRICS)}"
            )
        if self.similarity_metric == "cosine-pretrained" and not self.pretrained_vectors:
            raise ValueError("cosine-pretrained similarity requires pretrained_vectors")


# ---------------------------------------------------------------------------
# similarity


def load_vectors(path: str | Path) -> dict[str, np.ndarray]:
    """Word vectors in whitespace text format (``word v1 v2 ...``), unit-normalized.

    A leading ``count dim`` header line, as written by word2vec, is skipped.
    """
    vecs: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            parts = line.rstrip().split()
            if not parts:
                continue
            if lineno == 0 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue
            v = np.asarray([float(x) for x in parts[1:]], dtype=np.float64)
            norm = np.linalg.norm(v)
            vecs[parts[0].lower()] = v / norm if norm > 0 else v
    return vecs


_VECTOR_CACHE: dict[str, dict[str, np.ndarray]] = {}


def _vectors_for(cfg: GraphBuildConfig) -> dict[str, np.ndarray]:
    key = str(cfg.pretrained_vectors)
    if key not in _VECTOR_CACHE:
        _VECTOR_CACHE[key] = load_vectors(key)
    return _VECTOR_CACHE[key]


def char_ngrams(s: str, n: int = 3) -> set[str]:
    return {s[i : i + n] for i in range(len(s) - n + 1)}


def jaccard_3gram(a: str, b: str) -> float:
    ga, gb = char_ngrams(a), char_ngrams(b)
    if not ga or not gb:
        # too short for any trigram: fall back to identity
        return 1.0 if a == b else 0.0
    return len(ga & gb) / len(ga | gb)


def element_similarity(
    a: EventElement | str, b: EventElement | str, cfg: GraphBuildConfig
) -> float:
    sa = a.surface if isinstance(a, EventElement) else a
    sb = b.surface if isinstance(b, EventElement) else b
    if sa is None or sb is None:
        return 0.0
    if sa == sb:
        return 1.0
    metric = cfg.similarity_metric
    if metric == "exact-match":
        return 0.0
    if metric == "cosine-pretrained":
        vecs = _vectors_for(cfg)
        if sa in vecs and sb in vecs:
            return float(np.clip(vecs[sa] @ vecs[sb], 0.0, 1.0))
        log.debug("OOV pair (%r, %r): falling back to jaccard", sa, sb)
    return jaccard_3gram(sa, sb)


# ---------------------------------------------------------------------------
# construction


def build_graph(
    blocks: Sequence[EventBlock], cfg: GraphBuildConfig | None = None, doc_id: str | None = None
) -> IntraRelationGraph:
    """Build the intra-relation graph of one document.

    Identical surfaces collapse into one node (first-seen category wins). Edges come
    from subject-predicate and predicate-object links inside each block, from
    entity pairs sharing a sentence, and from distinct node pairs whose surface
    similarity reaches the configured threshold.
    """
    cfg = cfg or GraphBuildConfig()
    doc_ids = {b.doc_id for b in blocks}
    if len(doc_ids) > 1:
        raise ValueError(f"blocks span several documents: {sorted(doc_ids)}")
    gid = doc_id if doc_id is not None else (blocks[0].doc_id if blocks else "")

    nodes: list[Node] = []
    by_surface: dict[str, int] = {}

    def node_for(el: EventElement) -> int | None:
        if el.absent:
            return None
        if el.surface not in by_surface:
            by_surface[el.surface] = len(nodes)
            nodes.append(Node(len(nodes), el.surface, el.category))
        return by_surface[el.surface]

    pairs: set[tuple[int, int]] = set()

    def link(u: int | None, v: int | None) -> None:
        if u is None or v is None or u == v:
            return
        pairs.add((min(u, v), max(u, v)))

    sentence_entities: dict[int, list[int]] = {}
    for b in blocks:
        s, p, o = (node_for(e) for e in b.elements)
        link(s, p)
        link(p, o)
        for el, nid in zip(b.elements, (s, p, o)):
            if nid is not None and nodes[nid].category is Category.ENTITY:
                sentence_entities.setdefault(b.sentence_index, []).append(nid)

    for ents in sentence_entities.values():
        for i, u in enumerate(ents):
            for v in ents[i + 1 :]:
                link(u, v)

    y = cfg.similarity_threshold_y
    for i in range(len(nodes)):
        for j in range(i + 1, len(nodes)):
            if element_similarity(nodes[i].surface, nodes[j].surface, cfg) >= y:
                link(i, j)

    edges = [Edge(u, v, edge_type(nodes[u].category, nodes[v].category)) for u, v in sorted(pairs)]
    return IntraRelationGraph(gid, nodes, edges)


def build_graphs(
    blocks_by_doc: dict[str, list[EventBlock]], cfg: GraphBuildConfig | None = None
) -> list[IntraRelationGraph]:
    return [build_graph(bl, cfg, doc_id=d) for d, bl in blocks_by_doc.items()]


# ---------------------------------------------------------------------------
# persistence


def graph_to_json(g: IntraRelationGraph) -> dict:
    return {
        "doc_id": g.doc_id,
        "nodes": [
            {"id": n.node_id, "surface": n.surface, "category": n.category.value,
             "in_skeleton": n.in_skeleton}
            for n in g.nodes
        ],
        "edges": [{"u": e.u, "v": e.v, "type": e.edge_type} for e in g.edges],
    }


def graph_from_json(obj: dict, where: str = "graph") -> IntraRelationGraph:
    try:
        doc_id = obj["doc_id"]
        nodes = [
            Node(int(n["id"]), str(n["surface"]), Category(n["category"]),
                 bool(n.get("in_skeleton", False)))
            for n in obj["nodes"]
        ]
        edges = [Edge(int(e["u"]), int(e["v"]), str(e["type"])) for e in obj["edges"]]
    except KeyError as exc:
        raise GraphFormatError(f"{where}: missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise GraphFormatError(f"{where}: {exc}") from None
    g = IntraRelationGraph(str(doc_id), nodes, edges)
    g.validate()
    return g


def save_graphs(graphs: Iterable[IntraRelationGraph], path: str | Path) -> None:
    payload = {
        "format": "segcl-graphs",
        "version": GRAPH_FORMAT_VERSION,
        "graphs": [graph_to_json(g) for g in graphs],
    }
    Path(path).write_text(json.dumps(payload, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")


def load_graphs(path: str | Path) -> list[IntraRelationGraph]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(payload, dict) or payload.get("format") != "segcl-graphs":
        raise GraphFormatError(f"{path}: not a graph file")
    if payload.get("version") != GRAPH_FORMAT_VERSION:
        raise GraphVersionError(
            f"{path}: graph file version {payload.get('version')!r}, "
            f"expected {GRAPH_FORMAT_VERSION}"
        )
    return [graph_from_json(g, f"{path}: graphs[{i}]") for i, g in enumerate(payload["graphs"])]


def save_graph(g: IntraRelationGraph, path: str | Path) -> None:
    save_graphs([g], path)


def load_graph(path: str | Path) -> IntraRelationGraph:
    graphs = load_graphs(path)
    if len(graphs) != 1:
        raise GraphFormatError(f"{path}: expected exactly one graph, found {len(graphs)}")
    return graphs[0]
