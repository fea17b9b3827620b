"""Anchor, negative and positive embeddings for intra-relation graphs."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .autograd import (
    Tensor, as_tensor, concat, const_matmul, leaky_relu, matmul, mul, sigmoid, take_rows,
)
from .graph import IntraRelationGraph

FEATURE_MODES = ("onehot-hashed", "pretrained", "random-learnable")


@dataclass(frozen=True)
class EncoderConfig:
    feature_mode: str = "onehot-hashed"
    input_dim: int = 256
    hidden_dim: int = 128
    output_dim: int = 128
    skeleton_weight: float = 1.5
    leaky_slope: float = 0.01
    dropout: float = 0.4
    event_source: str = "structural"  # rows averaged for the event positive
    readout_source: str = "anchor"
    pretrained_vectors: str | None = None

    def __post_init__(self) -> None:
        if self.feature_mode not in FEATURE_MODES:
            raise ValueError(f"feature_mode must be one of {FEATURE_MODES}")
        if self.input_dim < 1 or self.hidden_dim < 1 or self.output_dim < 1:
            raise ValueError("layer dimensions must be >= 1")
        if self.skeleton_weight <= 0:
            raise ValueError("skeleton_weight must be positive")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")
        if self.event_source not in ("structural", "anchor"):
            raise ValueError("event_source must be 'structural' or 'anchor'")
        if self.readout_source not in ("anchor", "structural"):
            raise ValueError("readout_source must be 'anchor' or 'structural'")
        if self.feature_mode == "pretrained" and not self.pretrained_vectors:
            raise ValueError("pretrained feature mode requires pretrained_vectors")


# ---------------------------------------------------------------------------
# input features


def _bucket(surface: str, d0: int) -> int:
    h = hashlib.blake2b(surface.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(h, "little") % d0


def init_features(
    graph: IntraRelationGraph,
    mode: str,
    d0: int,
    rng: np.random.Generator | None = None,
    vectors: dict[str, np.ndarray] | None = None,
) -> np.ndarray:
    """Initial node feature matrix, one row per node."""
    if d0 < 1:
        raise ValueError("d0 must be >= 1")
    n = len(graph.nodes)
    if mode == "random-learnable":
        rng = rng if rng is not None else np.random.default_rng()
        bound = 1.0 / np.sqrt(d0)
        return rng.uniform(-bound, bound, size=(n, d0))
    X = np.zeros((n, d0))
    if mode == "onehot-hashed":
        for i, node in enumerate(graph.nodes):
            X[i, _bucket(node.surface, d0)] = 1.0
        return X
    if mode == "pretrained":
        if vectors is None:
            raise ValueError("pretrained feature mode requires a vectors file")
        for i, node in enumerate(graph.nodes):
            v = vectors.get(node.surface)
            if v is None:
                X[i, _bucket(node.surface, d0)] = 1.0
            else:
                if v.shape[0] != d0:
                    raise ValueError(f"vector dim {v.shape[0]} != input_dim {d0}")
                X[i] = v
        return X
    raise ValueError(f"unknown feature mode {mode!r}")


# ---------------------------------------------------------------------------
# parameters


def _uniform(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class ModelParams:
    """Learnable tensors: two sigmoid MLP layers, two GCN layers, optional node features."""

    mlp_weights: list[Tensor]
    mlp_biases: list[Tensor]
    gcn_weights: list[Tensor]
    skeleton_weight: float
    features: dict[str, Tensor] = field(default_factory=dict)

    @classmethod
    def init(cls, cfg: EncoderConfig, rng: np.random.Generator) -> "ModelParams":
        d0, h, d = cfg.input_dim, cfg.hidden_dim, cfg.output_dim
        dims = [(d0, h), (h, d)]
        mlp_w = [Tensor(_uniform(rng, a, (a, b)), True, name=f"mlp.W{l}") for l, (a, b) in enumerate(dims)]
        mlp_b = [Tensor(_uniform(rng, a, (b,)), True, name=f"mlp.b{l}") for l, (a, b) in enumerate(dims)]
        gcn_w = [
            Tensor(_uniform(rng, 2 * a, (2 * a, b)), True, name=f"gcn.W{l}")
            for l, (a, b) in enumerate(dims)
        ]
        return cls(mlp_w, mlp_b, gcn_w, cfg.skeleton_weight)

    def named(self) -> dict[str, Tensor]:
        out = {t.name: t for t in (*self.mlp_weights, *self.mlp_biases, *self.gcn_weights)}
        for doc_id, t in self.features.items():
            out[f"features/{doc_id}"] = t
        return out

    def trainable(self) -> list[Tensor]:
        return list(self.named().values())

    def check_shapes(self) -> None:
        w = self.mlp_weights
        for a, b in zip(w, w[1:]):
            if a.shape[1] != b.shape[0]:
                raise ValueError("MLP layer shapes do not chain")
        g = self.gcn_weights
        if g[0].shape[0] != 2 * w[0].shape[0]:
            raise ValueError("first GCN layer must take 2 * input_dim inputs")
        for a, b in zip(g, g[1:]):
            if 2 * a.shape[1] != b.shape[0]:
                raise ValueError("GCN layer shapes do not chain")
        if g[-1].shape[1] != w[-1].shape[1]:
            raise ValueError("MLP and GCN output dims differ")


# ---------------------------------------------------------------------------
# graph operators


def normalized_adjacency(A: np.ndarray) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2 with degrees taken on A + I."""
    A_hat = A.astype(np.float64) + np.eye(A.shape[0])
    dinv = 1.0 / np.sqrt(A_hat.sum(axis=1))
    return A_hat * dinv[:, None] * dinv[None, :]


def neighbor_mean_operator(A: np.ndarray) -> np.ndarray:
    """Row-mean over neighbours; isolated nodes get a zero row."""
    A = A.astype(np.float64)
    deg = A.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(deg[:, None] > 0, A / np.maximum(deg, 1.0)[:, None], 0.0)


@dataclass
class GraphBatch:
    """Several graphs stacked block-diagonally so one forward pass covers them all."""

    doc_ids: list[str]
    sizes: np.ndarray
    offsets: np.ndarray
    adj_norm: sp.csr_matrix
    nbr_mean: sp.csr_matrix
    skeleton: np.ndarray
    graph_of_node: np.ndarray

    @classmethod
    def from_graphs(cls, graphs: Sequence[IntraRelationGraph]) -> "GraphBatch":
        adjs = [g.adjacency for g in graphs]
        sizes = np.array([len(g.nodes) for g in graphs], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        return cls(
            doc_ids=[g.doc_id for g in graphs],
            sizes=sizes,
            offsets=offsets,
            adj_norm=sp.block_diag([normalized_adjacency(a) for a in adjs], format="csr"),
            nbr_mean=sp.block_diag([neighbor_mean_operator(a) for a in adjs], format="csr"),
            skeleton=np.concatenate([g.skeleton_mask for g in graphs]) if graphs else np.zeros(0, bool),
            graph_of_node=np.repeat(np.arange(len(graphs)), sizes),
        )

    @property
    def n_nodes(self) -> int:
        return int(self.sizes.sum())

    def node_weights(self) -> np.ndarray:
        """1 / (n_g * G) per node: each graph counts equally regardless of size."""
        G = len(self.sizes)
        return 1.0 / (self.sizes[self.graph_of_node] * G)

    def skeleton_pool(self) -> np.ndarray:
        P = np.zeros((len(self.sizes), self.n_nodes))
        P[self.graph_of_node[self.skeleton], np.nonzero(self.skeleton)[0]] = 1.0
        counts = P.sum(axis=1, keepdims=True)
        if (counts == 0).any():
            raise ValueError("every graph needs at least one skeleton node")
        return P / counts

    def mean_pool(self) -> np.ndarray:
        P = np.zeros((len(self.sizes), self.n_nodes))
        P[self.graph_of_node, np.arange(self.n_nodes)] = 1.0
        return P / np.maximum(P.sum(axis=1, keepdims=True), 1.0)


# ---------------------------------------------------------------------------
# forward passes


def _dropout(H: Tensor, p: float, rng: np.random.Generator | None) -> Tensor:
    if rng is None or p <= 0:
        return H
    keep = (rng.random(H.shape) >= p) / (1.0 - p)
    return mul(H, keep)


def mlp_forward(
    X, params: ModelParams, dropout: float = 0.0, rng: np.random.Generator | None = None
) -> Tensor:
    """Stacked sigmoid(H W + b) layers; the last layer's output is the anchor."""
    H = as_tensor(X)
    L = len(params.mlp_weights)
    for l, (W, b) in enumerate(zip(params.mlp_weights, params.mlp_biases)):
        if H.shape[1] != W.shape[0]:
            raise ValueError(f"MLP layer {l}: input dim {H.shape[1]} != {W.shape[0]}")
        H = sigmoid(matmul(H, W) + b)
        if l < L - 1:
            H = _dropout(H, dropout, rng)
    return H


def gcn_layers(
    X,
    adj_norm,
    nbr_mean,
    skeleton: np.ndarray,
    params: ModelParams,
    slope: float = 0.01,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """LeakyReLU(A_norm . rho-scaled [H || mean_nbr(H)] . W) per layer."""
    H = as_tensor(X)
    scale = np.where(skeleton, params.skeleton_weight, 1.0)[:, None]
    L = len(params.gcn_weights)
    for l, W in enumerate(params.gcn_weights):
        M = concat([H, const_matmul(nbr_mean, H)], axis=1)
        if M.shape[1] != W.shape[0]:
            raise ValueError(f"GCN layer {l}: input dim {M.shape[1]} != {W.shape[0]}")
        M = mul(M, scale)
        H = leaky_relu(matmul(const_matmul(adj_norm, M), W), slope)
        if l < L - 1:
            H = _dropout(H, dropout, rng)
    return H


def gcn_forward(graph: IntraRelationGraph, X, params: ModelParams, slope: float = 0.01) -> Tensor:
    if len(graph.nodes) == 0:
        raise ValueError("gcn_forward needs a nonempty graph")
    A = graph.adjacency
    return gcn_layers(X, normalized_adjacency(A), neighbor_mean_operator(A), graph.skeleton_mask,
                      params, slope)


def derangement(n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random permutation of range(n) with no fixed point (rejection sampling)."""
    if n < 2:
        raise ValueError("cannot shuffle a single node")
    while True:
        p = rng.permutation(n)
        if not (p == np.arange(n)).any():
            return p


def shuffle_negative(H, rng: np.random.Generator | int, k: int = 1) -> list:
    """k row-deranged copies of H (Tensor in, Tensors out; arrays in, arrays out)."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    n = H.shape[0]
    perms = [derangement(n, rng) for _ in range(k)]
    if isinstance(H, Tensor):
        return [take_rows(H, p) for p in perms]
    H = np.asarray(H)
    return [H[p] for p in perms]


def batch_negative_index(batch: GraphBatch, rng: np.random.Generator) -> np.ndarray:
    """One global row index deranging the rows of every graph within itself."""
    idx = np.empty(batch.n_nodes, dtype=np.int64)
    for o, n in zip(batch.offsets, batch.sizes):
        idx[o : o + n] = o + derangement(int(n), rng)
    return idx


def event_embedding(H, graph: IntraRelationGraph | np.ndarray):
    """Mean of the rows flagged as event-skeleton nodes (1 x d)."""
    mask = graph if isinstance(graph, np.ndarray) else graph.skeleton_mask
    if not mask.any():
        raise ValueError("no skeleton node flagged")
    w = (mask / mask.sum())[None, :]
    if isinstance(H, Tensor):
        return matmul(w, H)
    return w @ np.asarray(H)


def readout(H) -> tuple[np.ndarray, bool]:
    """Column mean of a node embedding matrix; (zero vector, True) for an empty graph."""
    H = H.data if isinstance(H, Tensor) else np.asarray(H)
    if H.shape[0] == 0:
        return np.zeros(H.shape[1]), True
    return H.mean(axis=0), False


@dataclass
class EmbeddingSet:
    anchor: Tensor
    negatives: list[Tensor]
    structural: Tensor
    event: Tensor  # one row per graph
    event_rows: Tensor  # event positive broadcast to every node


class Encoder:
    def __init__(self, cfg: EncoderConfig, params: ModelParams):
        params.check_shapes()
        self.cfg = cfg
        self.params = params

    def features(self, batch_graphs: Sequence[IntraRelationGraph], vectors=None) -> Tensor:
        if self.cfg.feature_mode == "random-learnable":
            missing = [g.doc_id for g in batch_graphs if g.doc_id not in self.params.features]
            if missing:
                raise KeyError(f"no learnable features for documents {missing[:5]}")
            return concat([self.params.features[g.doc_id] for g in batch_graphs], axis=0)
        mats = [init_features(g, self.cfg.feature_mode, self.cfg.input_dim, vectors=vectors)
                for g in batch_graphs]
        return Tensor(np.concatenate(mats, axis=0) if mats else np.zeros((0, self.cfg.input_dim)))

    def forward(
        self,
        X: Tensor,
        batch: GraphBatch,
        k_negatives: int = 1,
        rng: np.random.Generator | None = None,
        training: bool = False,
    ) -> EmbeddingSet:
        drop_rng = rng if training else None
        p = self.cfg.dropout
        H = mlp_forward(X, self.params, p, drop_rng)
        Hs = gcn_layers(X, batch.adj_norm, batch.nbr_mean, batch.skeleton, self.params,
                        self.cfg.leaky_slope, p, drop_rng)
        neg_rng = rng if rng is not None else np.random.default_rng(0)
        negs = [take_rows(H, batch_negative_index(batch, neg_rng)) for _ in range(k_negatives)]
        src = Hs if self.cfg.event_source == "structural" else H
        He = const_matmul(sp.csr_matrix(batch.skeleton_pool()), src)
        He_rows = take_rows(He, batch.graph_of_node)
        return EmbeddingSet(H, negs, Hs, He, He_rows)

    def embed(self, graphs: Sequence[IntraRelationGraph], vectors=None) -> tuple[np.ndarray, list[str]]:
        """Document vectors (eval mode) and the ids of empty graphs."""
        out = np.zeros((len(graphs), self.cfg.output_dim))
        empty = []
        for i, g in enumerate(graphs):
            if len(g.nodes) == 0:
                empty.append(g.doc_id)
                continue
            X = self.features([g], vectors)
            if self.cfg.readout_source == "anchor":
                H = mlp_forward(X, self.params)
            else:
                A = g.adjacency
                H = gcn_layers(X, normalized_adjacency(A), neighbor_mean_operator(A),
                               g.skeleton_mask, self.params, self.cfg.leaky_slope)
            out[i], _ = readout(H)
        return out, empty
