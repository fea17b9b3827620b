"""Shared builders for graph and training tests."""
from __future__ import annotations

import numpy as np

from oracles import central_difference
from segcl.encoder import Encoder, EncoderConfig
from segcl.events import CATEGORIES
from segcl.graph import Edge, IntraRelationGraph, Node, edge_type
from segcl.losses import LossConfig
from segcl.train import backward, batch_objective, init_params


def random_intra_graph(rng: np.random.Generator, n: int, doc_id: str = "g", p_edge: float = 0.5):
    """Connected-ish random graph: a random spanning path plus extra edges."""
    cats = [CATEGORIES[int(k)] for k in rng.integers(0, 3, n)]
    order = rng.permutation(n)
    pairs = {tuple(sorted((int(order[k]), int(order[k + 1])))) for k in range(n - 1)}
    pairs |= {(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < p_edge}
    flags = rng.random(n) < 0.5
    if not flags.any():
        flags[0] = True
    nodes = [Node(i, f"{doc_id}-w{i}", cats[i], bool(flags[i])) for i in range(n)]
    edges = [Edge(u, v, edge_type(cats[u], cats[v])) for u, v in sorted(pairs)]
    return IntraRelationGraph(doc_id, nodes, edges)


SMALL_ENCODER = EncoderConfig(feature_mode="random-learnable", input_dim=4, hidden_dim=3,
                              output_dim=3, dropout=0.0)


def gradient_errors(seed: int, loss_cfg: LossConfig | None = None, eps: float = 1e-6) -> dict[str, float]:
    """Relative error ||g - g_fd|| / max(||g||, ||g_fd||) per parameter on one random 5-node graph.

    The loss is evaluated in eval mode with a fixed negative permutation so it is a
    deterministic function of the parameters.
    """
    rng = np.random.default_rng(seed)
    g = random_intra_graph(rng, 5, doc_id=f"g{seed}")
    loss_cfg = loss_cfg or LossConfig(eta=0.9, theta=0.9)
    params = init_params([g], SMALL_ENCODER, seed)
    # spread the parameters so hinge terms sit well away from their kinks
    for t in params.named().values():
        t.data *= 3.0
    enc = Encoder(SMALL_ENCODER, params)

    def objective():
        obj, _ = batch_objective(enc, [g], loss_cfg, np.random.default_rng([seed, 9]), False,
                                 reg_factor=1e-6)
        return obj

    grads = backward(objective(), params)
    errors = {}
    for name, t in params.named().items():
        fd = central_difference(lambda: objective().item(), t.data, eps)
        denom = max(np.linalg.norm(grads[name]), np.linalg.norm(fd), 1e-12)
        errors[name] = float(np.linalg.norm(grads[name] - fd) / denom)
    return errors
