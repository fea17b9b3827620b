"""Mini-batch SGD over the multi-loss, checkpoints, and document embedding export."""
from __future__ import annotations

import csv
import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .autograd import Tensor
from .encoder import Encoder, EncoderConfig, GraphBatch, ModelParams, init_features
from .graph import IntraRelationGraph
from .losses import LossConfig, LossReport, embedding_penalty, total_loss

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    pass


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.005
    weight_decay: float = 0.0001
    reg_factor: float = 1e-6
    max_epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    convergence_window: int = 10
    convergence_tol: float = 1e-4

    def __post_init__(self) -> None:
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.max_epochs < 0 or self.batch_size < 1:
            raise ValueError("max_epochs must be >= 0 and batch_size >= 1")


@dataclass
class TrainResult:
    params: ModelParams
    history: list[LossReport] = field(default_factory=list)
    stopped: str = "max_epochs"


def trainable_graphs(graphs: Sequence[IntraRelationGraph]) -> list[IntraRelationGraph]:
    """Graphs with at least two nodes; smaller ones cannot produce shuffled negatives."""
    keep = [g for g in graphs if len(g.nodes) >= 2]
    if len(keep) < len(graphs):
        log.warning("skipping %d graph(s) with fewer than two nodes", len(graphs) - len(keep))
    return keep


def init_params(
    graphs: Sequence[IntraRelationGraph], enc_cfg: EncoderConfig, seed: int
) -> ModelParams:
    rng = np.random.default_rng([seed, 1])
    params = ModelParams.init(enc_cfg, rng)
    if enc_cfg.feature_mode == "random-learnable":
        feat_rng = np.random.default_rng([seed, 2])
        for g in graphs:
            X = init_features(g, "random-learnable", enc_cfg.input_dim, feat_rng)
            params.features[g.doc_id] = Tensor(X, True, name=f"features/{g.doc_id}")
    return params


def batch_objective(
    encoder: Encoder,
    graphs: Sequence[IntraRelationGraph],
    loss_cfg: LossConfig,
    rng: np.random.Generator | None,
    training: bool,
    reg_factor: float = 0.0,
    vectors=None,
) -> tuple[Tensor, LossReport]:
    batch = GraphBatch.from_graphs(graphs)
    X = encoder.features(graphs, vectors)
    emb = encoder.forward(X, batch, loss_cfg.k_negatives, rng, training)
    w = batch.node_weights()
    zeta, report = total_loss(emb, loss_cfg, w)
    objective = zeta
    if reg_factor:
        objective = zeta + embedding_penalty(emb.anchor, w) * reg_factor
    return objective, report


def backward(objective: Tensor, params: ModelParams) -> dict[str, np.ndarray]:
    """Gradients of ``objective`` for every trainable tensor (zeros where unused)."""
    tensors = params.named()
    for t in tensors.values():
        t.zero_grad()
    objective.backward()
    grads = {}
    for name, t in tensors.items():
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"non-finite gradient for parameter {name}")
        grads[name] = g
    return grads


def train(
    graphs: Sequence[IntraRelationGraph],
    enc_cfg: EncoderConfig,
    loss_cfg: LossConfig,
    train_cfg: TrainConfig,
    params: ModelParams | None = None,
    vectors=None,
) -> TrainResult:
    """Run SGD until ``max_epochs`` or until the loss stops moving.

    Negatives are re-drawn every epoch. The stop test compares the epoch loss with
    the one ``convergence_window`` epochs earlier.
    """
    if params is None:
        params = init_params(graphs, enc_cfg, train_cfg.seed)
    graphs = trainable_graphs(graphs)
    encoder = Encoder(enc_cfg, params)
    result = TrainResult(params)
    if not graphs:
        result.stopped = "no_graphs"
        return result
    order_rng = np.random.default_rng([train_cfg.seed, 3])
    step_rng = np.random.default_rng([train_cfg.seed, 4])
    lr, wd = train_cfg.learning_rate, train_cfg.weight_decay
    tensors = params.named()

    for epoch in range(train_cfg.max_epochs):
        order = order_rng.permutation(len(graphs))
        sums = np.zeros(4)
        for start in range(0, len(graphs), train_cfg.batch_size):
            chunk = [graphs[i] for i in order[start : start + train_cfg.batch_size]]
            objective, rep = batch_objective(
                encoder, chunk, loss_cfg, step_rng, True, train_cfg.reg_factor, vectors
            )
            if not np.isfinite(objective.item()):
                raise TrainingDivergedError(
                    f"epoch {epoch + 1}: non-finite loss {objective.item()} "
                    f"(zeta_s={rep.zeta_s}, zeta_e={rep.zeta_e}, zeta_u={rep.zeta_u})"
                )
            grads = backward(objective, params)
            if lr > 0:
                for name, t in tensors.items():
                    t.data -= lr * (grads[name] + wd * t.data)
            sums += len(chunk) * np.array(rep.row())
        mean = sums / len(graphs)
        result.history.append(LossReport(*mean))
        log.info("epoch %d  zeta=%.6f  (s=%.4f e=%.4f u=%.4f)", epoch + 1, mean[3], *mean[:3])
        w = train_cfg.convergence_window
        if len(result.history) > w:
            prev = result.history[-1 - w].zeta_total
            cur = result.history[-1].zeta_total
            if abs(cur - prev) <= train_cfg.convergence_tol * max(abs(prev), 1e-12):
                result.stopped = "converged"
                break
    return result


# ---------------------------------------------------------------------------
# persistence


def save_history(history: Sequence[LossReport], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "zeta_s", "zeta_e", "zeta_u", "zeta_total"])
        for k, r in enumerate(history, start=1):
            w.writerow([k, *(repr(float(x)) for x in r.row())])


def save_checkpoint(
    params: ModelParams, path: str | Path, config: dict | None = None
) -> None:
    tensors = {}
    for name, t in params.named().items():
        tensors[name] = {"shape": list(t.shape), "data": [repr(float(x)) for x in t.data.ravel()]}
    payload = {
        "format": "segcl-checkpoint",
        "version": CHECKPOINT_VERSION,
        "skeleton_weight": params.skeleton_weight,
        "config": config or {},
        "params": tensors,
    }
    Path(path).write_text(json.dumps(payload) + "\n", encoding="utf-8")


def load_checkpoint(path: str | Path) -> tuple[ModelParams, dict]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != "segcl-checkpoint":
        raise ValueError(f"{path}: not a checkpoint file")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: checkpoint version {payload.get('version')!r} unsupported")

    def tensor(name):
        entry = payload["params"][name]
        arr = np.array([float(x) for x in entry["data"]], dtype=np.float64).reshape(entry["shape"])
        return Tensor(arr, True, name=name)

    names = payload["params"]
    n_layers = sum(1 for k in names if k.startswith("mlp.W"))
    params = ModelParams(
        [tensor(f"mlp.W{l}") for l in range(n_layers)],
        [tensor(f"mlp.b{l}") for l in range(n_layers)],
        [tensor(f"gcn.W{l}") for l in range(n_layers)],
        float(payload["skeleton_weight"]),
        {k.split("/", 1)[1]: tensor(k) for k in names if k.startswith("features/")},
    )
    params.check_shapes()
    return params, payload.get("config", {})


EMBEDDING_MAGIC = b"SGCE"


def save_embeddings(doc_ids: Sequence[str], vectors: np.ndarray, path: str | Path) -> Path:
    """``doc_id<TAB>v1,v2,...`` text plus a binary sidecar (magic, n, d, float64 data)."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for d, v in zip(doc_ids, vectors):
            fh.write(d + "\t" + ",".join(repr(float(x)) for x in v) + "\n")
    side = path.with_name(path.name + ".bin")
    n, dim = vectors.shape
    with open(side, "wb") as fh:
        fh.write(struct.pack("<4sII", EMBEDDING_MAGIC, n, dim))
        fh.write(np.ascontiguousarray(vectors, dtype="<f8").tobytes())
    return side


def load_embeddings(path: str | Path) -> tuple[list[str], np.ndarray]:
    ids, rows = [], []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").split("\n"), start=1):
        if not line:
            continue
        try:
            d, vec = line.split("\t")
            rows.append([float(x) for x in vec.split(",")])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: malformed embedding row") from None
        ids.append(d)
    return ids, np.array(rows, dtype=np.float64)


def load_embeddings_binary(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    magic, n, dim = struct.unpack_from("<4sII", raw)
    if magic != EMBEDDING_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    return np.frombuffer(raw, dtype="<f8", offset=12).reshape(n, dim).copy()


def config_dict(*cfgs) -> dict:
    return {type(c).__name__: asdict(c) for c in cfgs}
