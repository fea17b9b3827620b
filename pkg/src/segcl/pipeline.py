"""Stage functions shared by the CLI, the experiment scripts and the acceptance suite."""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import PipelineConfig
from .encoder import Encoder
from .events import (
    DEFAULT_STOPWORDS, Corpus, EventBlock, extract_events_heuristic, filter_vocabulary,
    group_by_doc, load_wordlist,
)
from .graph import IntraRelationGraph, build_graph, load_vectors
from .gspan import SkeletonPattern, mark_skeletons, mine, prune_infrequent
from .losses import LossConfig
from .probe import RepeatedReport, probe_embeddings
from .train import TrainResult, init_params, train

log = logging.getLogger(__name__)

SWEEP_GRIDS = {
    "eta": [round(0.1 * k, 1) for k in range(1, 10)],
    "theta": [round(0.1 * k, 1) for k in range(1, 10)],
    "we": [10.0**k for k in range(-3, 4)],
    "ws": [10.0**k for k in range(-3, 4)],
}
SWEEP_FIELDS = {"eta": "eta", "theta": "theta", "we": "w_e", "ws": "w_s"}


def extract(corpus: Corpus, cfg: PipelineConfig) -> list[EventBlock]:
    c = cfg.corpus
    stop = load_wordlist(c.stopwords) if c.stopwords else DEFAULT_STOPWORDS
    ents = load_wordlist(c.entities) if c.entities else set()
    if c.min_count > 1:
        corpus = filter_vocabulary(corpus, (), c.min_count)
    return [b for d in corpus for b in extract_events_heuristic(d, stop, ents)]


def build(
    blocks: Sequence[EventBlock], cfg: PipelineConfig, doc_ids: Sequence[str] | None = None
) -> list[IntraRelationGraph]:
    """One graph per document; documents without blocks get an empty graph."""
    by_doc = group_by_doc(blocks)
    ids = list(doc_ids) if doc_ids is not None else list(by_doc)
    return [build_graph(by_doc.get(d, []), cfg.graph, doc_id=d) for d in ids]


def mine_patterns(graphs: Sequence[IntraRelationGraph], cfg: PipelineConfig) -> list[SkeletonPattern]:
    usable = [g for g in graphs if g.edges]
    pruned = prune_infrequent(usable, cfg.miner.label_frequency_floor)
    return mine(pruned, cfg.miner)


def mark(
    graphs: Sequence[IntraRelationGraph], patterns: Sequence[SkeletonPattern], cfg: PipelineConfig
) -> list[IntraRelationGraph]:
    return mark_skeletons(graphs, patterns, cfg.miner.top_m)


def _vectors(cfg: PipelineConfig):
    path = cfg.encoder.pretrained_vectors
    return load_vectors(path) if (path and cfg.encoder.feature_mode == "pretrained") else None


def fit(
    graphs: Sequence[IntraRelationGraph], cfg: PipelineConfig, loss: LossConfig | None = None
) -> TrainResult:
    return train(graphs, cfg.encoder, loss or cfg.loss, cfg.train, vectors=_vectors(cfg))


def embed(
    graphs: Sequence[IntraRelationGraph], params, cfg: PipelineConfig
) -> tuple[list[str], np.ndarray]:
    """Document ids and vectors; graphs without nodes get the zero vector."""
    X, empty = Encoder(cfg.encoder, params).embed(graphs, _vectors(cfg))
    if empty:
        log.warning("%d document(s) have empty graphs; exported as zero vectors", len(empty))
    return [g.doc_id for g in graphs], X


def random_encoder_embed(
    graphs: Sequence[IntraRelationGraph], cfg: PipelineConfig
) -> tuple[list[str], np.ndarray]:
    """Embeddings from an untrained encoder initialized exactly as training would."""
    return embed(graphs, init_params(graphs, cfg.encoder, cfg.train.seed), cfg)


def evaluate(
    doc_ids: Sequence[str], X: np.ndarray, labels: dict[str, str], cfg: PipelineConfig
) -> RepeatedReport:
    return probe_embeddings(doc_ids, X, labels, cfg.probe, base_seed=cfg.train.seed)


@dataclass
class RunOutcome:
    result: TrainResult
    report: RepeatedReport
    doc_ids: list[str]
    embeddings: np.ndarray


def train_and_probe(
    graphs: Sequence[IntraRelationGraph],
    labels: dict[str, str],
    cfg: PipelineConfig,
    loss: LossConfig | None = None,
) -> RunOutcome:
    result = fit(graphs, cfg, loss)
    ids, X = embed(graphs, result.params, cfg)
    return RunOutcome(result, evaluate(ids, X, labels, cfg), ids, X)


def sweep(
    graphs: Sequence[IntraRelationGraph],
    labels: dict[str, str],
    cfg: PipelineConfig,
    param: str,
    grid: Sequence[float] | None = None,
) -> list[tuple[float, RunOutcome]]:
    if param not in SWEEP_FIELDS:
        raise ValueError(f"unknown sweep parameter {param!r}; choose from {sorted(SWEEP_FIELDS)}")
    out = []
    for value in grid if grid is not None else SWEEP_GRIDS[param]:
        loss = dataclasses.replace(cfg.loss, **{SWEEP_FIELDS[param]: float(value)})
        log.info("sweep %s=%g", param, value)
        out.append((float(value), train_and_probe(graphs, labels, cfg, loss)))
    return out
