"""Linear-probe evaluation of frozen document embeddings."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class ProbeError(ValueError):
    pass


@dataclass(frozen=True)
class ProbeConfig:
    train_fraction: float = 0.7
    probe_lr: float = 0.5
    probe_epochs: int = 300
    l2: float = 1e-4
    repeats: int = 10
    seeds: tuple[int, ...] = ()
    standardize: bool = True
    f1_average: str = "macro"

    def __post_init__(self) -> None:
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie strictly between 0 and 1")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.f1_average not in ("macro", "micro"):
            raise ValueError("f1_average must be 'macro' or 'micro'")

    def seed_list(self, base: int = 0) -> list[int]:
        return list(self.seeds) if self.seeds else [base + r for r in range(self.repeats)]


def split(
    doc_ids: Sequence[str], labels: Sequence[str], train_fraction: float, seed: int
) -> tuple[list[str], list[str]]:
    """Stratified train/test split; each class keeps at least one document per side."""
    if len(doc_ids) != len(labels):
        raise ProbeError("doc_ids and labels differ in length")
    if any(l is None for l in labels):
        raise ProbeError("every document needs a label")
    rng = np.random.default_rng(seed)
    by_class: dict[str, list[str]] = {}
    for d, l in zip(doc_ids, labels):
        by_class.setdefault(l, []).append(d)
    train, test = [], []
    for label in sorted(by_class):
        members = by_class[label]
        if len(members) < 2:
            raise ProbeError(f"class {label!r} has fewer than 2 documents")
        members = [members[i] for i in rng.permutation(len(members))]
        k = int(round(train_fraction * len(members)))
        k = min(max(k, 1), len(members) - 1)
        train += members[:k]
        test += members[k:]
    return train, test


@dataclass
class Probe:
    weights: np.ndarray
    bias: np.ndarray
    classes: list[str]
    mean: np.ndarray
    scale: np.ndarray

    def logits(self, X: np.ndarray) -> np.ndarray:
        return ((X - self.mean) / self.scale) @ self.weights + self.bias

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _softmax(self.logits(X))

    def predict(self, X: np.ndarray) -> list[str]:
        return [self.classes[k] for k in self.logits(X).argmax(axis=1)]


def _softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=1, keepdims=True)
    e = np.exp(Z)
    return e / e.sum(axis=1, keepdims=True)


def train_probe(X: np.ndarray, labels: Sequence[str], cfg: ProbeConfig) -> Probe:
    """Multinomial logistic regression by full-batch gradient descent from zero weights."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(labels):
        raise ProbeError("embeddings and labels are inconsistent")
    classes = sorted(set(labels))
    if len(classes) < 2:
        raise ProbeError("need at least two classes to train a probe")
    y = np.array([classes.index(l) for l in labels])
    if cfg.standardize:
        mean, scale = X.mean(axis=0), X.std(axis=0)
        scale = np.where(scale > 1e-12, scale, 1.0)
    else:
        mean, scale = np.zeros(X.shape[1]), np.ones(X.shape[1])
    Z = (X - mean) / scale
    n, d = Z.shape
    Y = np.eye(len(classes))[y]
    W = np.zeros((d, len(classes)))
    b = np.zeros(len(classes))
    for _ in range(cfg.probe_epochs):
        P = _softmax(Z @ W + b)
        loss = -np.log(P[np.arange(n), y] + 1e-300).mean()
        if not np.isfinite(loss):
            raise ProbeError("probe loss became non-finite")
        G = (P - Y) / n
        W -= cfg.probe_lr * (Z.T @ G + cfg.l2 * W)
        b -= cfg.probe_lr * G.sum(axis=0)
    return Probe(W, b, classes, mean, scale)


@dataclass
class MetricsReport:
    precision: float
    f1: float
    per_class: dict[str, dict[str, float]] = field(default_factory=dict)


def confusion(y_true: Sequence[str], y_pred: Sequence[str], classes: Sequence[str]) -> np.ndarray:
    idx = {c: i for i, c in enumerate(classes)}
    M = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        M[idx[t], idx[p]] += 1
    return M


def metrics(y_true: Sequence[str], y_pred: Sequence[str], average: str = "macro") -> MetricsReport:
    """Accuracy (reported as P) and F1 from a confusion matrix."""
    if len(y_true) == 0:
        raise ProbeError("empty test set")
    classes = sorted(set(y_true) | set(y_pred))
    M = confusion(y_true, y_pred, classes)
    tp = np.diag(M).astype(np.float64)
    pred_pos = M.sum(axis=0)
    true_pos = M.sum(axis=1)
    per_class = {}
    f1s = []
    for k, c in enumerate(classes):
        p = tp[k] / pred_pos[k] if pred_pos[k] else 0.0
        r = tp[k] / true_pos[k] if true_pos[k] else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        per_class[c] = {"precision": p, "recall": r, "f1": f, "support": int(true_pos[k])}
        if true_pos[k]:
            f1s.append(f)
    acc = float(tp.sum() / M.sum())
    f1 = float(np.mean(f1s)) if average == "macro" else acc
    return MetricsReport(acc, f1, per_class)


def evaluate(probe: Probe, X: np.ndarray, labels: Sequence[str], average: str = "macro") -> MetricsReport:
    if len(labels) == 0:
        raise ProbeError("empty test set")
    return metrics(list(labels), probe.predict(np.asarray(X)), average)


@dataclass
class RepeatedReport:
    runs: list[tuple[int, MetricsReport]]

    @property
    def mean_precision(self) -> float:
        return float(np.mean([r.precision for _, r in self.runs]))

    @property
    def mean_f1(self) -> float:
        return float(np.mean([r.f1 for _, r in self.runs]))

    @property
    def best_precision(self) -> float:
        return float(max(r.precision for _, r in self.runs))

    @property
    def best_f1(self) -> float:
        return float(max(r.f1 for _, r in self.runs))

    def table(self) -> str:
        lines = [f"{'seed':>6}  {'P':>7}  {'F1':>7}"]
        for s, r in self.runs:
            lines.append(f"{s:>6}  {r.precision:7.4f}  {r.f1:7.4f}")
        lines.append(f"{'mean':>6}  {self.mean_precision:7.4f}  {self.mean_f1:7.4f}")
        lines.append(f"{'best':>6}  {self.best_precision:7.4f}  {self.best_f1:7.4f}")
        return "\n".join(lines)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["seed", "precision", "f1"])
            for s, r in self.runs:
                w.writerow([s, repr(r.precision), repr(r.f1)])
            w.writerow(["mean", repr(self.mean_precision), repr(self.mean_f1)])
            w.writerow(["best", repr(self.best_precision), repr(self.best_f1)])


def probe_embeddings(
    doc_ids: Sequence[str],
    X: np.ndarray,
    labels: dict[str, str],
    cfg: ProbeConfig,
    base_seed: int = 0,
) -> RepeatedReport:
    """Split, fit and score once per seed."""
    pos = {d: i for i, d in enumerate(doc_ids)}
    missing = [d for d in doc_ids if labels.get(d) is None]
    if missing:
        raise ProbeError(f"{len(missing)} document(s) lack labels, e.g. {missing[0]!r}")
    runs = []
    for seed in cfg.seed_list(base_seed):
        tr, te = split(list(doc_ids), [labels[d] for d in doc_ids], cfg.train_fraction, seed)
        probe = train_probe(X[[pos[d] for d in tr]], [labels[d] for d in tr], cfg)
        runs.append((seed, evaluate(probe, X[[pos[d] for d in te]], [labels[d] for d in te],
                                    cfg.f1_average)))
    return RepeatedReport(runs)
