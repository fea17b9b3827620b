"""Triplet multi-loss: structural and event margin terms plus the upper-bound term."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .autograd import Tensor, as_tensor, dot, mul, relu, row_sqdist, tsum
from .encoder import EmbeddingSet

UPPER_BOUND_MODES = ("hinge", "paper-literal")


@dataclass(frozen=True)
class LossConfig:
    eta: float = 0.9
    theta: float = 0.9
    w_e: float = 1.0
    w_s: float = 1.0
    k_negatives: int = 1
    upper_bound_sign: str = "hinge"
    use_structure: bool = True
    use_event: bool = True
    use_upper_bound: bool = True

    def __post_init__(self) -> None:
        if self.eta < 0 or self.theta < 0:
            raise ValueError("eta and theta must be non-negative")
        if self.w_e < 0 or self.w_s < 0:
            raise ValueError("loss weights must be non-negative")
        if self.k_negatives < 1:
            raise ValueError("k_negatives must be >= 1")
        if self.upper_bound_sign not in UPPER_BOUND_MODES:
            raise ValueError(f"upper_bound_sign must be one of {UPPER_BOUND_MODES}")

    def ablate(self, what: str) -> "LossConfig":
        flags = {"structure": "use_structure", "event": "use_event", "upper_bound": "use_upper_bound"}
        if what not in flags:
            raise ValueError(f"unknown ablation {what!r}; choose from {sorted(flags)}")
        return replace(self, **{flags[what]: False})


@dataclass
class LossReport:
    zeta_s: float
    zeta_e: float
    zeta_u: float
    zeta_total: float
    grad_norms: dict[str, float] = field(default_factory=dict)

    def row(self) -> tuple[float, float, float, float]:
        return (self.zeta_s, self.zeta_e, self.zeta_u, self.zeta_total)


def dist2(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    d = a - b
    return float(d @ d)


def _weights(H: Tensor, weights) -> np.ndarray:
    n = H.shape[0]
    return np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=np.float64)


def _as2d(x) -> Tensor:
    x = as_tensor(x)
    if x.data.ndim == 1:
        if x.requires_grad:
            raise ValueError("differentiable inputs must be 2-D (rows x dim)")
        return Tensor(x.data[None, :])
    return x


def _prep(H, H_pos, negatives):
    if len(negatives) == 0:
        raise ValueError("need at least one negative embedding (k=0)")
    H, H_pos = _as2d(H), _as2d(H_pos)
    negatives = [_as2d(x) for x in negatives]
    for X in (H_pos, *negatives):
        if X.shape != H.shape:
            raise ValueError(f"shape mismatch: {X.shape} vs {H.shape}")
    return H, H_pos, negatives


def triplet_loss(H, H_pos, negatives: Sequence, eta: float, weights=None) -> Tensor:
    """(1/k) sum_i max(0, d2(H, H+) - d2(H, H_i-) + eta), weighted over rows."""
    H, H_pos, negatives = _prep(H, H_pos, negatives)
    w = _weights(H, weights) / len(negatives)
    d_pos = row_sqdist(H, H_pos)
    total = None
    for N in negatives:
        term = dot(relu(d_pos - row_sqdist(H, N) + eta), w)
        total = term if total is None else total + term
    return total


def upper_bound_loss(
    H, H_pos, negatives: Sequence, eta: float, theta: float, mode: str = "hinge", weights=None
) -> Tensor:
    """Caps the anchor-negative distance at d2(H, H+) + eta + theta.

    ``paper-literal`` averages min(t, 0) with t = d2+ - (d2- - eta - theta), which is
    unbounded below; ``hinge`` averages -min(t, 0) so the term is a non-negative penalty.
    """
    if mode not in UPPER_BOUND_MODES:
        raise ValueError(f"unknown upper bound mode {mode!r}")
    H, H_pos, negatives = _prep(H, H_pos, negatives)
    w = _weights(H, weights) / len(negatives)
    d_pos = row_sqdist(H, H_pos)
    total = None
    for N in negatives:
        t = d_pos - (row_sqdist(H, N) - eta - theta)
        clamped = relu(-t)  # = -min(t, 0)
        term = dot(clamped if mode == "hinge" else -clamped, w)
        total = term if total is None else total + term
    return total


def total_loss(
    emb: EmbeddingSet, cfg: LossConfig, weights=None
) -> tuple[Tensor, LossReport]:
    """W_e * zeta_e + W_s * zeta_s + zeta_u, with ablated terms fixed at exactly 0.

    The upper-bound term is averaged over the positives that are not ablated.
    """
    H, negs = emb.anchor, emb.negatives
    zero = Tensor(0.0)
    z_s = triplet_loss(H, emb.structural, negs, cfg.eta, weights) if cfg.use_structure else zero
    z_e = triplet_loss(H, emb.event_rows, negs, cfg.eta, weights) if cfg.use_event else zero
    if cfg.use_upper_bound:
        positives = [p for p, on in ((emb.structural, cfg.use_structure),
                                     (emb.event_rows, cfg.use_event)) if on]
        positives = positives or [emb.structural, emb.event_rows]
        parts = [upper_bound_loss(H, p, negs, cfg.eta, cfg.theta, cfg.upper_bound_sign, weights)
                 for p in positives]
        z_u = parts[0]
        for p in parts[1:]:
            z_u = z_u + p
        z_u = mul(z_u, 1.0 / len(parts))
    else:
        z_u = zero
    total = mul(z_e, cfg.w_e) + mul(z_s, cfg.w_s) + z_u
    report = LossReport(z_s.item(), z_e.item(), z_u.item(), total.item())
    return total, report


def embedding_penalty(H: Tensor, weights=None) -> Tensor:
    """Weighted mean squared row norm, the target of the small regularization factor."""
    w = _weights(H, weights)
    return dot(tsum(mul(H, H), axis=1), w)
