"""Joint supervision: softmax cross-entropy plus center loss.

The center term is L_c = 1/2 * sum_i ||x_i - c_{y_i}||^2 over the batch (a
sum, not a mean), pulling each embedding toward its class center; the
cross-entropy term is averaged over the batch. Pure center loss has a
degenerate all-collapse minimum, which is why the classification term stays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError


@dataclass
class CenterTable:
    """One learned center per class, nudged toward batch means at rate alpha."""

    values: np.ndarray  # (C, D) float64
    alpha: float = 0.5

    def __post_init__(self):
        if self.values.ndim != 2:
            raise DataError(f"centers must be (C, D), got {self.values.shape}")
        if not 0 < self.alpha <= 1:
            raise DataError(f"alpha must be in (0, 1], got {self.alpha}")
        if not np.all(np.isfinite(self.values)):
            raise DataError("centers contain non-finite values")

    @classmethod
    def zeros(cls, num_classes: int, dim: int, alpha: float = 0.5) -> "CenterTable":
        return cls(values=np.zeros((num_classes, dim), dtype=np.float64), alpha=alpha)

    @property
    def num_classes(self) -> int:
        return self.values.shape[0]


def _check_labels(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1:
        raise DataError(f"labels must be 1-D, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise DataError(
            f"label out of range [0, {num_classes}): {labels.min()}..{labels.max()}"
        )
    return labels


def center_loss(embeddings: np.ndarray, labels, centers: CenterTable) -> float:
    """1/2 * sum_i ||x_i - c_{y_i}||^2, accumulated in float64."""
    x = np.asarray(embeddings, dtype=np.float64)
    y = _check_labels(labels, centers.num_classes)
    diff = x - centers.values[y]
    return 0.5 * float(np.sum(diff * diff))


def center_loss_grad(embeddings: np.ndarray, labels, centers: CenterTable) -> np.ndarray:
    """d L_c / d x_i = x_i - c_{y_i}."""
    x = np.asarray(embeddings, dtype=np.float64)
    y = _check_labels(labels, centers.num_classes)
    return x - centers.values[y]


def update_centers(centers: CenterTable, embeddings: np.ndarray, labels) -> CenterTable:
    """Move each class center toward its batch members.

    For class j with n_j batch members: c_j <- c_j - alpha * sum(c_j - x_i) / (1 + n_j).
    Classes absent from the batch are untouched. Mutates and returns `centers`.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    y = _check_labels(labels, centers.num_classes)
    for j in np.unique(y):
        members = x[y == j]
        n = members.shape[0]
        delta = (n * centers.values[j] - members.sum(axis=0)) / (1.0 + n)
        centers.values[j] -= centers.alpha * delta
    return centers


def softmax_cross_entropy(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    z = np.asarray(logits, dtype=np.float64)
    y = _check_labels(labels, z.shape[1])
    m = z.shape[0]
    shifted = z - z.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -float(log_probs[np.arange(m), y].sum()) / m
    d_logits = np.exp(log_probs)
    d_logits[np.arange(m), y] -= 1.0
    d_logits /= m
    return loss, d_logits


@dataclass(frozen=True)
class LossResult:
    total: float
    cross_entropy: float
    center: float
    d_logits: np.ndarray
    d_embeddings: np.ndarray


def total_loss(
    logits: np.ndarray,
    embeddings: np.ndarray,
    labels,
    centers: CenterTable,
    lambda_center: float,
) -> LossResult:
    """Combined loss and its gradients w.r.t. logits and embeddings."""
    if lambda_center < 0:
        raise DataError(f"lambda_center must be >= 0, got {lambda_center}")
    ce, d_logits = softmax_cross_entropy(logits, labels)
    lc = center_loss(embeddings, labels, centers)
    d_emb = lambda_center * center_loss_grad(embeddings, labels, centers)
    return LossResult(
        total=ce + lambda_center * lc,
        cross_entropy=ce,
        center=lc,
        d_logits=d_logits,
        d_embeddings=d_emb,
    )
