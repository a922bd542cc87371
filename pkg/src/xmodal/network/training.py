"""The training loop: shuffled mini-batches of both modalities, joint loss,
Adam updates, and center updates, with per-epoch stats."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..errors import DataError, NumericalError
from ..rng import substream
from .losses import CenterTable, total_loss, update_centers
from .model import EmbeddingNet, NetworkConfig, backward, forward, init_network
from .optim import AdamState, adam_step


@dataclass
class Batch:
    inputs: np.ndarray  # (m, 3, side, side) float64 in [0, 1]
    labels: np.ndarray  # (m,) int64
    modality: tuple[str, ...] = ()

    def __post_init__(self):
        if self.inputs.ndim != 4 or self.inputs.shape[0] < 1:
            raise DataError(f"batch inputs must be (m>=1, 3, S, S), got {self.inputs.shape}")
        if self.labels.shape[0] != self.inputs.shape[0]:
            raise DataError("batch labels and inputs disagree on m")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    total_loss: float
    ce_loss: float
    center_loss: float
    wall_ms: float


@dataclass
class TrainResult:
    net: EmbeddingNet
    centers: CenterTable
    stats: list[EpochStats]
    adam_state: AdamState
    step: int


def instances_to_arrays(instances) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Stack TrainingInstance-like objects (pixels, class_id, modality)."""
    inputs = np.stack(
        [np.asarray(inst.pixels, dtype=np.float64).transpose(2, 0, 1) / 255.0 for inst in instances]
    )
    labels = np.array([inst.class_id for inst in instances], dtype=np.int64)
    modality = [inst.modality for inst in instances]
    return inputs, labels, modality


def _first_nonfinite(named: list[tuple[str, np.ndarray]]) -> str | None:
    for name, arr in named:
        if not np.all(np.isfinite(arr)):
            return name
    return None


def train(
    instances,
    config: NetworkConfig,
    epochs: int,
    batch_size: int = 45,
    lr: float = 1e-3,
    center_alpha: float = 0.5,
) -> TrainResult:
    """Train from scratch on TrainingInstance-like objects.

    Class ids must be dense in [0, num_classes). (seed, config, dataset)
    fully determines the trained parameters; epochs=0 returns the freshly
    initialized network untouched.
    """
    if not instances:
        raise DataError("training dataset is empty")
    inputs, labels, _ = instances_to_arrays(instances)
    present = np.unique(labels)
    if present[0] < 0 or present[-1] >= config.num_classes:
        raise DataError(
            f"class ids must lie in [0, {config.num_classes}), got {present[0]}..{present[-1]}"
        )
    if len(present) != config.num_classes:
        raise DataError(
            f"class ids must be dense in [0, {config.num_classes}); "
            f"only {len(present)} classes appear"
        )

    net = init_network(config)
    centers = CenterTable.zeros(config.num_classes, config.embedding_dim, alpha=center_alpha)
    state = AdamState.zeros_like(net.params)
    shuffle_rng = substream(config.seed, "shuffle")
    stats: list[EpochStats] = []
    step = 0
    n = inputs.shape[0]
    for epoch in range(1, epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(n)
        totals = np.zeros(3, dtype=np.float64)
        batches = 0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            x, y = inputs[idx], labels[idx]
            emb, logits, cache = forward(net, x)
            loss = total_loss(logits, emb, y, centers, config.lambda_center)
            if not np.isfinite(loss.total):
                culprit = _first_nonfinite(
                    [("embeddings", emb), ("logits", logits)]
                    + [(k, v) for k, v in sorted(net.params.items())]
                ) or "loss"
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, batch {batches + 1}; "
                    f"first non-finite tensor: '{culprit}'"
                )
            grads = backward(net, cache, loss.d_embeddings, loss.d_logits)
            step += 1
            adam_step(net.params, grads, state, step, lr=lr)
            bad = _first_nonfinite(sorted(net.params.items()))
            if bad is not None:
                raise NumericalError(
                    f"non-finite parameter '{bad}' after update at epoch {epoch}, "
                    f"batch {batches + 1}"
                )
            update_centers(centers, emb, y)
            totals += (loss.total, loss.cross_entropy, loss.center)
            batches += 1
        wall_ms = (time.perf_counter() - t0) * 1e3
        stats.append(
            EpochStats(
                epoch=epoch,
                total_loss=float(totals[0] / batches),
                ce_loss=float(totals[1] / batches),
                center_loss=float(totals[2] / batches),
                wall_ms=wall_ms,
            )
        )
    return TrainResult(net=net, centers=centers, stats=stats, adam_state=state, step=step)


def write_stats_csv(path, stats: list[EpochStats]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("epoch,total_loss,ce_loss,center_loss,wall_ms\n")
        for s in stats:
            f.write(
                f"{s.epoch},{s.total_loss!r},{s.ce_loss!r},{s.center_loss!r},{s.wall_ms:.3f}\n"
            )
