"""Shared convolutional embedding network with manual forward/backward passes."""

from .model import ConvSpec, EmbeddingNet, NetworkConfig, backward, forward, init_network
from .losses import (
    CenterTable,
    center_loss,
    center_loss_grad,
    softmax_cross_entropy,
    total_loss,
    update_centers,
)
from .optim import AdamState, adam_step
from .training import Batch, EpochStats, TrainResult, train, write_stats_csv
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint

__all__ = [
    "AdamState",
    "Batch",
    "CenterTable",
    "Checkpoint",
    "ConvSpec",
    "EmbeddingNet",
    "EpochStats",
    "NetworkConfig",
    "TrainResult",
    "adam_step",
    "backward",
    "center_loss",
    "center_loss_grad",
    "forward",
    "init_network",
    "load_checkpoint",
    "save_checkpoint",
    "softmax_cross_entropy",
    "total_loss",
    "train",
    "update_centers",
    "write_stats_csv",
]
