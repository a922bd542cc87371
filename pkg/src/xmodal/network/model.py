"""Network configuration, initialization, and the shared forward/backward pass.

There is exactly one parameter store; natural images and encoded-text images
go through the same weights, which is the whole point of the architecture.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError
from ..rng import substream
from . import layers


@dataclass(frozen=True)
class ConvSpec:
    """One 3x3 conv stage (followed by ReLU), optionally followed by 2x2 max pool."""

    out_channels: int
    pool: bool = True


@dataclass(frozen=True)
class NetworkConfig:
    input_side: int = 64
    conv_specs: tuple[ConvSpec, ...] = (ConvSpec(8), ConvSpec(16))
    embedding_dim: int = 128
    num_classes: int = 2
    lambda_center: float = 0.1
    normalize_embeddings: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.input_side < 8:
            raise DataError(f"input_side must be >= 8, got {self.input_side}")
        if self.embedding_dim < 2:
            raise DataError(f"embedding_dim must be >= 2, got {self.embedding_dim}")
        if self.num_classes < 2:
            raise DataError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.lambda_center < 0:
            raise DataError(f"lambda_center must be >= 0, got {self.lambda_center}")
        if not self.conv_specs:
            raise DataError("at least one conv stage is required")
        side = self.input_side
        for spec in self.conv_specs:
            if spec.out_channels < 1:
                raise DataError("conv out_channels must be >= 1")
            if spec.pool:
                side //= 2
                if side < 1:
                    raise DataError(
                        f"pooling reduces spatial extent below 1 (input_side={self.input_side})"
                    )

    def to_dict(self) -> dict:
        return {
            "input_side": self.input_side,
            "conv_specs": [[s.out_channels, bool(s.pool)] for s in self.conv_specs],
            "embedding_dim": self.embedding_dim,
            "num_classes": self.num_classes,
            "lambda_center": self.lambda_center,
            "normalize_embeddings": self.normalize_embeddings,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(
            input_side=int(d["input_side"]),
            conv_specs=tuple(ConvSpec(int(c), bool(p)) for c, p in d["conv_specs"]),
            embedding_dim=int(d["embedding_dim"]),
            num_classes=int(d["num_classes"]),
            lambda_center=float(d["lambda_center"]),
            normalize_embeddings=bool(d["normalize_embeddings"]),
            seed=int(d["seed"]),
        )


def _build_stack(config: NetworkConfig):
    stack = []
    in_ch = 3
    for i, spec in enumerate(config.conv_specs, start=1):
        stack.append(layers.Conv3x3(f"conv{i}", in_ch, spec.out_channels))
        stack.append(layers.ReLU())
        if spec.pool:
            stack.append(layers.MaxPool2())
        in_ch = spec.out_channels
    stack.append(layers.GlobalAvgPool())
    embed = layers.Dense("embed", in_ch, config.embedding_dim)
    clf = layers.Dense("clf", config.embedding_dim, config.num_classes)
    return stack, embed, clf


@dataclass
class EmbeddingNet:
    """The single shared network: a config plus its one parameter store."""

    config: NetworkConfig
    params: dict[str, np.ndarray]
    _stack: list = field(default_factory=list, repr=False)
    _embed: layers.Dense | None = field(default=None, repr=False)
    _clf: layers.Dense | None = field(default=None, repr=False)
    _norm: layers.L2Normalize | None = field(default=None, repr=False)

    def __post_init__(self):
        self._stack, self._embed, self._clf = _build_stack(self.config)
        self._norm = layers.L2Normalize() if self.config.normalize_embeddings else None

    def parameter_names(self) -> list[str]:
        return sorted(self.params)


def init_network(config: NetworkConfig) -> EmbeddingNet:
    """He-style initialization, zero biases; identical seed gives identical bits."""
    stack, embed, clf = _build_stack(config)
    rng = substream(config.seed, "init")
    params: dict[str, np.ndarray] = {}
    for layer in stack:
        if hasattr(layer, "init_params"):
            params.update(layer.init_params(rng))
    params.update(embed.init_params(rng))
    params.update(clf.init_params(rng))
    return EmbeddingNet(config=config, params=params)


@dataclass
class ForwardCache:
    stack: list
    embed: object
    norm: object | None
    clf: object
    batch_size: int


def forward(net: EmbeddingNet, inputs: np.ndarray):
    """Run a batch (m, 3, side, side) through the shared weights.

    Returns (embeddings (m, D), logits (m, C), cache). Embeddings are
    L2-normalized iff the config says so; logits are the classification head
    applied to the (possibly normalized) embeddings.
    """
    x = np.asarray(inputs, dtype=np.float64)
    side = net.config.input_side
    if x.ndim != 4 or x.shape[1] != 3 or x.shape[2] != side or x.shape[3] != side:
        raise DataError(
            f"expected inputs (m, 3, {side}, {side}), got {x.shape}"
        )
    caches = []
    for layer in net._stack:
        x, c = layer.forward(net.params, x)
        caches.append(c)
    emb, embed_cache = net._embed.forward(net.params, x)
    norm_cache = None
    if net._norm is not None:
        emb, norm_cache = net._norm.forward(net.params, emb)
    logits, clf_cache = net._clf.forward(net.params, emb)
    cache = ForwardCache(
        stack=caches,
        embed=embed_cache,
        norm=norm_cache,
        clf=clf_cache,
        batch_size=x.shape[0],
    )
    return emb, logits, cache


def backward(
    net: EmbeddingNet,
    cache: ForwardCache,
    d_embeddings: np.ndarray,
    d_logits: np.ndarray,
) -> dict[str, np.ndarray]:
    """Exact gradients of the loss w.r.t. every parameter tensor."""
    grads: dict[str, np.ndarray] = {}
    d_emb, g = net._clf.backward(net.params, cache.clf, np.asarray(d_logits, dtype=np.float64))
    grads.update(g)
    d_emb = d_emb + np.asarray(d_embeddings, dtype=np.float64)
    if net._norm is not None:
        d_emb, _ = net._norm.backward(net.params, cache.norm, d_emb)
    dx, g = net._embed.backward(net.params, cache.embed, d_emb)
    grads.update(g)
    for layer, layer_cache in zip(reversed(net._stack), reversed(cache.stack)):
        dx, g = layer.backward(net.params, layer_cache, dx)
        grads.update(g)
    return grads
