"""Layer primitives with explicit forward/backward passes.

Layers are stateless descriptors: parameters live in the network's single
parameter store (a dict of name -> float64 array) and activations travel in
per-call cache objects, so forwards are pure and reusable across threads.
All math is float64, which keeps finite-difference gradient checks tight.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import DataError


def _im2col3(xp: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Unfold 3x3 patches of a padded (m, c, H+2, W+2) input into columns."""
    m, c = xp.shape[:2]
    cols = np.empty((m, c, 9, out_h, out_w), dtype=xp.dtype)
    k = 0
    for di in range(3):
        for dj in range(3):
            cols[:, :, k] = xp[:, :, di : di + out_h, dj : dj + out_w]
            k += 1
    return cols.reshape(m, c * 9, out_h * out_w)


class Conv3x3:
    """3x3 convolution, stride 1, zero padding 1 (spatial size preserved)."""

    def __init__(self, name: str, in_channels: int, out_channels: int):
        self.name = name
        self.in_channels = in_channels
        self.out_channels = out_channels

    @property
    def fan_in(self) -> int:
        return self.in_channels * 9

    def init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        scale = math.sqrt(2.0 / self.fan_in)
        w = rng.normal(0.0, scale, size=(self.out_channels, self.in_channels, 3, 3))
        b = np.zeros(self.out_channels, dtype=np.float64)
        return {f"{self.name}/w": w, f"{self.name}/b": b}

    def forward(self, params, x):
        m, c, h, w = x.shape
        if c != self.in_channels:
            raise DataError(f"{self.name}: expected {self.in_channels} channels, got {c}")
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        cols = _im2col3(xp, h, w)
        wmat = params[f"{self.name}/w"].reshape(self.out_channels, c * 9)
        y = np.matmul(wmat[None], cols) + params[f"{self.name}/b"][None, :, None]
        return y.reshape(m, self.out_channels, h, w), (cols, (m, c, h, w))

    def backward(self, params, cache, dy):
        cols, (m, c, h, w) = cache
        dyf = dy.reshape(m, self.out_channels, h * w)
        dw = (
            dyf.transpose(1, 0, 2).reshape(self.out_channels, m * h * w)
            @ cols.transpose(0, 2, 1).reshape(m * h * w, c * 9)
        ).reshape(self.out_channels, c, 3, 3)
        db = dyf.sum(axis=(0, 2))
        wmat = params[f"{self.name}/w"].reshape(self.out_channels, c * 9)
        dcols = np.matmul(wmat.T[None], dyf).reshape(m, c, 9, h, w)
        dxp = np.zeros((m, c, h + 2, w + 2), dtype=dy.dtype)
        k = 0
        for di in range(3):
            for dj in range(3):
                dxp[:, :, di : di + h, dj : dj + w] += dcols[:, :, k]
                k += 1
        dx = dxp[:, :, 1 : h + 1, 1 : w + 1]
        return dx, {f"{self.name}/w": dw, f"{self.name}/b": db}


class ReLU:
    def forward(self, params, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, params, cache, dy):
        return dy * cache, {}


class MaxPool2:
    """2x2 max pooling, stride 2; an odd trailing row/column is dropped."""

    def forward(self, params, x):
        m, c, h, w = x.shape
        ho, wo = h // 2, w // 2
        if ho < 1 or wo < 1:
            raise DataError(f"max pool input {h}x{w} too small")
        win = (
            x[:, :, : ho * 2, : wo * 2]
            .reshape(m, c, ho, 2, wo, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(m, c, ho, wo, 4)
        )
        arg = win.argmax(axis=-1)
        y = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
        return y, (x.shape, arg)

    def backward(self, params, cache, dy):
        (m, c, h, w), arg = cache
        ho, wo = h // 2, w // 2
        dwin = np.zeros((m, c, ho, wo, 4), dtype=dy.dtype)
        np.put_along_axis(dwin, arg[..., None], dy[..., None], axis=-1)
        dx = np.zeros((m, c, h, w), dtype=dy.dtype)
        dx[:, :, : ho * 2, : wo * 2] = (
            dwin.reshape(m, c, ho, wo, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(m, c, ho * 2, wo * 2)
        )
        return dx, {}


class GlobalAvgPool:
    def forward(self, params, x):
        return x.mean(axis=(2, 3)), x.shape

    def backward(self, params, cache, dy):
        m, c, h, w = cache
        return np.broadcast_to(dy[:, :, None, None] / (h * w), (m, c, h, w)).copy(), {}


class Dense:
    def __init__(self, name: str, in_features: int, out_features: int):
        self.name = name
        self.in_features = in_features
        self.out_features = out_features

    def init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        scale = math.sqrt(2.0 / self.in_features)
        w = rng.normal(0.0, scale, size=(self.in_features, self.out_features))
        b = np.zeros(self.out_features, dtype=np.float64)
        return {f"{self.name}/w": w, f"{self.name}/b": b}

    def forward(self, params, x):
        return x @ params[f"{self.name}/w"] + params[f"{self.name}/b"], x

    def backward(self, params, cache, dy):
        x = cache
        grads = {f"{self.name}/w": x.T @ dy, f"{self.name}/b": dy.sum(axis=0)}
        return dy @ params[f"{self.name}/w"].T, grads


class L2Normalize:
    """Row-wise x / ||x||; zero rows pass through a tiny norm floor."""

    eps = 1e-12

    def forward(self, params, x):
        norms = np.maximum(np.sqrt((x * x).sum(axis=1, keepdims=True)), self.eps)
        y = x / norms
        return y, (y, norms)

    def backward(self, params, cache, dy):
        y, norms = cache
        return (dy - y * (dy * y).sum(axis=1, keepdims=True)) / norms, {}
