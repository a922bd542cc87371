"""Self-describing binary checkpoints.

Layout: magic, format version, a JSON metadata blob (config echo, step count,
center alpha), then named tensors with shape headers and raw 32-bit
little-endian floats. Centers and Adam moments ride along so training can
resume. Byte output is a pure function of the stored values.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from .losses import CenterTable
from .model import EmbeddingNet, NetworkConfig
from .optim import AdamState

MAGIC = b"XMCKPT01"
VERSION = 1


@dataclass
class Checkpoint:
    config: NetworkConfig
    params: dict[str, np.ndarray]
    centers: CenterTable
    adam_state: AdamState
    step: int

    def to_net(self) -> EmbeddingNet:
        return EmbeddingNet(config=self.config, params=self.params)


def _pack_tensor(name: str, arr: np.ndarray) -> bytes:
    data = np.ascontiguousarray(arr, dtype="<f4")
    name_b = name.encode("utf-8")
    head = struct.pack("<I", len(name_b)) + name_b
    head += struct.pack("<B", data.ndim)
    head += struct.pack(f"<{data.ndim}I", *data.shape) if data.ndim else b""
    return head + data.tobytes()


def checkpoint_bytes(
    net: EmbeddingNet, centers: CenterTable, adam_state: AdamState, step: int
) -> bytes:
    meta = {
        "config": net.config.to_dict(),
        "center_alpha": centers.alpha,
        "step": step,
    }
    meta_b = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    tensors: list[tuple[str, np.ndarray]] = []
    for name in sorted(net.params):
        tensors.append((f"param/{name}", net.params[name]))
    tensors.append(("centers", centers.values))
    for name in sorted(adam_state.m):
        tensors.append((f"adam/m/{name}", adam_state.m[name]))
    for name in sorted(adam_state.v):
        tensors.append((f"adam/v/{name}", adam_state.v[name]))
    out = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(meta_b)), meta_b]
    out.append(struct.pack("<I", len(tensors)))
    for name, arr in tensors:
        out.append(_pack_tensor(name, arr))
    return b"".join(out)


def save_checkpoint(path, net, centers, adam_state, step) -> None:
    with open(path, "wb") as f:
        f.write(checkpoint_bytes(net, centers, adam_state, step))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DataError(f"{self.path}: truncated checkpoint")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u8(self) -> int:
        return self.take(1)[0]


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        data = f.read()
    r = _Reader(data, path)
    if r.take(len(MAGIC)) != MAGIC:
        raise DataError(f"{path}: not a checkpoint file (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    meta = json.loads(r.take(r.u32()).decode("utf-8"))
    config = NetworkConfig.from_dict(meta["config"])
    tensors: dict[str, np.ndarray] = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        ndim = r.u8()
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim)) if ndim else ()
        count = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        raw = r.take(4 * count)
        tensors[name] = (
            np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
        )
    params = {
        k.removeprefix("param/"): v for k, v in tensors.items() if k.startswith("param/")
    }
    adam_m = {
        k.removeprefix("adam/m/"): v for k, v in tensors.items() if k.startswith("adam/m/")
    }
    adam_v = {
        k.removeprefix("adam/v/"): v for k, v in tensors.items() if k.startswith("adam/v/")
    }
    if "centers" not in tensors:
        raise DataError(f"{path}: checkpoint lacks a centers tensor")
    if set(adam_m) != set(params) or set(adam_v) != set(params):
        raise DataError(f"{path}: Adam state does not match parameters")
    centers = CenterTable(values=tensors["centers"], alpha=float(meta["center_alpha"]))
    return Checkpoint(
        config=config,
        params=params,
        centers=centers,
        adam_state=AdamState(m=adam_m, v=adam_v),
        step=int(meta["step"]),
    )
