"""RGB raster I/O.

Rasters are numpy uint8 arrays of shape (height, width, 3); their .tobytes()
is exactly the row-major RGB-interleaved buffer used by the binary PPM (P6)
interchange format. PPM is written by hand so golden files are bit-exact;
PNG (for inspection of encoded text, or ingesting foreign corpora) goes
through Pillow.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError


def ensure_raster(arr: np.ndarray) -> np.ndarray:
    """Validate that `arr` is an RGB byte raster and return it C-contiguous."""
    a = np.asarray(arr)
    if a.ndim != 3 or a.shape[2] != 3:
        raise DataError(f"expected (H, W, 3) raster, got shape {a.shape}")
    if a.dtype != np.uint8:
        raise DataError(f"expected uint8 raster, got dtype {a.dtype}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise DataError(f"raster has empty extent: shape {a.shape}")
    return np.ascontiguousarray(a)


def ppm_bytes(arr: np.ndarray) -> bytes:
    """Serialize a raster as a binary PPM (P6, maxval 255)."""
    a = ensure_raster(arr)
    h, w = a.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + a.tobytes()


def write_ppm(path, arr: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(ppm_bytes(arr))


def _read_ppm_tokens(data: bytes, count: int, start: int) -> tuple[list[bytes], int]:
    """Read `count` whitespace-separated header tokens, skipping # comments."""
    tokens: list[bytes] = []
    i = start
    while len(tokens) < count:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if i < len(data) and data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
            continue
        j = i
        while j < len(data) and not data[j : j + 1].isspace():
            j += 1
        if j == i:
            raise DataError("truncated PPM header")
        tokens.append(data[i:j])
        i = j
    return tokens, i


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P6"):
        raise DataError(f"{path}: not a binary PPM (P6) file")
    try:
        tokens, pos = _read_ppm_tokens(data, 3, 2)
        w, h, maxval = (int(t) for t in tokens)
    except (ValueError, DataError) as exc:
        raise DataError(f"{path}: bad PPM header ({exc})") from exc
    if maxval != 255:
        raise DataError(f"{path}: unsupported PPM maxval {maxval}")
    if w < 1 or h < 1:
        raise DataError(f"{path}: bad PPM dimensions {w}x{h}")
    pos += 1  # single whitespace byte after maxval
    need = w * h * 3
    raw = data[pos : pos + need]
    if len(raw) != need:
        raise DataError(f"{path}: PPM payload is {len(raw)} bytes, expected {need}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3).copy()


def write_png(path, arr: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray(ensure_raster(arr), mode="RGB").save(path, format="PNG")


def read_png(path) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def read_image(path) -> np.ndarray:
    """Read a raster by extension: .ppm natively, anything else via Pillow."""
    if str(path).lower().endswith(".ppm"):
        return read_ppm(path)
    return read_png(path)
