"""Render tokenized captions into RGB images via word-embedding vectors.

A word vector of dimension d becomes ceil(d/3) RGB pixels (component triples,
zero-padded at the end), laid out row-major in a square block of side
ceil(sqrt(ceil(d/3))). Word blocks are placed left to right with a one
logical-pixel gap, wrapping to a new row when the canvas width would be
exceeded; each logical pixel is drawn as an s x s superpixel. Components are
clamped to [value_min, value_max] and quantized to bytes. Everything here is
a pure function of its inputs, so encodings are bit-deterministic.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .rng import hash64

_TOKEN_RE = re.compile(r"[a-z0-9]+")

OOV_POLICIES = ("skip", "hashed_fallback")


@dataclass(frozen=True)
class WordEmbeddingTable:
    """Vocabulary-to-vector map; immutable after load, shareable across threads."""

    vocab: dict[str, int]
    vectors: np.ndarray  # (V, d) float64

    def __post_init__(self):
        v = self.vectors
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise DataError(f"embedding matrix must be (V>=1, d>=1), got {v.shape}")
        if len(self.vocab) != v.shape[0]:
            raise DataError(
                f"vocab has {len(self.vocab)} tokens but matrix has {v.shape[0]} rows"
            )
        if not np.all(np.isfinite(v)):
            raise DataError("embedding matrix contains non-finite values")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def lookup(self, token: str) -> np.ndarray | None:
        idx = self.vocab.get(token)
        return None if idx is None else self.vectors[idx]


@dataclass(frozen=True)
class EncodingSpec:
    """Open parameters of the encoding scheme.

    canvas_width/canvas_height are in actual pixels and must be positive
    multiples of superpixel_scale.
    """

    canvas_width: int = 64
    canvas_height: int = 64
    superpixel_scale: int = 4
    value_min: float = -1.0
    value_max: float = 1.0
    oov_policy: str = "skip"

    def __post_init__(self):
        s = self.superpixel_scale
        if s < 1:
            raise DataError(f"superpixel_scale must be >= 1, got {s}")
        for name in ("canvas_width", "canvas_height"):
            v = getattr(self, name)
            if v < 1 or v % s != 0:
                raise DataError(f"{name}={v} is not a positive multiple of s={s}")
        if not self.value_min < self.value_max:
            raise DataError(
                f"value_min ({self.value_min}) must be < value_max ({self.value_max})"
            )
        if self.oov_policy not in OOV_POLICIES:
            raise DataError(f"oov_policy must be one of {OOV_POLICIES}")

    @property
    def logical_width(self) -> int:
        return self.canvas_width // self.superpixel_scale

    @property
    def logical_height(self) -> int:
        return self.canvas_height // self.superpixel_scale


def load_embedding_table(path) -> WordEmbeddingTable:
    """Parse the plain-text format: header "V d", then "token v1 ... vd" lines."""
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty embedding file")
    header = lines[0].split()
    if len(header) != 2:
        raise DataError(f"{path}: header must be 'V d', got {lines[0]!r}")
    try:
        v_count, dim = int(header[0]), int(header[1])
    except ValueError as exc:
        raise DataError(f"{path}: non-integer header {lines[0]!r}") from exc
    if v_count < 1 or dim < 1:
        raise DataError(f"{path}: header requires V >= 1 and d >= 1")
    vocab: dict[str, int] = {}
    rows = np.empty((len(lines) - 1, dim), dtype=np.float64)
    for line_no, line in enumerate(lines[1:], start=2):
        parts = line.split()
        token = parts[0]
        if len(parts) - 1 != dim:
            raise DataError(
                f"{path}:{line_no}: expected {dim} components, got {len(parts) - 1}"
            )
        if token in vocab:
            raise DataError(f"{path}:{line_no}: duplicate token {token!r}")
        try:
            vec = np.array([float(p) for p in parts[1:]], dtype=np.float64)
        except ValueError as exc:
            raise DataError(f"{path}:{line_no}: non-numeric component") from exc
        if not np.all(np.isfinite(vec)):
            raise DataError(f"{path}:{line_no}: non-finite component")
        vocab[token] = len(vocab)
        rows[len(vocab) - 1] = vec
    if len(vocab) != v_count:
        raise DataError(
            f"{path}: header declares {v_count} entries, file has {len(vocab)}"
        )
    return WordEmbeddingTable(vocab=vocab, vectors=rows)


def write_embedding_table(path, table: WordEmbeddingTable) -> None:
    """Inverse of load_embedding_table; floats use repr so values round-trip."""
    order = sorted(table.vocab, key=table.vocab.get)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"{len(table)} {table.dim}\n")
        for token in order:
            comps = " ".join(repr(float(c)) for c in table.vectors[table.vocab[token]])
            f.write(f"{token} {comps}\n")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on every non-alphanumeric character, dropping empties.

    Alphanumeric means ASCII [a-z0-9]; anything else (punctuation, non-ASCII)
    acts as a separator.
    """
    return _TOKEN_RE.findall(text.lower())


def quantize_component(c: float, spec: EncodingSpec) -> int:
    """Clamp to [value_min, value_max] and quantize to a byte.

    Rounds half away from zero so golden files are platform independent;
    value_min maps to 0 exactly and value_max to 255 exactly.
    """
    lo, hi = spec.value_min, spec.value_max
    t = (min(max(c, lo), hi) - lo) / (hi - lo)
    return int(math.floor(t * 255.0 + 0.5))


def _quantize_array(values: np.ndarray, spec: EncodingSpec) -> np.ndarray:
    lo, hi = spec.value_min, spec.value_max
    t = (np.clip(values, lo, hi) - lo) / (hi - lo)
    return np.floor(t * 255.0 + 0.5).astype(np.uint8)


def word_block_side(dim: int) -> int:
    """Logical side of a word block: ceil(sqrt(ceil(d/3)))."""
    pixels = -(-dim // 3)
    return math.isqrt(pixels - 1) + 1 if pixels > 0 else 0


def encode_word(vec: np.ndarray, spec: EncodingSpec) -> np.ndarray:
    """Encode one word vector as a square logical-pixel block (side, side, 3).

    The final component triple is zero-padded when d mod 3 != 0 (the padded
    zeros quantize like any other component); cells past ceil(d/3) stay black.
    """
    vec = np.asarray(vec, dtype=np.float64).ravel()
    d = vec.shape[0]
    pixels = -(-d // 3)
    side = word_block_side(d)
    padded = np.zeros(pixels * 3, dtype=np.float64)
    padded[:d] = vec
    block = np.zeros((side * side, 3), dtype=np.uint8)
    block[:pixels] = _quantize_array(padded.reshape(pixels, 3), spec)
    return block.reshape(side, side, 3)


@dataclass(frozen=True)
class EncodedText:
    """Result of encode_text: the raster plus how many words were dropped."""

    image: np.ndarray  # (canvas_height, canvas_width, 3) uint8
    dropped_words: int = 0
    oov_skipped: int = 0


def _resolve_vector(token: str, table: WordEmbeddingTable, spec: EncodingSpec):
    vec = table.lookup(token)
    if vec is not None:
        return vec
    if spec.oov_policy == "skip":
        return None
    rng = np.random.default_rng(np.random.SeedSequence(hash64(token)))
    return rng.uniform(spec.value_min, spec.value_max, size=table.dim)


def encode_text(
    tokens: list[str], table: WordEmbeddingTable, spec: EncodingSpec
) -> EncodedText:
    """Render a token sequence onto a black canvas.

    Deterministic given (tokens, table, spec). Words that would overflow the
    canvas vertically are dropped and counted in the result.
    """
    s = spec.superpixel_scale
    lw, lh = spec.logical_width, spec.logical_height
    canvas = np.zeros((lh, lw, 3), dtype=np.uint8)
    side = word_block_side(table.dim)

    vectors = []
    oov_skipped = 0
    for token in tokens:
        vec = _resolve_vector(token, table, spec)
        if vec is None:
            oov_skipped += 1
        else:
            vectors.append(vec)

    dropped = 0
    if vectors:
        if side > lw or side > lh:
            raise DataError(
                f"canvas of {lw}x{lh} logical pixels cannot fit a word block of side {side}"
            )
        x = y = 0
        for vec in vectors:
            if x > 0 and x + side > lw:
                x = 0
                y += side + 1
            if y + side > lh:
                dropped += 1
                continue
            canvas[y : y + side, x : x + side] = encode_word(vec, spec)
            x += side + 1

    image = np.repeat(np.repeat(canvas, s, axis=0), s, axis=1)
    return EncodedText(image=image, dropped_words=dropped, oov_skipped=oov_skipped)


def crop_encoded(
    image: np.ndarray, crop_w: int, crop_h: int, offset_x: int, offset_y: int
) -> np.ndarray:
    """Exact sub-rectangle copy, no resampling."""
    img = np.asarray(image)
    h, w = img.shape[:2]
    if crop_w < 1 or crop_h < 1 or offset_x < 0 or offset_y < 0:
        raise DataError(f"bad crop rectangle {crop_w}x{crop_h}+{offset_x}+{offset_y}")
    if offset_x + crop_w > w or offset_y + crop_h > h:
        raise DataError(
            f"crop {crop_w}x{crop_h}+{offset_x}+{offset_y} exceeds image {w}x{h}"
        )
    return img[offset_y : offset_y + crop_h, offset_x : offset_x + crop_w].copy()
