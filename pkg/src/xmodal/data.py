"""Caption datasets, train/test splits, augmentation, and the synthetic corpus.

Caption files follow the common "image_name#k<TAB>caption" layout with five
captions per image. The synthetic corpus renders one of 4 shapes x 8 colors
x 2 sizes per group and emits five templated captions naming the attributes,
plus a small vocabulary with seeded random embeddings, so the whole pipeline
can be exercised on a laptop in minutes.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .imageio import ensure_raster, read_image, write_ppm
from .rng import substream
from .text_encoding import WordEmbeddingTable, crop_encoded, load_embedding_table, write_embedding_table

CAPTIONS_PER_IMAGE = 5

SHAPES = ("circle", "square", "triangle", "cross")
COLORS = (
    ("red", (220, 40, 40)),
    ("green", (40, 190, 60)),
    ("blue", (50, 70, 220)),
    ("yellow", (235, 220, 50)),
    ("magenta", (210, 60, 200)),
    ("cyan", (60, 200, 210)),
    ("orange", (240, 150, 40)),
    ("purple", (130, 50, 190)),
)
SIZES = ("small", "large")
BACKGROUND = (205, 205, 205)

CAPTION_TEMPLATES = (
    "a {size} {color} {shape}",
    "the {color} {shape} is {size}",
    "one {size} {shape} drawn in {color}",
    "a picture of a {size} {color} {shape}",
    "this {shape} is {color} and {size}",
)


@dataclass(frozen=True)
class CaptionRecord:
    image_id: str
    caption_index: int
    text: str


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[str, ...]
    test: tuple[str, ...]


@dataclass(frozen=True)
class AugmentationConfig:
    """Which instances one (image, 5 encoded captions) group expands into.

    mode "standard": the image plus its five encoded captions (6 instances).
    mode "config2": additionally the horizontally flipped image and five
    deterministic crops of side crop_side, one per caption, taken at the four
    corners and the center (12 instances). Everything is resized to
    input_side before training.
    """

    mode: str = "standard"
    crop_side: int = 57
    input_side: int = 64

    def __post_init__(self):
        if self.mode not in ("standard", "config2"):
            raise DataError(f"augmentation mode must be standard|config2, got {self.mode!r}")
        if self.crop_side < 1 or self.input_side < 1:
            raise DataError("crop_side and input_side must be >= 1")

    @property
    def hflip(self) -> bool:
        return self.mode == "config2"


@dataclass(frozen=True)
class TrainingInstance:
    pixels: np.ndarray  # (input_side, input_side, 3) uint8
    class_id: int
    modality: str  # "image" | "text"


def load_captions(path) -> list[CaptionRecord]:
    """Parse "image_name#k<TAB>caption" lines; malformed lines abort with numbers."""
    records: list[CaptionRecord] = []
    seen: set[tuple[str, int]] = set()
    problems: list[str] = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                problems.append(f"line {line_no}: missing tab separator")
                continue
            key, text = line.split("\t", 1)
            name, _, suffix = key.rpartition("#")
            if not name:
                problems.append(f"line {line_no}: key {key!r} lacks '#k' suffix")
                continue
            try:
                k = int(suffix)
            except ValueError:
                problems.append(f"line {line_no}: non-integer caption index {suffix!r}")
                continue
            if not 0 <= k < CAPTIONS_PER_IMAGE:
                problems.append(f"line {line_no}: caption index {k} outside [0, 5)")
                continue
            if (name, k) in seen:
                problems.append(f"line {line_no}: duplicate key {key!r}")
                continue
            seen.add((name, k))
            records.append(CaptionRecord(image_id=name, caption_index=k, text=text))
    if problems:
        raise DataError(f"{path}: " + "; ".join(problems))
    return records


def write_captions(path, records: list[CaptionRecord]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(f"{rec.image_id}#{rec.caption_index}\t{rec.text}\n")


def split(records: list[CaptionRecord], test_count: int, seed: int) -> DatasetSplit:
    """Seeded uniform sample of test_count distinct images for the test set."""
    images = sorted({rec.image_id for rec in records})
    if test_count < 0:
        raise DataError(f"test_count must be >= 0, got {test_count}")
    if test_count >= len(images) and test_count > 0:
        raise DataError(
            f"test_count={test_count} but only {len(images)} distinct images"
        )
    rng = substream(seed, "split")
    test = sorted(rng.choice(len(images), size=test_count, replace=False).tolist())
    test_ids = tuple(images[i] for i in test)
    test_set = set(test_ids)
    train_ids = tuple(i for i in images if i not in test_set)
    return DatasetSplit(train=train_ids, test=test_ids)


def resize_bilinear(image: np.ndarray, target_side: int) -> np.ndarray:
    """Corner-aligned bilinear resize of an RGB raster to target x target.

    Sample positions map output corners onto input corners; a 1-pixel target
    samples the top-left corner. Weights are convex, so output values never
    leave the input range; rounding is half away from zero.
    """
    img = ensure_raster(image)
    if target_side < 1:
        raise DataError(f"target_side must be >= 1, got {target_side}")
    h, w = img.shape[:2]
    if h == target_side and w == target_side:
        return img.copy()

    def positions(src: int) -> np.ndarray:
        if target_side == 1:
            return np.zeros(1, dtype=np.float64)
        return np.arange(target_side, dtype=np.float64) * (src - 1) / (target_side - 1)

    ys, xs = positions(h), positions(w)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    src = img.astype(np.float64)
    top = src[y0][:, x0] * (1 - wx) + src[y0][:, x1] * wx
    bot = src[y1][:, x0] * (1 - wx) + src[y1][:, x1] * wx
    out = top * (1 - wy) + bot * wy
    return np.floor(out + 0.5).astype(np.uint8)


def hflip(image: np.ndarray) -> np.ndarray:
    """Reverse the column order of each row, channels intact."""
    return np.ascontiguousarray(ensure_raster(image)[:, ::-1])


def _crop_offsets(w: int, h: int, cw: int, ch: int) -> list[tuple[int, int]]:
    # caption k takes position k: four corners, then center
    return [
        (0, 0),
        (w - cw, 0),
        (0, h - ch),
        (w - cw, h - ch),
        ((w - cw) // 2, (h - ch) // 2),
    ]


def augment(
    image: np.ndarray,
    encoded_captions: list[np.ndarray],
    config: AugmentationConfig,
    group_id: int,
) -> list[TrainingInstance]:
    """Expand one image group into training instances per the augmentation mode."""
    if len(encoded_captions) != CAPTIONS_PER_IMAGE:
        raise DataError(
            f"expected {CAPTIONS_PER_IMAGE} encoded captions, got {len(encoded_captions)}"
        )
    side = config.input_side
    out = [TrainingInstance(resize_bilinear(image, side), group_id, "image")]
    if config.mode == "config2":
        out.append(TrainingInstance(resize_bilinear(hflip(image), side), group_id, "image"))
    for enc in encoded_captions:
        out.append(TrainingInstance(resize_bilinear(enc, side), group_id, "text"))
    if config.mode == "config2":
        cs = config.crop_side
        for enc in encoded_captions:
            h, w = np.asarray(enc).shape[:2]
            if cs > w or cs > h:
                raise DataError(f"crop_side {cs} exceeds encoded canvas {w}x{h}")
        offsets = [
            _crop_offsets(np.asarray(enc).shape[1], np.asarray(enc).shape[0], cs, cs)
            for enc in encoded_captions
        ]
        for k, enc in enumerate(encoded_captions):
            ox, oy = offsets[k][k]
            crop = crop_encoded(enc, cs, cs, ox, oy)
            out.append(TrainingInstance(resize_bilinear(crop, side), group_id, "text"))
    return out


@dataclass(frozen=True)
class SynthImage:
    image_id: str
    group: int
    pixels: np.ndarray


@dataclass(frozen=True)
class SynthCorpus:
    images: list[SynthImage]
    captions: list[CaptionRecord]
    table: WordEmbeddingTable
    groups: dict[str, int] = field(default_factory=dict)  # image_id -> group


def _shape_mask(shape: str, side: int, cx: int, cy: int, r: int) -> np.ndarray:
    yy, xx = np.mgrid[0:side, 0:side]
    dx, dy = xx - cx, yy - cy
    if shape == "circle":
        return dx * dx + dy * dy <= r * r
    if shape == "square":
        return np.maximum(np.abs(dx), np.abs(dy)) <= r
    if shape == "triangle":
        return (np.abs(dy) <= r) & (np.abs(dx) * 2 <= dy + r)
    if shape == "cross":
        third = max(1, r // 3)
        return ((np.abs(dx) <= third) & (np.abs(dy) <= r)) | (
            (np.abs(dy) <= third) & (np.abs(dx) <= r)
        )
    raise DataError(f"unknown shape {shape!r}")


def render_shape(
    shape: str, rgb: tuple[int, int, int], size: str, side: int, cx: int, cy: int
) -> np.ndarray:
    r = round(side * (0.16 if size == "small" else 0.30))
    img = np.empty((side, side, 3), dtype=np.uint8)
    img[:] = BACKGROUND
    img[_shape_mask(shape, side, cx, cy, r)] = rgb
    return img


def synth_dataset(
    n_groups: int,
    images_per_group: int = 1,
    seed: int = 0,
    image_side: int = 64,
    emb_dim: int = 12,
) -> SynthCorpus:
    """Procedural paired corpus: one attribute triple per group, 5 captions each.

    Fully seeded: the same arguments always produce byte-identical rasters,
    captions, and embedding vectors.
    """
    combos = list(itertools.product(SIZES, COLORS, SHAPES))
    if n_groups < 2:
        raise DataError(f"n_groups must be >= 2, got {n_groups}")
    if n_groups > len(combos):
        raise DataError(
            f"n_groups={n_groups} exceeds the {len(combos)} distinct attribute combinations"
        )
    if images_per_group < 1:
        raise DataError("images_per_group must be >= 1")

    rng = substream(seed, "synth")
    images: list[SynthImage] = []
    captions: list[CaptionRecord] = []
    groups: dict[str, int] = {}
    jitter = max(1, image_side // 16)
    for g in range(n_groups):
        size, (color, rgb), shape = combos[g]
        for j in range(images_per_group):
            cx = image_side // 2 + int(rng.integers(-jitter, jitter + 1))
            cy = image_side // 2 + int(rng.integers(-jitter, jitter + 1))
            image_id = f"g{g:02d}i{j}.ppm"
            pixels = render_shape(shape, rgb, size, image_side, cx, cy)
            images.append(SynthImage(image_id=image_id, group=g, pixels=pixels))
            groups[image_id] = g
            for k, template in enumerate(CAPTION_TEMPLATES):
                text = template.format(size=size, color=color, shape=shape)
                captions.append(CaptionRecord(image_id=image_id, caption_index=k, text=text))

    words = sorted({w for rec in captions for w in rec.text.split()})
    vectors = rng.uniform(-1.0, 1.0, size=(len(words), emb_dim))
    table = WordEmbeddingTable(vocab={w: i for i, w in enumerate(words)}, vectors=vectors)
    return SynthCorpus(images=images, captions=captions, table=table, groups=groups)


def write_corpus(corpus: SynthCorpus, out_dir) -> None:
    """Corpus layout: images/ (PPM), captions.tsv, vocab.vec, manifest.tsv."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    for img in corpus.images:
        write_ppm(out / "images" / img.image_id, img.pixels)
    write_captions(out / "captions.tsv", corpus.captions)
    write_embedding_table(out / "vocab.vec", corpus.table)
    with open(out / "manifest.tsv", "w", encoding="utf-8") as f:
        for img in corpus.images:
            f.write(f"{img.group}\t{img.image_id}\n")


@dataclass(frozen=True)
class Corpus:
    """A caption corpus on disk, loaded into memory."""

    images: dict[str, np.ndarray]  # image_id -> raster
    captions: list[CaptionRecord]
    table: WordEmbeddingTable
    groups: dict[str, int]  # image_id -> group id


def load_corpus(corpus_dir) -> Corpus:
    root = Path(corpus_dir)
    for required in ("captions.tsv", "vocab.vec", "manifest.tsv", "images"):
        if not (root / required).exists():
            raise DataError(f"{root}: missing {required}")
    captions = load_captions(root / "captions.tsv")
    table = load_embedding_table(root / "vocab.vec")
    groups: dict[str, int] = {}
    with open(root / "manifest.tsv", "r", encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{root}/manifest.tsv:{line_no}: expected 'group<TAB>image_id'")
            try:
                groups[parts[1]] = int(parts[0])
            except ValueError as exc:
                raise DataError(f"{root}/manifest.tsv:{line_no}: non-integer group") from exc
    images: dict[str, np.ndarray] = {}
    for image_id in groups:
        path = root / "images" / image_id
        if not path.exists():
            raise DataError(f"{root}: manifest names missing image {image_id}")
        images[image_id] = read_image(path)
    caption_images = {rec.image_id for rec in captions}
    unknown = caption_images - set(groups)
    if unknown:
        raise DataError(f"{root}: captions reference images absent from manifest: {sorted(unknown)[:5]}")
    return Corpus(images=images, captions=captions, table=table, groups=groups)


def encoded_caption_name(image_id: str, caption_index: int) -> str:
    stem = os.path.splitext(image_id)[0]
    return f"{stem}_cap{caption_index}.ppm"
