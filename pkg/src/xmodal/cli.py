"""Command-line pipeline: synth -> encode -> train -> embed -> eval -> project.

Configuration precedence: command-line flag > XMODAL_* environment variable >
config file (flat "key = value" lines) > documented default. Exit codes:
0 success, 1 usage error, 2 data/contract error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import retrieval as ret
from .errors import DataError, NumericalError, UsageError, XmodalError
from .imageio import write_ppm
from .network import (
    ConvSpec,
    EmbeddingNet,
    NetworkConfig,
    forward,
    load_checkpoint,
    save_checkpoint,
    train,
    write_stats_csv,
)
from .text_encoding import EncodingSpec, encode_text, tokenize

ENV_PREFIX = "XMODAL_"


@dataclass
class RunConfig:
    """Every tunable key with its documented default."""

    seed: int = 42
    groups: int = 32
    images_per_group: int = 1
    image_side: int = 64
    emb_dim: int = 12
    canvas_side: int = 64
    superpixel: int = 4
    value_min: float = -1.0
    value_max: float = 1.0
    oov_policy: str = "skip"
    input_side: int = 64
    conv_channels: str = "8,16"
    embedding_dim: int = 128
    lambda_center: float = 0.1
    center_alpha: float = 0.5
    normalize_embeddings: bool = False
    epochs: int = 80
    batch_size: int = 45
    lr: float = 1e-3
    aug_mode: str = "standard"
    crop_side: int = 57
    test_count: int = 0
    ks: str = "1,5,10"


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    try:
        if kind == "bool":
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise DataError(f"config key '{key}': cannot parse {raw!r}") from exc


def read_config_file(path) -> dict:
    """Flat "key = value" lines; '#' starts a comment; unknown keys rejected."""
    values = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}:{line_no}: expected 'key = value'")
            key, val = (part.strip() for part in line.split("=", 1))
            if key not in _FIELD_TYPES:
                raise DataError(f"{path}:{line_no}: unknown config key '{key}'")
            values[key] = _coerce(key, val)
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        for key, val in read_config_file(args.config).items():
            setattr(cfg, key, val)
    for key in _FIELD_TYPES:
        env = os.environ.get(ENV_PREFIX + key.upper())
        if env is not None:
            setattr(cfg, key, _coerce(key, env))
    for key in _FIELD_TYPES:
        flag = getattr(args, key, None)
        if flag is not None:
            if _FIELD_TYPES[key] == "bool" and isinstance(flag, str):
                flag = _coerce(key, flag)
            setattr(cfg, key, flag)
    return cfg


def encoding_spec(cfg: RunConfig) -> EncodingSpec:
    return EncodingSpec(
        canvas_width=cfg.canvas_side,
        canvas_height=cfg.canvas_side,
        superpixel_scale=cfg.superpixel,
        value_min=cfg.value_min,
        value_max=cfg.value_max,
        oov_policy=cfg.oov_policy,
    )


def network_config(cfg: RunConfig, num_classes: int) -> NetworkConfig:
    try:
        channels = [int(c) for c in cfg.conv_channels.split(",") if c.strip()]
    except ValueError as exc:
        raise DataError(f"cannot parse conv_channels {cfg.conv_channels!r}") from exc
    return NetworkConfig(
        input_side=cfg.input_side,
        conv_specs=tuple(ConvSpec(c) for c in channels),
        embedding_dim=cfg.embedding_dim,
        num_classes=num_classes,
        lambda_center=cfg.lambda_center,
        normalize_embeddings=cfg.normalize_embeddings,
        seed=cfg.seed,
    )


def parse_ks(cfg: RunConfig) -> tuple[int, ...]:
    try:
        ks = tuple(int(k) for k in cfg.ks.split(",") if k.strip())
    except ValueError as exc:
        raise DataError(f"cannot parse ks {cfg.ks!r}") from exc
    if not ks:
        raise DataError("ks must name at least one cutoff")
    return ks


def cmd_synth(args) -> int:
    cfg = resolve_config(args)
    corpus = data_mod.synth_dataset(
        n_groups=cfg.groups,
        images_per_group=cfg.images_per_group,
        seed=cfg.seed,
        image_side=cfg.image_side,
        emb_dim=cfg.emb_dim,
    )
    data_mod.write_corpus(corpus, args.out)
    print(
        f"wrote {len(corpus.images)} images, {len(corpus.captions)} captions, "
        f"{len(corpus.table)} vocabulary words to {args.out}"
    )
    return 0


def _encode_corpus(corpus: data_mod.Corpus, spec: EncodingSpec, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    warned = 0
    for rec in corpus.captions:
        tokens = tokenize(rec.text)
        result = encode_text(tokens, corpus.table, spec)
        if result.dropped_words:
            print(
                f"warning: {rec.image_id}#{rec.caption_index}: "
                f"{result.dropped_words} word(s) truncated (canvas overflow)",
                file=sys.stderr,
            )
        if not np.any(result.image):
            print(
                f"warning: {rec.image_id}#{rec.caption_index}: all-black encoding "
                f"({'empty caption' if not tokens else 'all tokens out of vocabulary'})",
                file=sys.stderr,
            )
            warned += 1
        write_ppm(out_dir / data_mod.encoded_caption_name(rec.image_id, rec.caption_index), result.image)
    return warned


def cmd_encode(args) -> int:
    cfg = resolve_config(args)
    corpus = data_mod.load_corpus(args.corpus)
    out_dir = Path(args.out) if args.out else Path(args.corpus) / "encoded"
    _encode_corpus(corpus, encoding_spec(cfg), out_dir)
    print(f"encoded {len(corpus.captions)} captions into {out_dir}")
    return 0


def _load_encoded(corpus: data_mod.Corpus, encoded_dir: Path) -> dict[tuple[str, int], np.ndarray]:
    from .imageio import read_ppm

    encoded = {}
    for rec in corpus.captions:
        path = encoded_dir / data_mod.encoded_caption_name(rec.image_id, rec.caption_index)
        if not path.exists():
            raise DataError(f"missing encoded caption {path}; run the encode step first")
        encoded[(rec.image_id, rec.caption_index)] = read_ppm(path)
    return encoded


def _dense_class_map(image_ids, groups: dict[str, int]) -> dict[str, int]:
    present = sorted({groups[i] for i in image_ids})
    remap = {g: i for i, g in enumerate(present)}
    return {i: remap[groups[i]] for i in image_ids}


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    corpus = data_mod.load_corpus(args.corpus)
    encoded_dir = Path(args.encoded) if args.encoded else Path(args.corpus) / "encoded"
    encoded = _load_encoded(corpus, encoded_dir)

    train_ids = sorted(corpus.images)
    if cfg.test_count > 0:
        the_split = data_mod.split(corpus.captions, cfg.test_count, cfg.seed)
        train_ids = list(the_split.train)
    class_of = _dense_class_map(train_ids, corpus.groups)
    aug = data_mod.AugmentationConfig(
        mode=cfg.aug_mode, crop_side=cfg.crop_side, input_side=cfg.input_side
    )
    instances = []
    for image_id in train_ids:
        caps = [encoded[(image_id, k)] for k in range(data_mod.CAPTIONS_PER_IMAGE)]
        instances.extend(
            data_mod.augment(corpus.images[image_id], caps, aug, class_of[image_id])
        )
    net_cfg = network_config(cfg, num_classes=len(set(class_of.values())))
    result = train(
        instances,
        net_cfg,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        lr=cfg.lr,
        center_alpha=cfg.center_alpha,
    )
    save_checkpoint(args.out, result.net, result.centers, result.adam_state, result.step)
    if args.stats:
        write_stats_csv(args.stats, result.stats)
    last = result.stats[-1].total_loss if result.stats else float("nan")
    print(
        f"trained {cfg.epochs} epoch(s) on {len(instances)} instances "
        f"({len(set(class_of.values()))} classes); final mean loss {last:.6f}; "
        f"checkpoint -> {args.out}"
    )
    return 0


def _embed_rasters(net: EmbeddingNet, rasters: list[np.ndarray], batch_size: int) -> np.ndarray:
    rows = []
    for start in range(0, len(rasters), batch_size):
        chunk = rasters[start : start + batch_size]
        x = np.stack(
            [np.asarray(r, dtype=np.float64).transpose(2, 0, 1) / 255.0 for r in chunk]
        )
        emb, _, _ = forward(net, x)
        rows.append(emb)
    return np.vstack(rows)


def cmd_embed(args) -> int:
    cfg = resolve_config(args)
    corpus = data_mod.load_corpus(args.corpus)
    encoded_dir = Path(args.encoded) if args.encoded else Path(args.corpus) / "encoded"
    encoded = _load_encoded(corpus, encoded_dir)
    ckpt = load_checkpoint(args.checkpoint)
    net = ckpt.to_net()

    image_ids = sorted(corpus.images)
    if cfg.test_count > 0:
        image_ids = list(data_mod.split(corpus.captions, cfg.test_count, cfg.seed).test)

    side = ckpt.config.input_side
    ids, modality, group, rasters = [], [], [], []
    for image_id in image_ids:
        ids.append(image_id)
        modality.append("image")
        group.append(corpus.groups[image_id])
        rasters.append(data_mod.resize_bilinear(corpus.images[image_id], side))
        for k in range(data_mod.CAPTIONS_PER_IMAGE):
            ids.append(f"{image_id}#{k}")
            modality.append("text")
            group.append(corpus.groups[image_id])
            rasters.append(data_mod.resize_bilinear(encoded[(image_id, k)], side))
    vectors = _embed_rasters(net, rasters, cfg.batch_size)
    index = ret.EmbeddingIndex(
        vectors=vectors, ids=ids, modality=modality, group=np.array(group)
    )
    ret.write_embeddings(args.out, index)
    n_img = sum(1 for m in modality if m == "image")
    print(f"embedded {n_img} images and {len(ids) - n_img} captions (D={index.dim}) -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    index = ret.load_embeddings(args.embeddings)
    image_index, text_index = ret.split_by_modality(index)
    tables = ret.evaluate_bidirectional(image_index, text_index, parse_ks(cfg))
    if args.out:
        ret.write_recall_csv(args.out, tables)
    print(ret.format_recall_tables(tables))
    return 0


def cmd_project(args) -> int:
    cfg = resolve_config(args)
    index = ret.load_embeddings(args.embeddings)
    result = ret.project_2d(index, seed=cfg.seed)
    ret.write_projection_csv(args.out, index, result)
    print(f"projected {len(index)} embeddings to 2D -> {args.out}")
    return 0


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _add_config_flags(p: argparse.ArgumentParser, keys: list[str]) -> None:
    p.add_argument("--config", metavar="FILE", help="flat 'key = value' config file")
    defaults = RunConfig()
    for key in keys:
        kind = _FIELD_TYPES[key]
        flag = "--" + key.replace("_", "-")
        default = getattr(defaults, key)
        helptext = f"default: {default}"
        if kind == "bool":
            p.add_argument(
                flag, type=str, choices=("true", "false"), default=None,
                metavar="BOOL", help=helptext,
            )
        elif kind == "int":
            p.add_argument(flag, type=int, default=None, metavar="N", help=helptext)
        elif kind == "float":
            p.add_argument(flag, type=float, default=None, metavar="X", help=helptext)
        else:
            p.add_argument(flag, type=str, default=None, metavar="S", help=helptext)


_ENCODING_KEYS = ["canvas_side", "superpixel", "value_min", "value_max", "oov_policy"]
_NETWORK_KEYS = [
    "input_side", "conv_channels", "embedding_dim", "lambda_center", "center_alpha",
    "normalize_embeddings", "epochs", "batch_size", "lr", "aug_mode", "crop_side",
    "test_count",
]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="xmodal",
        description="Single-network cross-modal (image/text) retrieval pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic paired corpus")
    p.add_argument("--out", required=True, help="corpus output directory")
    _add_config_flags(p, ["seed", "groups", "images_per_group", "image_side", "emb_dim"])
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("encode", help="render captions to encoded images")
    p.add_argument("--corpus", required=True, help="corpus directory")
    p.add_argument("--out", default=None, help="output dir (default: CORPUS/encoded)")
    _add_config_flags(p, ["seed"] + _ENCODING_KEYS)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train", help="train the shared embedding network")
    p.add_argument("--corpus", required=True)
    p.add_argument("--encoded", default=None, help="encoded captions dir (default: CORPUS/encoded)")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--stats", default=None, help="per-epoch stats CSV path")
    _add_config_flags(p, ["seed"] + _NETWORK_KEYS)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", help="extract embeddings from a checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--encoded", default=None)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="embedding file path")
    _add_config_flags(p, ["seed", "test_count", "batch_size"])
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("eval", help="bidirectional Recall@K")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", default=None, help="recall CSV path")
    _add_config_flags(p, ["ks"])
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("project", help="2D PCA projection export")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True, help="projection CSV path")
    _add_config_flags(p, ["seed"])
    p.set_defaults(func=cmd_project)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return UsageError.exit_code
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NumericalError.exit_code
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    except XmodalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
