"""Command-line surface: ingest, train, sample, augment-preview, demo.

Exit codes: 0 success, 2 usage or input error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, generate_patch_set
from .autodiff import NonFiniteError
from .demo import DEMO_KINDS, make_demo_recording
from .geometry import load_path_image, recording_to_image, save_path_image
from .sampling import (
    SamplerConfig,
    center_polylines,
    generate_images,
    render_svg,
)
from .svgout import line_chart_svg
from .training import (
    TrainConfig,
    desk_preset,
    load_checkpoint,
    save_checkpoint,
    train,
    write_loss_csv,
)

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="strokegen",
        description="Learn a generative stroke-image model from one drawing "
                    "and sample new SVG images from it.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="fit a point recording to Bezier paths")
    p.add_argument("recording", type=Path, help="recording JSON file")
    p.add_argument("-o", "--out", type=Path, required=True,
                   help="output path-image JSON")
    p.add_argument("--fit-error", type=float, default=1.0,
                   help="max fitting error in canvas units (default 1)")

    p = sub.add_parser("train", help="train a model on a path image")
    p.add_argument("pathimage", type=Path, help="path-image JSON file")
    p.add_argument("-o", "--out", type=Path, required=True,
                   help="output directory")
    p.add_argument("--preset", choices=("full", "desk"), default="full",
                   help="hyperparameter preset (default: full scale)")
    p.add_argument("--config", type=Path,
                   help="key = value file overriding preset fields")
    p.add_argument("--seed", type=int, help="master rng seed")
    p.add_argument("--epochs", type=int)
    p.add_argument("--patches", type=int, dest="patches_per_epoch")
    p.add_argument("--fixed-patch-set", type=int,
                   help="train on one fixed patch set of this size instead "
                        "of fresh sets (overfitting experiment)")
    p.add_argument("--jobs", type=int,
                   help="parallel patch-generation processes")

    p = sub.add_parser("sample", help="generate images from a checkpoint")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--out", type=Path, required=True, help="output SVG file")
    p.add_argument("--k", type=int, default=10, help="top-k cutoff")
    p.add_argument("--init-len", type=int,
                   help="initialization vector length (default: L/2)")
    p.add_argument("--max-moves", type=int,
                   help="generation cap per image (default: 4*L)")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--columns", type=int, default=4)
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel sampling processes")

    p = sub.add_parser("augment-preview",
                       help="contact sheet of augmented patches")
    p.add_argument("pathimage", type=Path)
    p.add_argument("--out", type=Path, required=True, help="output SVG file")
    p.add_argument("-n", type=int, default=5, help="patch count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("demo-recording",
                       help="write one of the bundled synthetic recordings")
    p.add_argument("kind", choices=DEMO_KINDS)
    p.add_argument("-o", "--out", type=Path, required=True)
    return parser


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    image = recording_to_image(_read_json(args.recording), args.fit_error)
    save_path_image(image, args.out)
    print(f"{len(image.paths)} paths on a {image.boundary:g} unit canvas")
    for i, path in enumerate(image.paths):
        print(f"  path {i}: {len(path.curves)} curves")
    print(f"wrote {args.out}")
    return 0


def _train_config(args) -> TrainConfig:
    cfg = desk_preset() if args.preset == "desk" else TrainConfig()
    overrides: dict = {}
    if args.config is not None:
        overrides.update(parse_config_file(args.config))
    for name in ("seed", "epochs", "patches_per_epoch", "fixed_patch_set",
                 "jobs"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return dataclasses.replace(cfg, **overrides)


def cmd_train(args) -> int:
    image = load_path_image(args.pathimage)
    cfg = _train_config(args)
    args.out.mkdir(parents=True, exist_ok=True)

    def on_epoch(stats):
        print(f"epoch {stats.epoch:3d}: train {stats.train_loss:.4f} "
              f"heldout {stats.heldout_loss:.4f}")

    ckpt = train(image, cfg, on_epoch=on_epoch)
    save_checkpoint(ckpt, args.out / "checkpoint.json")
    write_loss_csv(ckpt.loss_history, args.out / "loss.csv")
    chart = line_chart_svg(
        {
            "train": [s.train_loss for s in ckpt.loss_history],
            "heldout": [s.heldout_loss for s in ckpt.loss_history],
        },
        title="cross-entropy per epoch",
    )
    (args.out / "loss.svg").write_text(chart)

    history = ckpt.loss_history
    reference = history[min(4, len(history) - 1)]
    trend = "rising" if history[-1].heldout_loss > reference.heldout_loss \
        else "falling"
    note = " (model is overfitting its patch set)" if trend == "rising" else ""
    print(f"held-out trend: {trend}{note}")
    print(f"wrote {args.out}/checkpoint.json, loss.csv, loss.svg")
    return 0


def cmd_sample(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    cfg = SamplerConfig(k=args.k, init_len=args.init_len,
                        max_moves=args.max_moves, seed=args.seed)
    if args.k > ckpt.vocab.size:
        raise ValueError(f"k={args.k} exceeds vocabulary size "
                         f"{ckpt.vocab.size}")
    results = generate_images(ckpt, cfg, args.count, jobs=args.jobs)
    svg = render_svg(
        [center_polylines(r.polylines, 180.0) for r in results],
        columns=args.columns, boundary=180.0,
    )
    args.out.write_text(svg)
    meta_path = args.out.with_suffix(".meta.json")
    meta_path.write_text(json.dumps([r.metadata() for r in results], indent=2))
    capped = sum(1 for r in results if r.hit_cap)
    print(f"sampled {len(results)} images (k={args.k}, {capped} hit the "
          f"move cap)")
    print(f"wrote {args.out} and {meta_path}")
    return 0


def cmd_augment_preview(args) -> int:
    image = load_path_image(args.pathimage)
    patches = generate_patch_set(
        image, args.n, AugmentConfig(rng_seed=args.seed),
        np.random.default_rng(args.seed), jobs=args.jobs,
    )
    svg = render_svg([image] + patches, columns=3, color_seed=args.seed)
    args.out.write_text(svg)
    print(f"wrote {args.out} (original + {args.n} patches)")
    return 0


def cmd_demo_recording(args) -> int:
    args.out.write_text(json.dumps(make_demo_recording(args.kind)))
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------

_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(TrainConfig)}


def parse_config_file(path: Path) -> dict:
    """Read ``key = value`` lines into typed TrainConfig overrides."""
    overrides: dict = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ValueError(f"{path}:{lineno}: unknown setting {key!r}")
        overrides[key] = _coerce(value, _FIELD_TYPES[key], key)
    return overrides


def _coerce(value: str, annotation: str, key: str):
    annotation = str(annotation)
    if value.lower() in ("none", "null"):
        if "None" in annotation:
            return None
        raise ValueError(f"setting {key!r} cannot be none")
    if "bool" in annotation:
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"setting {key!r} expects true/false")
    if "int" in annotation:
        return int(value)
    if "float" in annotation:
        return float(value)
    return value


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

_COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "sample": cmd_sample,
    "augment-preview": cmd_augment_preview,
    "demo-recording": cmd_demo_recording,
}


def _read_json(path: Path):
    with open(path) as fh:
        return json.load(fh)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING)
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except NonFiniteError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
