"""Command-line pipeline: gen-data, train, predict, postprocess, evaluate.

Each subcommand is one pipeline stage; stages communicate only through
files, so any stage can be rerun in isolation. Every output directory gets
a ``config.json`` with the fully resolved arguments, enough to rerun the
command exactly. Any flag default can be overridden with an environment
variable named ``FRONTSEG_<FLAG>`` (uppercase, dashes as underscores); an
explicit flag still wins.
"""

import argparse
import csv
import dataclasses
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    DatasetManifest,
    SceneParams,
    build_dataset,
    imbalance_ratio,
    load_split_patches,
    normalize_image,
    read_mask,
)
from .distmap import DistanceMapParams, build_distance_map
from .metrics import ToleranceSpec, confusion, dice, iou, mcc, tolerance_confusion
from .model import NetworkSpec, TrainConfig, UNet, load_checkpoint, predict_image, save_checkpoint, train
from .morphology import extract_boundary, largest_component
from .raster import read_f32, threshold, write_f32, write_mask, write_ppm

ENV_PREFIX = "FRONTSEG_"


def _env(flag, default, cast):
    """Environment override for a flag default; explicit flags still win."""
    raw = os.environ.get(ENV_PREFIX + flag.replace("-", "_").upper())
    if raw is None:
        return default
    if cast is bool:
        return raw.lower() in ("1", "true", "yes", "on")
    return cast(raw)


def _add(parser, flag, *, cast=str, default=None, **kw):
    parser.add_argument(f"--{flag}", type=cast, default=_env(flag, default, cast), **kw)


def _parse_size(text):
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"size must look like 256x512, got {text!r}") from exc


def _parse_fractions(text):
    parts = tuple(float(p) for p in text.split(","))
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("fractions must be train,val,test")
    return parts


def _parse_float_list(text):
    return tuple(float(p) for p in text.split(","))


def _write_config(out_dir, command, args):
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    for key, value in resolved.items():
        if isinstance(value, tuple):
            resolved[key] = list(value)
    payload = {
        "schema_version": 1,
        "package_version": __version__,
        "command": command,
        "args": resolved,
    }
    Path(out_dir, "config.json").write_text(json.dumps(payload, indent=2, sort_keys=True))


def _fresh_dir(path):
    path = Path(path)
    if path.exists() and any(path.iterdir()):
        raise ValueError(f"output directory {path} exists and is not empty")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _scene_name(scene):
    return f"scene{scene:04d}"


# ---------------------------------------------------------------------------
# gen-data
# ---------------------------------------------------------------------------


def cmd_gen_data(args):
    out = _fresh_dir(args.out)
    h, w = args.size
    params = SceneParams(
        height=h,
        width=w,
        seed=args.seed,
        front_roughness=args.roughness,
        speckle_looks=args.looks,
        zone_contrast=args.contrast,
        resolution_m=args.resolution,
    )
    manifest = build_dataset(
        out,
        n_scenes=args.scenes,
        seed=args.seed,
        fractions=args.fractions,
        params=params,
        thicken_se=args.thicken,
        augment_mode=None if args.augment == "none" else args.augment,
    )
    _write_config(out, "gen-data", args)
    lines = manifest.stats["lines"]
    ratio = lines["negative"] / max(lines["positive"], 1)
    print(f"wrote {args.scenes} scenes to {out} (lines imbalance 1:{ratio:.0f})")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def cmd_train(args):
    data_root = Path(args.data)
    manifest = DatasetManifest.load(data_root)
    out = _fresh_dir(args.out)

    if args.loss in ("dmap_bce", "dw") and args.target == "zones":
        print("warning: distance-weighted losses are intended for line targets", file=sys.stderr)

    train_xy = load_split_patches(
        data_root, manifest, "train", target=args.target, patch_size=args.patch_size, thicken=args.thicken
    )
    val_xy = load_split_patches(
        data_root, manifest, "val", target=args.target, patch_size=args.patch_size, thicken=args.thicken
    )

    spec = NetworkSpec(depth=args.depth, base_channels=args.base_channels)
    net = UNet(spec, seed=args.seed, dtype=np.float32)
    config = TrainConfig(
        loss=args.loss,
        monitor=args.monitor,
        patience=args.patience,
        min_delta=args.min_delta,
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        lr_min=args.lr_min,
        lr_max=args.lr_max,
        clr_step_epochs=args.clr_step_epochs,
        seed=args.seed,
        threshold=args.tau,
        dmap=DistanceMapParams(w=args.w, R=args.R, k=args.k),
        dmap_max=args.dmax,
    )
    result, adam = train(net, train_xy, val_xy, config)

    meta = {
        "target": args.target,
        "patch_size": args.patch_size,
        "thicken": args.thicken,
        "normalize": True,
        "loss": args.loss,
        "monitor": args.monitor,
        "best_epoch": result.best_epoch,
        "best_value": result.best_value,
    }
    save_checkpoint(out / "checkpoint.ckpt", net, adam, meta=meta)
    with open(out / "history.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_bce", "val_mcc", "lr", "improved"])
        writer.writeheader()
        writer.writerows(result.history)
    _write_config(out, "train", args)
    print(
        f"trained {len(result.history)} epochs, best {args.monitor}={result.best_value:.4f} "
        f"at epoch {result.best_epoch}, stopped_early={result.stopped_early}"
    )
    return 0


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------


def _predict_one(net, data_root, entry, meta, tau):
    image = read_f32(data_root / entry["image"]).values
    if meta.get("normalize", True):
        image = normalize_image(image)
    prob = predict_image(net, image.astype(np.float32), patch_size=meta["patch_size"])
    return prob, threshold(prob, tau)


def cmd_predict(args):
    data_root = Path(args.data)
    manifest = DatasetManifest.load(data_root)
    net, _, meta = load_checkpoint(args.checkpoint)
    if not meta or "patch_size" not in meta or "target" not in meta:
        raise ValueError("checkpoint metadata lacks patch_size/target; not a training run checkpoint")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    entries = manifest.split_entries(args.split)
    if not entries:
        raise ValueError(f"split {args.split!r} has no entries")

    with ThreadPoolExecutor(max_workers=args.threads) as pool:
        results = list(pool.map(lambda e: _predict_one(net, data_root, e, meta, args.tau), entries))

    for entry, (prob, mask) in zip(entries, results):
        name = _scene_name(entry["scene"])
        write_f32(out / f"{name}_prob.f32", prob, resolution_m=entry["resolution_m"])
        write_mask(out / f"{name}_pred.pgm", mask)
        if args.overlay:
            gt = read_mask(data_root / entry[meta["target"]])
            write_ppm(out / f"{name}_overlay.ppm", _overlay_image(read_f32(data_root / entry["image"]).values, mask, gt))
    _write_config(out, "predict", args)
    print(f"predicted {len(entries)} scenes into {out}")
    return 0


def _overlay_image(image, pred, gt):
    """Grayscale backdrop with GT-only green, pred-only red, overlap yellow."""
    lo, hi = float(image.min()), float(image.max())
    gray = np.zeros_like(image) if hi == lo else (image - lo) / (hi - lo)
    rgb = np.repeat((gray * 255).astype(np.uint8)[:, :, None], 3, axis=2)
    pred = pred.astype(bool)
    gt = gt.astype(bool)
    rgb[gt & ~pred] = (0, 255, 0)
    rgb[pred & ~gt] = (255, 0, 0)
    rgb[pred & gt] = (255, 255, 0)
    return rgb


# ---------------------------------------------------------------------------
# postprocess
# ---------------------------------------------------------------------------


def cmd_postprocess(args):
    data_root = Path(args.data)
    manifest = DatasetManifest.load(data_root)
    pred_dir = Path(args.pred)
    entries = manifest.split_entries(args.split)
    for entry in entries:
        name = _scene_name(entry["scene"])
        mask = read_mask(pred_dir / f"{name}_pred.pgm")
        if mask.sum() == 0:
            print(f"warning: {name} prediction is empty; writing empty front line", file=sys.stderr)
            front = np.zeros_like(mask)
        else:
            front = extract_boundary(largest_component(mask))
        write_mask(pred_dir / f"{name}_front.pgm", front)
    _write_config(pred_dir, "postprocess", args)
    print(f"postprocessed {len(entries)} predictions in {pred_dir}")
    return 0


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def _load_gt(data_root, entry, target, thicken):
    from .data import thicken_lines

    gt = read_mask(data_root / entry[target])
    if target == "lines" and thicken:
        gt = thicken_lines(gt, thicken)
    return gt


def cmd_evaluate(args):
    data_root = Path(args.data)
    manifest = DatasetManifest.load(data_root)
    pred_dir = Path(args.pred)
    entries = manifest.split_entries(args.split)
    if not entries:
        raise ValueError(f"split {args.split!r} has no entries")
    suffix = {"mask": "_pred.pgm", "front": "_front.pgm"}[args.kind]

    # zones are evaluated without tolerance; lines at each requested tier
    tiers = [None] if args.target == "zones" else list(args.tolerances)

    per_image = []
    pooled = {}
    for entry in entries:
        name = _scene_name(entry["scene"])
        pred = read_mask(pred_dir / (name + suffix))
        gt = _load_gt(data_root, entry, args.target, args.gt_thicken)
        if pred.shape != gt.shape:
            raise ValueError(f"{name}: prediction shape {pred.shape} does not match GT {gt.shape}")
        for tier in tiers:
            if tier is None:
                counts = confusion(pred, gt)
                effective = 0.0
                key = 0.0
            else:
                spec = ToleranceSpec(tier, entry["resolution_m"])
                counts = tolerance_confusion(pred, gt, spec)
                effective = spec.effective_tolerance_m
                key = tier
            row = {
                "scene": entry["scene"],
                "tolerance_m": key,
                "effective_tolerance_m": effective,
                "iou": iou(counts),
                "dice": dice(counts),
                "mcc": mcc(counts),
            }
            per_image.append(row)
            bucket = pooled.setdefault(key, {"counts": None, "rows": []})
            bucket["counts"] = counts if bucket["counts"] is None else bucket["counts"] + counts
            bucket["rows"].append(row)

    tiers_report = []
    for key, bucket in sorted(pooled.items()):
        counts = bucket["counts"]
        rows = bucket["rows"]
        tiers_report.append(
            {
                "tolerance_m": key,
                "effective_tolerance_m": rows[0]["effective_tolerance_m"],
                "pooled": {"iou": iou(counts), "dice": dice(counts), "mcc": mcc(counts)},
                "mean_per_image": {
                    "iou": float(np.mean([r["iou"] for r in rows])),
                    "dice": float(np.mean([r["dice"] for r in rows])),
                    "mcc": float(np.mean([r["mcc"] for r in rows])),
                },
            }
        )

    report = {
        "split": args.split,
        "target": args.target,
        "kind": args.kind,
        "gt_thicken": args.gt_thicken,
        "n_images": len(entries),
        "tiers": tiers_report,
    }
    out = Path(args.out) if args.out else pred_dir
    out.mkdir(parents=True, exist_ok=True)
    Path(out, "report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    with open(out / "report.csv", "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["scene", "tolerance_m", "effective_tolerance_m", "iou", "dice", "mcc"]
        )
        writer.writeheader()
        writer.writerows(per_image)
    _write_config(out, "evaluate", args)
    for tier in tiers_report:
        print(
            f"tolerance {tier['tolerance_m']:g} m (effective {tier['effective_tolerance_m']:g} m): "
            f"pooled dice={tier['pooled']['dice']:.4f} mcc={tier['pooled']['mcc']:.4f}"
        )
    return 0


# ---------------------------------------------------------------------------
# distmap-preview
# ---------------------------------------------------------------------------


def cmd_distmap_preview(args):
    data_root = Path(args.data)
    manifest = DatasetManifest.load(data_root)
    entry = next((e for e in manifest.entries if e["scene"] == args.scene and e["transform"] == "none"), None)
    if entry is None:
        raise ValueError(f"scene {args.scene} not found in manifest")
    lines = read_mask(data_root / entry["lines"])
    params = DistanceMapParams(w=args.w, R=args.R, k=args.k)
    dmap = build_distance_map(lines, params, strict_literal=args.strict)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_f32(out, dmap, resolution_m=entry["resolution_m"])
    print(f"wrote distance map for scene {args.scene} to {out} (min {dmap.min():.4f}, max {dmap.max():.4f})")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="frontseg", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset directory")
    _add(p, "scenes", cast=int, default=10)
    _add(p, "size", cast=_parse_size, default=(256, 512))
    _add(p, "seed", cast=int, default=0)
    _add(p, "out", required=_env("out", None, str) is None)
    _add(p, "fractions", cast=_parse_fractions, default=(0.6, 0.2, 0.2))
    _add(p, "roughness", cast=float, default=1.5)
    _add(p, "looks", cast=int, default=4)
    _add(p, "contrast", cast=float, default=2.0)
    _add(p, "resolution", cast=float, default=6.0)
    _add(p, "thicken", cast=int, default=5)
    _add(p, "augment", default="flips_and_rot90", choices=["flips_and_rot90", "flips_only", "none"])
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a front segmentation network")
    _add(p, "data", required=_env("data", None, str) is None)
    _add(p, "out", required=_env("out", None, str) is None)
    _add(p, "target", default="lines", choices=["lines", "zones"])
    _add(p, "loss", default="bce", choices=["bce", "wbce", "dmap_bce", "dw"])
    _add(p, "monitor", default="mcc", choices=["mcc", "bce"])
    _add(p, "k", cast=float, default=0.1)
    _add(p, "w", cast=int, default=3)
    _add(p, "R", cast=float, default=1.0)
    _add(p, "dmax", cast=float, default=None)
    _add(p, "patience", cast=int, default=30)
    _add(p, "min-delta", cast=float, default=0.0)
    _add(p, "batch-size", cast=int, default=20)
    _add(p, "max-epochs", cast=int, default=200)
    _add(p, "lr-min", cast=float, default=1e-5)
    _add(p, "lr-max", cast=float, default=1e-2)
    _add(p, "clr-step-epochs", cast=int, default=5)
    _add(p, "seed", cast=int, default=0)
    _add(p, "depth", cast=int, default=3)
    _add(p, "base-channels", cast=int, default=8)
    _add(p, "patch-size", cast=int, default=128)
    _add(p, "thicken", cast=int, default=0)
    _add(p, "tau", cast=float, default=0.5)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="run a checkpoint over a dataset split")
    _add(p, "data", required=_env("data", None, str) is None)
    _add(p, "checkpoint", required=_env("checkpoint", None, str) is None)
    _add(p, "out", required=_env("out", None, str) is None)
    _add(p, "split", default="test", choices=["train", "val", "test"])
    _add(p, "tau", cast=float, default=0.5)
    _add(p, "threads", cast=int, default=1)
    p.add_argument("--overlay", action="store_true", default=_env("overlay", False, bool))
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("postprocess", help="zone prediction masks to front lines")
    _add(p, "data", required=_env("data", None, str) is None)
    _add(p, "pred", required=_env("pred", None, str) is None)
    _add(p, "split", default="test", choices=["train", "val", "test"])
    p.set_defaults(func=cmd_postprocess)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    _add(p, "data", required=_env("data", None, str) is None)
    _add(p, "pred", required=_env("pred", None, str) is None)
    _add(p, "split", default="test", choices=["train", "val", "test"])
    _add(p, "target", default="lines", choices=["lines", "zones"])
    _add(p, "kind", default="mask", choices=["mask", "front"])
    _add(p, "tolerances", cast=_parse_float_list, default=(60.0, 105.0, 150.0))
    _add(p, "gt-thicken", cast=int, default=0)
    _add(p, "out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("distmap-preview", help="write the loss-weight map for one scene")
    _add(p, "data", required=_env("data", None, str) is None)
    _add(p, "scene", cast=int, default=0)
    _add(p, "w", cast=int, default=3)
    _add(p, "R", cast=float, default=1.0)
    _add(p, "k", cast=float, default=0.1)
    _add(p, "out", required=_env("out", None, str) is None)
    p.add_argument("--strict", action="store_true", default=_env("strict", False, bool))
    p.set_defaults(func=cmd_distmap_preview)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # structured nonzero failure for scripting
        print(json.dumps({"error": str(exc), "command": args.command}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
