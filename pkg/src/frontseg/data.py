"""Synthetic glacier scenes, dataset manifests, splits and augmentation.

Each scene is an intensity image split into two zones by a front curve that
is monotone in rows: a seeded random walk chooses one column per row, the
zones mask covers the ice side, and the lines mask holds exactly that one
front pixel per row. Intensities are per-zone means multiplied by gamma
speckle, so ``speckle_looks`` controls the noise level the way multi-look
averaging does for radar imagery.

Datasets live in a directory of per-scene files plus a ``manifest.json``.
Augmentation never materializes transformed pixels; it adds manifest entries
tagged with a transform name that loaders apply on read.
"""

import dataclasses
import json
from pathlib import Path

import numpy as np

from .morphology import dilate, extract_boundary
from .raster import (
    BinaryMask,
    Raster,
    extract_patches,
    pad_to_multiple,
    read_f32,
    read_mask,
    write_f32,
    write_mask,
)

TRANSFORMS = ("none", "hflip", "rot90")
AUGMENT_MODES = ("flips_and_rot90", "flips_only")
SPLITS = ("train", "val", "test")


@dataclasses.dataclass(frozen=True)
class SceneParams:
    height: int = 256
    width: int = 512
    seed: int = 0
    front_roughness: float = 1.5
    speckle_looks: int = 4
    zone_contrast: float = 2.0
    resolution_m: float = 6.0

    def __post_init__(self):
        if self.height < 64 or self.width < 64:
            raise ValueError("scene dims must be at least 64 pixels")
        if self.zone_contrast <= 0:
            raise ValueError("zone_contrast must be positive")
        if self.speckle_looks < 1:
            raise ValueError("speckle_looks must be at least 1")
        if self.front_roughness < 0:
            raise ValueError("front_roughness must be non-negative")
        if self.resolution_m <= 0:
            raise ValueError("resolution_m must be positive")


def generate_scene(params):
    """Return ``(image, zones, lines)`` for one synthetic scene.

    The front column per row follows a clipped random walk with step scale
    ``front_roughness``. ``zones`` is 1 left of and including the front,
    ``lines`` is 1 at the front pixel only (one per row), and the image is
    ``zone_contrast`` vs 1.0 mean intensity times gamma speckle with shape
    ``speckle_looks`` and mean 1.
    """
    h, w = params.height, params.width
    rng = np.random.default_rng(params.seed)

    # front must stay clear of the side borders so its boundary is interior
    margin = max(4, w // 16)
    cols = np.empty(h, np.int64)
    cols[0] = rng.integers(w // 3, 2 * w // 3)
    steps = np.rint(params.front_roughness * rng.standard_normal(h - 1)).astype(np.int64)
    for i in range(1, h):
        cols[i] = min(max(cols[i - 1] + steps[i - 1], margin), w - 1 - margin)

    rows = np.arange(h)
    zones = (np.arange(w)[None, :] <= cols[:, None]).astype(np.uint8)
    lines = np.zeros((h, w), np.uint8)
    lines[rows, cols] = 1

    means = np.where(zones == 1, params.zone_contrast, 1.0)
    looks = params.speckle_looks
    speckle = rng.gamma(shape=looks, scale=1.0 / looks, size=(h, w))
    image = (means * speckle).astype(np.float64)
    return (
        Raster(image, resolution_m=params.resolution_m),
        BinaryMask(zones),
        BinaryMask(lines),
    )


def thicken_lines(lines, se_size):
    """Dilate a lines mask with a square se_size x se_size element."""
    if se_size % 2 == 0:
        raise ValueError("se_size must be odd")
    arr = lines.values if isinstance(lines, BinaryMask) else lines
    return dilate(arr, se_size)


def imbalance_ratio(mask):
    """Positive:negative pixel ratio expressed as negatives per positive."""
    arr = np.asarray(mask.values if isinstance(mask, BinaryMask) else mask)
    pos = int(np.count_nonzero(arr))
    neg = int(arr.size - pos)
    if pos == 0:
        return float("inf")
    return neg / pos


def apply_transform(values, transform):
    """Apply a manifest transform tag to a 2-D array."""
    if transform == "none":
        return np.asarray(values)
    if transform == "hflip":
        return np.asarray(values)[:, ::-1]
    if transform == "rot90":
        return np.rot90(np.asarray(values))
    raise ValueError(f"unknown transform {transform!r}")


def augment(entries, mode):
    """Expand entries with transform tags: x3 with rotations, x2 without."""
    if mode not in AUGMENT_MODES:
        raise ValueError(f"mode must be one of {AUGMENT_MODES}")
    tags = TRANSFORMS if mode == "flips_and_rot90" else TRANSFORMS[:2]
    out = []
    for entry in entries:
        for tag in tags:
            out.append({**entry, "transform": tag})
    return out


def make_splits(n_scenes, seed, fractions):
    """Assign each scene index a split label by seeded shuffle + partition.

    fractions is (train, val, test) summing to 1. A positive fraction must
    receive at least one scene.
    """
    if len(fractions) != len(SPLITS):
        raise ValueError("fractions must give (train, val, test)")
    if any(f < 0 for f in fractions):
        raise ValueError("fractions must be non-negative")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must sum to 1")
    counts = [int(round(n_scenes * f)) for f in fractions[:-1]]
    counts.append(n_scenes - sum(counts))
    for split, frac, count in zip(SPLITS, fractions, counts):
        if frac > 0 and count <= 0:
            raise ValueError(f"{n_scenes} scenes leave the {split} split empty")
        if count < 0:
            raise ValueError("rounded split counts exceed the scene count")
    order = np.random.default_rng(seed).permutation(n_scenes)
    labels = [""] * n_scenes
    at = 0
    for split, count in zip(SPLITS, counts):
        for idx in order[at : at + count]:
            labels[idx] = split
        at += count
    return labels


@dataclasses.dataclass
class DatasetManifest:
    entries: list
    stats: dict
    seed: int
    resolution_m: float

    def split_entries(self, split):
        if split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}")
        return [e for e in self.entries if e["split"] == split]

    def to_json(self):
        return json.dumps(
            {
                "entries": self.entries,
                "stats": self.stats,
                "seed": self.seed,
                "resolution_m": self.resolution_m,
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text):
        raw = json.loads(text)
        return cls(raw["entries"], raw["stats"], raw["seed"], raw["resolution_m"])

    def save(self, root):
        Path(root, "manifest.json").write_text(self.to_json())

    @classmethod
    def load(cls, root):
        return cls.from_json(Path(root, "manifest.json").read_text())

    def validate(self, root):
        """Check paths resolve, splits partition scenes, stats still match."""
        root = Path(root)
        scene_split = {}
        for entry in self.entries:
            for key in ("image", "zones", "lines"):
                if not (root / entry[key]).exists():
                    raise ValueError(f"missing file {entry[key]}")
            prev = scene_split.setdefault(entry["scene"], entry["split"])
            if prev != entry["split"]:
                raise ValueError(f"scene {entry['scene']} appears in two splits")
        recounted = _count_stats(root, self.entries)
        thickened = self.stats.get("lines_thickened")
        if thickened is not None:
            se = thickened["se_size"]
            pos = neg = 0
            seen = set()
            for entry in self.entries:
                if entry["scene"] in seen:
                    continue
                seen.add(entry["scene"])
                thick = thicken_lines(read_mask(root / entry["lines"]), se)
                pos += int(np.count_nonzero(thick))
                neg += int(thick.size - np.count_nonzero(thick))
            recounted["lines_thickened"] = {"se_size": se, "positive": pos, "negative": neg}
        if recounted != self.stats:
            raise ValueError("manifest stats do not match on-disk content")


def _count_stats(root, entries):
    root = Path(root)
    stats = {}
    seen = set()
    for entry in entries:
        if entry["scene"] in seen:
            continue  # augmented entries share pixels with the base scene
        seen.add(entry["scene"])
        for kind in ("zones", "lines"):
            mask = read_mask(root / entry[kind])
            pos = int(np.count_nonzero(mask))
            bucket = stats.setdefault(kind, {"positive": 0, "negative": 0})
            bucket["positive"] += pos
            bucket["negative"] += mask.size - pos
    return stats


def build_dataset(
    out_dir,
    n_scenes,
    seed,
    fractions=(0.6, 0.2, 0.2),
    params=SceneParams(),
    thicken_se=5,
    augment_mode="flips_and_rot90",
):
    """Generate scenes, write them under out_dir and return the manifest.

    Scene i uses seed ``seed + i``; split assignment uses ``seed`` itself.
    Train entries are augmented per augment_mode (lazy transform tags).
    The manifest stats cover the stored masks plus the imbalance the lines
    would have after thickening with ``thicken_se``.
    """
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    labels = make_splits(n_scenes, seed, fractions)

    entries = []
    thick_pos = thick_neg = 0
    for i in range(n_scenes):
        scene_params = dataclasses.replace(params, seed=seed + i)
        image, zones, lines = generate_scene(scene_params)
        name = f"scene{i:04d}"
        write_f32(root / f"{name}_image.f32", image.values, resolution_m=params.resolution_m)
        write_mask(root / f"{name}_zones.pgm", zones.values)
        write_mask(root / f"{name}_lines.pgm", lines.values)
        if thicken_se:
            thick = thicken_lines(lines.values, thicken_se)
            thick_pos += int(np.count_nonzero(thick))
            thick_neg += int(thick.size - np.count_nonzero(thick))
        entries.append(
            {
                "scene": i,
                "image": f"{name}_image.f32",
                "zones": f"{name}_zones.pgm",
                "lines": f"{name}_lines.pgm",
                "resolution_m": params.resolution_m,
                "split": labels[i],
                "transform": "none",
            }
        )

    stats = _count_stats(root, entries)
    if thicken_se:
        stats["lines_thickened"] = {
            "se_size": thicken_se,
            "positive": thick_pos,
            "negative": thick_neg,
        }

    train = [e for e in entries if e["split"] == "train"]
    rest = [e for e in entries if e["split"] != "train"]
    if augment_mode is not None:
        train = augment(train, augment_mode)
    manifest = DatasetManifest(train + rest, stats, seed, params.resolution_m)
    manifest.save(root)
    return manifest


def normalize_image(values):
    """Per-image standardization with a zero-spread guard."""
    arr = np.asarray(values, np.float64)
    std = arr.std()
    if std == 0:
        return np.zeros_like(arr)
    return (arr - arr.mean()) / std


def load_entry(root, entry, target="lines", thicken=0, normalize=True):
    """Materialize one manifest entry as (image, target mask) arrays."""
    if target not in ("lines", "zones"):
        raise ValueError("target must be 'lines' or 'zones'")
    root = Path(root)
    image = read_f32(root / entry["image"]).values
    mask = read_mask(root / entry[target])
    if target == "lines" and thicken:
        mask = thicken_lines(mask, thicken)
    image = apply_transform(image, entry["transform"])
    mask = apply_transform(mask, entry["transform"])
    if normalize:
        image = normalize_image(image)
    return image.astype(np.float32), mask.astype(np.uint8)


def load_split_patches(root, manifest, split, target="lines", patch_size=128, thicken=0):
    """Stack every scene of a split into (x, y) patch arrays for training."""
    xs, ys = [], []
    for entry in manifest.split_entries(split):
        image, mask = load_entry(root, entry, target=target, thicken=thicken)
        padded_x, layout = pad_to_multiple(image, patch_size)
        padded_y, _ = pad_to_multiple(mask, patch_size)
        xs.append(extract_patches(padded_x, layout))
        ys.append(extract_patches(padded_y, layout))
    if not xs:
        raise ValueError(f"split {split!r} has no entries")
    return (
        np.concatenate(xs).astype(np.float32),
        np.concatenate(ys).astype(np.uint8),
    )


def lines_within_boundary(zones, lines):
    """True when every line pixel lies on the zone boundary or image border
    ring (boundary extraction excludes border rows and columns)."""
    z = zones.values if isinstance(zones, BinaryMask) else zones
    l = lines.values if isinstance(lines, BinaryMask) else lines
    allowed = extract_boundary(z).astype(bool)
    allowed[0, :] = allowed[-1, :] = True
    allowed[:, 0] = allowed[:, -1] = True
    return bool((~allowed & (np.asarray(l) > 0)).sum() == 0)
