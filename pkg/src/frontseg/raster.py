"""Core grid types, zero padding to patch multiples, patch extraction and
prediction stitching, plus the on-disk raster formats (binary PGM and raw
float32 with a JSON sidecar).

All numeric operations work on plain 2-D numpy arrays. ``Raster`` and
``BinaryMask`` are thin validated carriers used at IO and pipeline
boundaries; their ``values`` attribute is the array the functions below
consume.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Raster",
    "BinaryMask",
    "PatchLayout",
    "pad_to_multiple",
    "extract_patches",
    "stitch_predictions",
    "threshold",
    "read_pgm",
    "write_pgm",
    "read_mask",
    "write_mask",
    "read_f32",
    "write_f32",
    "write_ppm",
]


def _as_2d(values, name="values"):
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have positive dims, got {arr.shape}")
    return arr


@dataclass(frozen=True)
class Raster:
    """H x W grid of real-valued intensities with an optional spatial
    resolution in meters per pixel (needed for tolerance evaluation)."""

    values: np.ndarray
    resolution_m: float | None = None

    def __post_init__(self):
        arr = _as_2d(self.values)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("raster values must be finite")
        if self.resolution_m is not None and not self.resolution_m > 0:
            raise ValueError("resolution_m must be > 0 when given")
        object.__setattr__(self, "values", arr)

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class BinaryMask:
    """H x W grid over {0,1}, stored as uint8."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_2d(self.values)
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("mask values must all be 0 or 1")
        object.__setattr__(self, "values", arr.astype(np.uint8))

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class PatchLayout:
    """Geometry linking an original grid to its zero-padded, patch-tiled
    counterpart: padded dims are the smallest multiples of ``patch_size``
    that cover the original dims, and ``rows x cols`` patches tile the
    padded grid exactly without overlap."""

    original_height: int
    original_width: int
    padded_height: int
    padded_width: int
    patch_size: int
    rows: int
    cols: int

    def __post_init__(self):
        p = self.patch_size
        if p < 1:
            raise ValueError("patch_size must be >= 1")
        for dim, padded, n in (
            (self.original_height, self.padded_height, self.rows),
            (self.original_width, self.padded_width, self.cols),
        ):
            if padded % p != 0 or padded < dim or padded - dim >= p:
                raise ValueError("padded dims must be the smallest patch multiples covering the original")
            if n * p != padded:
                raise ValueError("patch grid must tile the padded dims exactly")


def pad_to_multiple(values, patch_size):
    """Zero-pad a 2-D array at the bottom/right so both dims become the next
    multiple of ``patch_size``; original content stays anchored top-left.

    Returns ``(padded, layout)``.
    """
    arr = _as_2d(values)
    if patch_size < 1:
        raise ValueError("patch_size must be >= 1")
    h, w = arr.shape
    rows = -(-h // patch_size)  # ceil division
    cols = -(-w // patch_size)
    ph, pw = rows * patch_size, cols * patch_size
    padded = np.zeros((ph, pw), dtype=arr.dtype)
    padded[:h, :w] = arr
    layout = PatchLayout(h, w, ph, pw, patch_size, rows, cols)
    return padded, layout


def extract_patches(values, layout):
    """Cut a padded array into ``rows x cols`` non-overlapping square patches
    in row-major patch order."""
    arr = _as_2d(values)
    if arr.shape != (layout.padded_height, layout.padded_width):
        raise ValueError(
            f"array shape {arr.shape} does not match layout padded dims "
            f"({layout.padded_height}, {layout.padded_width})"
        )
    p = layout.patch_size
    return [
        arr[r * p : (r + 1) * p, c * p : (c + 1) * p].copy()
        for r in range(layout.rows)
        for c in range(layout.cols)
    ]


def stitch_predictions(patches, layout):
    """Reassemble row-major patches into the padded grid, then crop the
    padding so the result has the original (pre-padding) dims."""
    p = layout.patch_size
    if len(patches) != layout.rows * layout.cols:
        raise ValueError(f"expected {layout.rows * layout.cols} patches, got {len(patches)}")
    first = np.asarray(patches[0])
    out = np.zeros((layout.padded_height, layout.padded_width), dtype=first.dtype)
    for i, patch in enumerate(patches):
        patch = np.asarray(patch)
        if patch.shape != (p, p):
            raise ValueError(f"patch {i} has shape {patch.shape}, expected ({p}, {p})")
        r, c = divmod(i, layout.cols)
        out[r * p : (r + 1) * p, c * p : (c + 1) * p] = patch
    return out[: layout.original_height, : layout.original_width].copy()


def threshold(pred, tau):
    """Binarize probabilities: 1 where ``pred >= tau`` (inclusive), else 0.
    Values must lie in [0, 1]."""
    arr = _as_2d(np.asarray(pred, dtype=np.float64), "pred")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("predictions must lie in [0, 1]")
    return (arr >= tau).astype(np.uint8)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

_PGM_HEADER = re.compile(rb"^P5\s")


def _read_header_tokens(data, count):
    # Netpbm headers: whitespace-separated tokens, '#' comments run to EOL.
    tokens = []
    pos = 2  # past the magic
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            eol = data.find(b"\n", pos)
            pos = len(data) if eol < 0 else eol + 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos + 1  # single whitespace after maxval precedes raster data


def read_pgm(path):
    """Read a binary (P5) graymap. Returns ``(values, maxval)`` where values
    is uint8 for maxval < 256 and uint16 otherwise. 16-bit samples are stored
    most significant byte first."""
    data = Path(path).read_bytes()
    if not _PGM_HEADER.match(data):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    (w, h, maxval), offset = _read_header_tokens(data, 3)
    w, h, maxval = int(w), int(h), int(maxval)
    if not (0 < maxval < 65536):
        raise ValueError(f"{path}: maxval {maxval} out of range")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    n = h * w
    raw = data[offset : offset + n * dtype.itemsize]
    if len(raw) != n * dtype.itemsize:
        raise ValueError(f"{path}: truncated pixel data")
    values = np.frombuffer(raw, dtype=dtype).reshape(h, w)
    if maxval > 255:
        values = values.astype(np.uint16)
    return values.copy(), maxval


def write_pgm(path, values, maxval=None):
    """Write a binary (P5) graymap. ``values`` must be non-negative integers
    no larger than ``maxval`` (default: 255 for uint8 input, 65535 for wider
    integer types)."""
    arr = _as_2d(values)
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError("PGM values must be integers")
    if maxval is None:
        maxval = 255 if arr.dtype.itemsize == 1 else 65535
    if not (0 < maxval < 65536):
        raise ValueError(f"maxval {maxval} out of range")
    if arr.min() < 0 or arr.max() > maxval:
        raise ValueError("values exceed maxval")
    h, w = arr.shape
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    header = f"P5\n{w} {h}\n{maxval}\n".encode()
    Path(path).write_bytes(header + arr.astype(dtype).tobytes())


def read_mask(path):
    """Read a P5 mask and normalize to {0,1}. The file may use any maxval but
    every pixel must be exactly 0 or maxval."""
    values, maxval = read_pgm(path)
    if not np.isin(values, (0, maxval)).all():
        raise ValueError(f"{path}: mask pixels must all be 0 or {maxval}")
    return (values > 0).astype(np.uint8)


def write_mask(path, mask):
    """Write a {0,1} mask as P5 with maxval 1."""
    arr = _as_2d(mask, "mask")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("mask values must all be 0 or 1")
    write_pgm(path, arr.astype(np.uint8), maxval=1)


def write_f32(path, values, resolution_m=None):
    """Write a raw little-endian float32 row-major grid plus a JSON sidecar
    ``<path>.json`` recording height, width and resolution."""
    arr = _as_2d(values)
    path = Path(path)
    path.write_bytes(arr.astype("<f4").tobytes())
    sidecar = {"height": int(arr.shape[0]), "width": int(arr.shape[1]), "resolution_m": resolution_m}
    Path(str(path) + ".json").write_text(json.dumps(sidecar))


def read_f32(path):
    """Read a raw float32 grid written by :func:`write_f32`. Returns a
    :class:`Raster` carrying the sidecar resolution."""
    path = Path(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    h, w = int(meta["height"]), int(meta["width"])
    raw = path.read_bytes()
    if len(raw) != h * w * 4:
        raise ValueError(f"{path}: expected {h * w * 4} bytes, found {len(raw)}")
    values = np.frombuffer(raw, dtype="<f4").reshape(h, w).astype(np.float32)
    return Raster(values, resolution_m=meta.get("resolution_m"))


def write_ppm(path, rgb):
    """Write an H x W x 3 uint8 array as a binary (P6) pixmap."""
    arr = np.asarray(rgb)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise ValueError("expected an H x W x 3 uint8 array")
    h, w = arr.shape[:2]
    header = f"P6\n{w} {h}\n255\n".encode()
    Path(path).write_bytes(header + arr.tobytes())
