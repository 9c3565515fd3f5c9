"""Binary morphology and distance primitives: rectangular dilation and
erosion, an exact Euclidean distance transform, connected components, and
interior-boundary extraction.

Conventions, chosen once and used everywhere:

* Dilation treats out-of-bounds pixels as 0 (they contribute nothing to the
  footprint union).
* Erosion keeps a pixel iff every IN-BOUNDS pixel under the footprint is 1;
  the part of the footprint hanging off the image is ignored. This keeps
  erode(dilate(x)) a superset of x for every mask, including pixels at the
  image border.
* The distance transform behaves as if the image were surrounded by a ring
  of zeros, so an all-ones mask still gets finite distances (the distance to
  the nearest image border). Squared distances are exact integers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "StructuringElement",
    "dilate",
    "erode",
    "edt",
    "edt_squared",
    "largest_component",
    "extract_boundary",
]


@dataclass(frozen=True)
class StructuringElement:
    """All-ones rectangular footprint with odd dims so the anchor is the
    exact center."""

    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("structuring element dims must be >= 1")
        if self.height % 2 == 0 or self.width % 2 == 0:
            raise ValueError("structuring element dims must be odd")


def _se_dims(se):
    """Accept an int (square side), an (h, w) pair, or a StructuringElement."""
    if isinstance(se, StructuringElement):
        h, w = se.height, se.width
    elif isinstance(se, (int, np.integer)):
        h = w = int(se)
    else:
        h, w = (int(x) for x in se)
    StructuringElement(h, w)  # validates oddness
    return h, w


def _as_mask(mask):
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("mask values must all be 0 or 1")
    return arr.astype(bool)


def _box_sum(values, rh, rw):
    """Sum of values over a (2*rh+1) x (2*rw+1) window centered per pixel,
    window clipped at the image edges. Exact integer arithmetic."""
    arr = values.astype(np.int64)
    # integral image with a zero guard row/col
    ii = np.zeros((arr.shape[0] + 1, arr.shape[1] + 1), dtype=np.int64)
    np.cumsum(arr, axis=0, out=ii[1:, 1:])
    np.cumsum(ii[1:, 1:], axis=1, out=ii[1:, 1:])
    h, w = arr.shape
    r0 = np.clip(np.arange(h) - rh, 0, h)
    r1 = np.clip(np.arange(h) + rh + 1, 0, h)
    c0 = np.clip(np.arange(w) - rw, 0, w)
    c1 = np.clip(np.arange(w) + rw + 1, 0, w)
    return (
        ii[np.ix_(r1, c1)] - ii[np.ix_(r0, c1)] - ii[np.ix_(r1, c0)] + ii[np.ix_(r0, c0)]
    )


def dilate(mask, se):
    """Rectangular dilation: output pixel is 1 iff any input pixel under the
    centered footprint is 1."""
    m = _as_mask(mask)
    rh, rw = (d // 2 for d in _se_dims(se))
    return (_box_sum(m, rh, rw) > 0).astype(np.uint8)


def erode(mask, se):
    """Rectangular erosion with in-bounds-only semantics: output pixel is 1
    iff every in-bounds pixel under the centered footprint is 1."""
    m = _as_mask(mask)
    rh, rw = (d // 2 for d in _se_dims(se))
    counts = _box_sum(np.ones_like(m), rh, rw)  # in-bounds footprint size per pixel
    return (_box_sum(m, rh, rw) == counts).astype(np.uint8)


# ---------------------------------------------------------------------------
# Exact Euclidean distance transform
# ---------------------------------------------------------------------------


def _hull_pass_row(f, n, v, z, out):
    """Exact 1-D squared-distance relaxation: out[q] = min_p (q-p)^2 + f[p].

    Lower envelope of parabolas. f holds non-negative squared offsets small
    enough that the float intersection arithmetic below is exact for every
    comparison that matters.
    """
    k = 0
    v[0] = 0
    z[0] = -np.inf
    z[1] = np.inf
    for q in range(1, n):
        fq = f[q] + q * q
        while True:
            p = v[k]
            s = (fq - (f[p] + p * p)) / (2 * (q - p))
            if s > z[k]:
                break
            k -= 1
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        p = v[k]
        out[q] = (q - p) * (q - p) + f[p]


def edt_squared(mask):
    """Exact squared Euclidean distance from each foreground pixel to the
    nearest zero, with the image treated as surrounded by a ring of zeros.
    Returns int64; background pixels are 0."""
    m = _as_mask(mask)
    h, w = m.shape
    padded = np.zeros((h + 2, w + 2), dtype=bool)
    padded[1:-1, 1:-1] = m
    ph, pw = padded.shape

    # vertical sweep: per-column distance to the nearest zero along the column
    big = ph + pw
    g = np.where(padded, big, 0).astype(np.int64)
    for i in range(1, ph):
        np.minimum(g[i], g[i - 1] + 1, out=g[i])
    for i in range(ph - 2, -1, -1):
        np.minimum(g[i], g[i + 1] + 1, out=g[i])
    np.square(g, out=g)

    # horizontal pass: lower envelope per row
    out = np.empty((ph, pw), dtype=np.int64)
    v = [0] * pw
    z = [0.0] * (pw + 1)
    row_out = [0] * pw
    for i in range(ph):
        f = g[i].tolist()
        _hull_pass_row(f, pw, v, z, row_out)
        out[i] = row_out
    return out[1:-1, 1:-1]


def edt(mask):
    """Exact Euclidean distance transform (float64). See edt_squared."""
    return np.sqrt(edt_squared(mask).astype(np.float64))


# ---------------------------------------------------------------------------
# Connected components
# ---------------------------------------------------------------------------


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, a):
        parent = self.parent
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # anchor to the smaller index so roots stay raster-ordered
            if ra < rb:
                self.parent[rb] = ra
            else:
                self.parent[ra] = rb


def _row_runs(row):
    """[start, end) column intervals of consecutive ones in a 1-D bool row."""
    padded = np.empty(row.size + 2, dtype=np.int8)
    padded[0] = padded[-1] = 0
    padded[1:-1] = row
    diff = np.diff(padded)
    starts = np.flatnonzero(diff == 1)
    ends = np.flatnonzero(diff == -1)
    return list(zip(starts.tolist(), ends.tolist()))


def largest_component(mask, connectivity=8):
    """Keep only the largest connected foreground component. Components are
    labeled in raster-scan discovery order; a size tie keeps the
    earliest-discovered one. Returns an empty mask for empty input."""
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    m = _as_mask(mask)
    h, w = m.shape

    # run-length union-find: one node per horizontal run of ones
    runs = []  # (row, start, end)
    row_run_ids = []
    for i in range(h):
        ids = []
        for s, e in _row_runs(m[i]):
            ids.append(len(runs))
            runs.append((i, s, e))
        row_run_ids.append(ids)
    if not runs:
        return np.zeros_like(m, dtype=np.uint8)

    uf = _UnionFind(len(runs))
    slack = 1 if connectivity == 8 else 0
    for i in range(1, h):
        for rid in row_run_ids[i]:
            _, s, e = runs[rid]
            for pid in row_run_ids[i - 1]:
                _, s2, e2 = runs[pid]
                if s < e2 + slack and s2 < e + slack:
                    uf.union(rid, pid)

    sizes = {}
    first_pixel = {}
    for rid, (i, s, e) in enumerate(runs):
        root = uf.find(rid)
        sizes[root] = sizes.get(root, 0) + (e - s)
        idx = i * w + s
        if root not in first_pixel or idx < first_pixel[root]:
            first_pixel[root] = idx

    # largest wins; tie broken by earliest raster-scan discovery
    best = min(sizes, key=lambda r: (-sizes[r], first_pixel[r]))
    out = np.zeros((h, w), dtype=np.uint8)
    for rid, (i, s, e) in enumerate(runs):
        if uf.find(rid) == best:
            out[i, s:e] = 1
    return out


def extract_boundary(zones):
    """1-px interior boundary of a region mask: the mask minus its 3x3
    erosion, with pixels on the image border excluded."""
    m = _as_mask(zones)
    boundary = m & ~erode(m, 3).astype(bool)
    boundary[0, :] = boundary[-1, :] = False
    boundary[:, 0] = boundary[:, -1] = False
    return boundary.astype(np.uint8)
