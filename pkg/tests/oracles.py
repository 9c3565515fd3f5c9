"""Independent reference implementations used only by the test suite.

Everything here is written for obviousness, not speed: footprint scans,
exhaustive nearest-zero searches, and set-based flood fill. The library code
must agree with these on random and exhaustive inputs.
"""

from collections import deque

import numpy as np


def brute_dilate(mask, se_h, se_w):
    m = np.asarray(mask).astype(bool)
    h, w = m.shape
    rh, rw = se_h // 2, se_w // 2
    out = np.zeros_like(m)
    for i in range(h):
        for j in range(w):
            block = m[max(0, i - rh) : i + rh + 1, max(0, j - rw) : j + rw + 1]
            out[i, j] = block.any()
    return out.astype(np.uint8)


def brute_erode(mask, se_h, se_w):
    # in-bounds-only rule: the off-image part of the footprint is ignored
    m = np.asarray(mask).astype(bool)
    h, w = m.shape
    rh, rw = se_h // 2, se_w // 2
    out = np.zeros_like(m)
    for i in range(h):
        for j in range(w):
            block = m[max(0, i - rh) : i + rh + 1, max(0, j - rw) : j + rw + 1]
            out[i, j] = block.all()
    return out.astype(np.uint8)


def brute_edt_squared(mask):
    """Exhaustive nearest-zero search, image surrounded by a ring of zeros.

    For each foreground pixel the candidates are every in-image zero pixel
    plus the nearest ring pixel in each axis direction.
    """
    m = np.asarray(mask).astype(bool)
    h, w = m.shape
    out = np.zeros((h, w), dtype=np.int64)
    zeros = np.argwhere(~m)
    for i in range(h):
        for j in range(w):
            if not m[i, j]:
                continue
            ring = min(i + 1, h - i, j + 1, w - j)
            best = ring * ring
            if zeros.size:
                d = (zeros[:, 0] - i) ** 2 + (zeros[:, 1] - j) ** 2
                best = min(best, int(d.min()))
            out[i, j] = best
    return out


def flood_components(mask, connectivity=8):
    """BFS flood fill; components listed in raster-scan discovery order as
    sets of (row, col) pixels."""
    m = np.asarray(mask).astype(bool)
    h, w = m.shape
    if connectivity == 8:
        steps = [(di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1) if (di, dj) != (0, 0)]
    else:
        steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    seen = np.zeros_like(m)
    comps = []
    for i in range(h):
        for j in range(w):
            if not m[i, j] or seen[i, j]:
                continue
            comp = set()
            queue = deque([(i, j)])
            seen[i, j] = True
            while queue:
                ci, cj = queue.popleft()
                comp.add((ci, cj))
                for di, dj in steps:
                    ni, nj = ci + di, cj + dj
                    if 0 <= ni < h and 0 <= nj < w and m[ni, nj] and not seen[ni, nj]:
                        seen[ni, nj] = True
                        queue.append((ni, nj))
            comps.append(comp)
    return comps


def brute_largest_component(mask, connectivity=8):
    comps = flood_components(mask, connectivity)
    out = np.zeros_like(np.asarray(mask), dtype=np.uint8)
    if not comps:
        return out
    best = max(comps, key=len)  # max() keeps the earliest on ties
    for i, j in best:
        out[i, j] = 1
    return out
