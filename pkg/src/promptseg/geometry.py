"""Raster kernels shared by every segmentation pipeline.

Conventions: binary masks are boolean H x W arrays, instance label maps are
nonnegative int32 H x W arrays with 0 as background, distance maps are
float32 with distances measured between pixel centers.

All kernels are pure functions and never mutate their inputs, so they are
safe to run concurrently over many images.
"""

from __future__ import annotations

import heapq

import numpy as np

from .errors import MalformedRleError, SeedOutsideRegionError, ShapeMismatchError

# Distance assigned to every pixel of an all-true mask, which has no
# boundary to measure against.
UNBOUNDED_DISTANCE = float(np.finfo(np.float32).max)

_OFFSETS_4 = ((-1, 0), (1, 0), (0, -1), (0, 1))
_OFFSETS_8 = _OFFSETS_4 + ((-1, -1), (-1, 1), (1, -1), (1, 1))


def _as_mask(mask) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"expected a 2-D mask, got shape {arr.shape}")
    return arr.astype(bool, copy=False)


def _neighbor_offsets(connectivity: int):
    if connectivity == 4:
        return _OFFSETS_4
    if connectivity == 8:
        return _OFFSETS_8
    raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")


def _row_runs(row: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Half-open [start, end) runs of true pixels in one row."""
    padded = np.zeros(row.size + 2, dtype=bool)
    padded[1:-1] = row
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return edges[0::2], edges[1::2]


def connected_components(mask, connectivity: int = 8) -> tuple[np.ndarray, int]:
    """Label connected regions of true pixels.

    Two true pixels share a label iff they are connected under the given
    connectivity (4 or 8). Labels are dense in 1..count and assigned in
    first-encounter row-major order. Returns the int32 label map and the
    component count.

    Row runs are merged with a union-find over consecutive rows, so the
    cost is linear in the number of runs rather than the number of pixels.
    """
    mask = _as_mask(mask)
    _neighbor_offsets(connectivity)
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=np.int32)
    if h == 0 or w == 0 or not mask.any():
        return labels, 0

    # Runs [s, e) on consecutive rows touch under 4-connectivity iff the
    # column intervals overlap, and under 8-connectivity iff they overlap
    # when one interval is widened by a single column.
    touch = 1 if connectivity == 8 else 0
    parent: list[int] = []
    runs: list[tuple[int, int, int]] = []

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    prev: list[int] = []
    for i in range(h):
        starts, ends = _row_runs(mask[i])
        cur: list[int] = []
        for s, e in zip(starts.tolist(), ends.tolist()):
            parent.append(len(parent))
            runs.append((i, s, e))
            cur.append(len(parent) - 1)
        a = b = 0
        while a < len(prev) and b < len(cur):
            _, s1, e1 = runs[prev[a]]
            _, s2, e2 = runs[cur[b]]
            if s1 < e2 + touch and s2 < e1 + touch:
                ra, rb = find(prev[a]), find(cur[b])
                if ra != rb:
                    # Keeping the smaller root makes every component's root
                    # its first run, preserving first-encounter ordering.
                    parent[max(ra, rb)] = min(ra, rb)
            if e1 < e2:
                a += 1
            elif e2 < e1:
                b += 1
            else:
                a += 1
                b += 1
        prev = cur

    relabel: dict[int, int] = {}
    for idx, (i, s, e) in enumerate(runs):
        root = find(idx)
        lab = relabel.get(root)
        if lab is None:
            lab = len(relabel) + 1
            relabel[root] = lab
        labels[i, s:e] = lab
    return labels, len(relabel)


def _envelope_row(g: list[int]) -> list[int]:
    """Exact min_k (j - k)^2 + g[k]^2 for every column j of one row.

    Lower envelope of parabolas rooted at the column positions; all final
    arithmetic is integer, so the result is exact.
    """
    n = len(g)
    f = [x * x for x in g]
    v = [0] * n
    z = [0.0] * (n + 1)
    k = 0
    z[0] = -np.inf
    z[1] = np.inf
    for q in range(1, n):
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]))
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]))
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    out = [0] * n
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        dq = q - v[k]
        out[q] = dq * dq + f[v[k]]
    return out


def edt(mask) -> np.ndarray:
    """Exact Euclidean distance from each true pixel to the nearest false pixel.

    False pixels map to 0. An all-true mask has no false pixel to measure
    against; every value is then UNBOUNDED_DISTANCE.

    Two passes: a vertical scan yields per-column distances to the nearest
    false pixel, then a per-row lower-envelope pass minimizes over columns.
    Squared distances stay integer throughout, so results are exact.
    """
    mask = _as_mask(mask)
    h, w = mask.shape
    if h == 0 or w == 0:
        return np.zeros((h, w), dtype=np.float32)
    if mask.all():
        return np.full((h, w), UNBOUNDED_DISTANCE, dtype=np.float32)

    # cap exceeds any true vertical distance, and cap**2 exceeds any true
    # squared distance, so capped columns never win the envelope pass.
    cap = h + w
    g = np.where(mask, cap, 0).astype(np.int64)
    for i in range(1, h):
        np.minimum(g[i], g[i - 1] + 1, out=g[i])
    for i in range(h - 2, -1, -1):
        np.minimum(g[i], g[i + 1] + 1, out=g[i])
    np.minimum(g, cap, out=g)

    d2 = np.empty((h, w), dtype=np.int64)
    for i in range(h):
        d2[i] = _envelope_row(g[i].tolist())
    return np.sqrt(d2.astype(np.float64)).astype(np.float32)


def seeded_watershed(elevation, seeds, region, connectivity: int = 4) -> np.ndarray:
    """Priority-flood growth of labeled seeds across a region mask.

    Pixels are popped in ascending (elevation, insertion order) priority;
    FIFO insertion order makes ties deterministic. A pixel inherits the
    label of the already-labeled neighbor that first queues it. Pixels
    outside the region stay 0, as do region pixels unreachable from any
    seed.

    Raises SeedOutsideRegionError if a nonzero seed lies on a region-false
    pixel.
    """
    elevation = np.asarray(elevation, dtype=np.float64)
    seeds = np.asarray(seeds)
    region = _as_mask(region)
    if elevation.shape != seeds.shape or seeds.shape != region.shape:
        raise ShapeMismatchError(
            "elevation, seeds and region must share one shape, got "
            f"{elevation.shape}, {seeds.shape}, {region.shape}"
        )
    if np.any((seeds != 0) & ~region):
        raise SeedOutsideRegionError("seed labels present outside the region mask")
    offsets = _neighbor_offsets(connectivity)

    h, w = region.shape
    out = seeds.astype(np.int32).copy()
    heap: list[tuple[float, int, int, int]] = []
    counter = 0
    for i, j in np.argwhere(seeds != 0).tolist():
        heap.append((float(elevation[i, j]), counter, i, j))
        counter += 1
    heapq.heapify(heap)

    while heap:
        _, _, i, j = heapq.heappop(heap)
        lab = out[i, j]
        for di, dj in offsets:
            ni, nj = i + di, j + dj
            if 0 <= ni < h and 0 <= nj < w and region[ni, nj] and out[ni, nj] == 0:
                out[ni, nj] = lab
                heapq.heappush(heap, (float(elevation[ni, nj]), counter, ni, nj))
                counter += 1
    return out


def mask_iou(a, b) -> float:
    """Intersection over union of two same-shape binary masks.

    Defined as 0.0 when both masks are empty.
    """
    a = _as_mask(a)
    b = _as_mask(b)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"mask shapes differ: {a.shape} vs {b.shape}")
    inter = int(np.count_nonzero(a & b))
    union = int(np.count_nonzero(a | b))
    return inter / union if union else 0.0


def pairwise_iou(masks) -> np.ndarray:
    """Symmetric IoU matrix over a sequence of masks (upper triangle computed once)."""
    masks = [_as_mask(m) for m in masks]
    n = len(masks)
    out = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        out[i, i] = mask_iou(masks[i], masks[i])
        for j in range(i + 1, n):
            v = mask_iou(masks[i], masks[j])
            out[i, j] = v
            out[j, i] = v
    return out


def rle_encode(mask) -> list[int]:
    """Row-major run lengths alternating background/foreground, background first.

    The leading background run may be 0 when the first pixel is foreground.
    """
    mask = _as_mask(mask)
    flat = mask.ravel()
    n = flat.size
    if n == 0:
        return []
    edges = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], edges, [n]))
    runs = [int(r) for r in np.diff(bounds)]
    if flat[0]:
        runs.insert(0, 0)
    return runs


def rle_decode(runs, shape) -> np.ndarray:
    """Inverse of rle_encode; raises MalformedRleError on inconsistent runs."""
    h, w = shape
    runs = [int(r) for r in runs]
    if any(r < 0 for r in runs):
        raise MalformedRleError("run lengths must be nonnegative")
    total = sum(runs)
    if total != h * w:
        raise MalformedRleError(f"runs cover {total} pixels, expected {h * w}")
    if not runs:
        return np.zeros((h, w), dtype=bool)
    values = np.resize(np.array([False, True]), len(runs))
    return np.repeat(values, runs).reshape(h, w)
