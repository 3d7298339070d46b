"""Synthetic ground truth plus analytically consistent prediction maps.

The generator rejection-samples non-overlapping shapes into a blank image,
then derives the exact foreground and distance maps a perfect decoder
would emit for that ground truth. An optional corruption pass adds pixel
noise and blur for robustness testing. Everything is deterministic for a
fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import PlacementFailureError
from .exchange import PredictionBundle
from .geometry import edt

_MAX_TRIES_PER_OBJECT = 500

# Blob shapes modulate a base disk with low-order radial harmonics.
_BLOB_HARMONICS = (2, 3, 4)
_BLOB_MAX_AMPLITUDE = 0.15


@dataclass(frozen=True)
class PhantomSpec:
    """Layout and corruption parameters for one synthetic image.

    With allow_touching false, instances keep at least min_gap background
    pixels between them (Chebyshev); with it true they may touch but never
    overlap. radius_range bounds the base radius (disk radius, ellipse
    semi-axes, blob mean radius).
    """

    seed: int
    image_size: tuple[int, int] = (256, 256)
    n_objects: int = 20
    shape_kind: str = "disk"
    min_gap: int = 2
    allow_touching: bool = False
    noise_sigma: float = 0.0
    blur_radius: float = 0.0
    radius_range: tuple[float, float] = (4.0, 10.0)

    def __post_init__(self) -> None:
        if self.shape_kind not in ("disk", "ellipse", "blob"):
            raise ValueError(f"unknown shape kind {self.shape_kind!r}")
        if self.n_objects < 0:
            raise ValueError(f"n_objects must be nonnegative, got {self.n_objects}")
        if self.min_gap < 0:
            raise ValueError(f"min_gap must be nonnegative, got {self.min_gap}")
        if self.noise_sigma < 0 or self.blur_radius < 0:
            raise ValueError("noise_sigma and blur_radius must be nonnegative")
        lo, hi = self.radius_range
        if not 0 < lo <= hi:
            raise ValueError(f"radius_range must satisfy 0 < lo <= hi, got {self.radius_range}")


def _sample_center(rng, extent: int, reach: float) -> float:
    lo = reach + 1.0
    hi = extent - 2.0 - reach
    if lo > hi:
        raise PlacementFailureError(
            f"image extent {extent} cannot fit an object of reach {reach:.1f}"
        )
    return float(rng.uniform(lo, hi))


def _sample_shape(rng, spec: PhantomSpec) -> np.ndarray:
    height, width = spec.image_size
    r_lo, r_hi = spec.radius_range
    ys = np.arange(height, dtype=np.float64)[:, None]
    xs = np.arange(width, dtype=np.float64)[None, :]
    if spec.shape_kind == "disk":
        radius = rng.uniform(r_lo, r_hi)
        cy = _sample_center(rng, height, radius)
        cx = _sample_center(rng, width, radius)
        return (ys - cy) ** 2 + (xs - cx) ** 2 <= radius**2
    if spec.shape_kind == "ellipse":
        a = rng.uniform(r_lo, r_hi)
        b = rng.uniform(r_lo, r_hi)
        theta = rng.uniform(0.0, math.pi)
        reach = max(a, b)
        cy = _sample_center(rng, height, reach)
        cx = _sample_center(rng, width, reach)
        dy = ys - cy
        dx = xs - cx
        cos_t, sin_t = math.cos(theta), math.sin(theta)
        u = (dx * cos_t + dy * sin_t) / a
        v = (-dx * sin_t + dy * cos_t) / b
        return u**2 + v**2 <= 1.0
    base = rng.uniform(r_lo, r_hi)
    amplitudes = rng.uniform(0.0, _BLOB_MAX_AMPLITUDE, size=len(_BLOB_HARMONICS))
    phases = rng.uniform(0.0, 2.0 * math.pi, size=len(_BLOB_HARMONICS))
    reach = base * (1.0 + float(amplitudes.sum()))
    cy = _sample_center(rng, height, reach)
    cx = _sample_center(rng, width, reach)
    dy = ys - cy
    dx = xs - cx
    rho = np.sqrt(dy**2 + dx**2)
    phi = np.arctan2(dy, dx)
    radius_at = base * (
        1.0
        + sum(
            amp * np.cos(k * phi + phase)
            for k, amp, phase in zip(_BLOB_HARMONICS, amplitudes, phases)
        )
    )
    return rho <= radius_at


def generate(spec: PhantomSpec) -> np.ndarray:
    """Rejection-sample the requested instances into an int32 label map.

    Raises PlacementFailureError when an object cannot be placed within a
    bounded number of attempts (image too crowded or too small).
    """
    height, width = spec.image_size
    rng = np.random.default_rng(spec.seed)
    labels = np.zeros((height, width), dtype=np.int32)
    blocked = np.zeros((height, width), dtype=bool)
    for k in range(1, spec.n_objects + 1):
        for _ in range(_MAX_TRIES_PER_OBJECT):
            mask = _sample_shape(rng, spec)
            if not mask.any() or (mask & blocked).any():
                continue
            labels[mask] = k
            if spec.allow_touching or spec.min_gap == 0:
                blocked |= mask
            else:
                size = 2 * spec.min_gap + 1
                blocked |= ndimage.maximum_filter(mask, size=size)
            break
        else:
            raise PlacementFailureError(
                f"could not place object {k} of {spec.n_objects} after "
                f"{_MAX_TRIES_PER_OBJECT} attempts"
            )
    return labels


def analytic_maps(gt) -> PredictionBundle:
    """The exact prediction maps implied by a ground-truth label map.

    fg is the foreground indicator. Per instance, boundary_dist is the
    distance transform normalized by its per-instance maximum (1 at the
    innermost pixel, approaching 0 at the rim) and center_dist is the
    distance to the instance centroid normalized by its per-instance
    maximum (0 at the center, 1 at the farthest pixel). Background is 0 in
    both. A single-pixel instance gets boundary_dist 1 and center_dist 0.
    """
    gt = np.asarray(gt)
    height, width = gt.shape
    fg = (gt > 0).astype(np.float32)
    boundary = np.zeros((height, width), dtype=np.float32)
    center = np.zeros((height, width), dtype=np.float32)
    present = np.unique(gt)
    present = present[present > 0]
    if present.size == 0:
        return PredictionBundle(fg=fg, center_dist=center, boundary_dist=boundary)
    slices = ndimage.find_objects(gt, max_label=int(present.max()))
    for label in present.tolist():
        slc = slices[label - 1]
        y0 = max(slc[0].start - 1, 0)
        y1 = min(slc[0].stop + 1, height)
        x0 = max(slc[1].start - 1, 0)
        x1 = min(slc[1].stop + 1, width)
        window = gt[y0:y1, x0:x1] == label
        distances = edt(window)
        boundary[y0:y1, x0:x1][window] = distances[window] / float(distances.max())
        wys, wxs = np.nonzero(window)
        rows = wys + y0
        cols = wxs + x0
        radial = np.sqrt((rows - rows.mean()) ** 2 + (cols - cols.mean()) ** 2)
        peak = float(radial.max())
        center[rows, cols] = (radial / peak).astype(np.float32) if peak > 0 else 0.0
    return PredictionBundle(fg=fg, center_dist=center, boundary_dist=boundary)


def corrupt(
    bundle: PredictionBundle, noise_sigma: float, blur_radius: float, seed
) -> PredictionBundle:
    """Gaussian pixel noise followed by box blur, clamped to [0, 1].

    With noise_sigma 0 and blur_radius 0 the maps pass through unchanged.
    The box size is 2 * round(blur_radius) + 1 with edge replication.
    """
    rng = np.random.default_rng(seed)
    size = 2 * int(round(blur_radius)) + 1

    def one(arr: np.ndarray) -> np.ndarray:
        values = arr.astype(np.float64)
        if noise_sigma > 0:
            values = values + rng.normal(0.0, noise_sigma, values.shape)
        if size > 1:
            values = ndimage.uniform_filter(values, size=size, mode="nearest")
        return np.clip(values, 0.0, 1.0).astype(np.float32)

    return PredictionBundle(
        fg=one(bundle.fg),
        center_dist=one(bundle.center_dist),
        boundary_dist=one(bundle.boundary_dist),
        embedding=bundle.embedding,
        image=bundle.image,
    )
