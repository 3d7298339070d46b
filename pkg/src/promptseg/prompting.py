"""Point-prompt derivation from decoder prediction maps.

Three strategies: one prompt per connected component of the thresholded
seed mask, prompts at foreground-restricted local maxima of the boundary
distance map, and a uniform grid. All strategies emit prompts in a
deterministic order and are pure functions of their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .exchange import PredictionBundle
from .geometry import connected_components, edt


@dataclass(frozen=True)
class MapConventions:
    """Orientation contract for the prediction maps.

    Every producer of bundles (the synthetic generator, any model exporter)
    must match these polarities; the thresholds below assume them.
    """

    center_dist: str
    boundary_dist: str
    background: str


MAP_CONVENTIONS = MapConventions(
    center_dist="0 at the object center, rising to 1 at the boundary",
    boundary_dist="0 at the boundary, rising to 1 at the innermost pixel",
    background="0 in both distance maps",
)


@dataclass(frozen=True)
class APGParams:
    """Thresholds and filters for the prompt-generation pipeline.

    t_fg, t_b and t_c threshold the foreground, boundary-distance and
    center-distance maps; s is the minimal mask area in pixels; t_nms is
    the overlap threshold for non-maximum suppression.
    """

    t_fg: float = 0.5
    t_b: float = 0.5
    t_c: float = 0.5
    s: int = 25
    t_nms: float = 0.9
    connectivity: int = 8
    overlap_measure: str = "iou"

    def __post_init__(self) -> None:
        for name in ("t_fg", "t_b", "t_c", "t_nms"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.s < 0:
            raise ValueError(f"s must be nonnegative, got {self.s}")
        if self.connectivity not in (4, 8):
            raise ValueError(f"connectivity must be 4 or 8, got {self.connectivity}")
        if self.overlap_measure not in ("iou", "iomin"):
            raise ValueError(
                f"overlap_measure must be 'iou' or 'iomin', got {self.overlap_measure!r}"
            )


@dataclass(frozen=True)
class PointPrompt:
    """A single point prompt; label 1 is positive (negative prompts reserved)."""

    row: int
    col: int
    label: int = 1


def derive_seed_mask(bundle: PredictionBundle, params: APGParams) -> np.ndarray:
    """Intersection of the three thresholded prediction maps.

    A pixel is a seed iff fg >= t_fg, center_dist <= t_c and
    boundary_dist >= t_b (inclusive comparisons, per MAP_CONVENTIONS the
    selected pixels are object cores). Lowering t_b or raising t_c never
    shrinks the mask.
    """
    return (
        (bundle.fg >= params.t_fg)
        & (bundle.center_dist <= params.t_c)
        & (bundle.boundary_dist >= params.t_b)
    )


def _padded_window(slc: tuple[slice, slice], shape: tuple[int, int]):
    """Expand a bounding-box slice pair by one pixel, clipped to the image."""
    y0 = max(slc[0].start - 1, 0)
    y1 = min(slc[0].stop + 1, shape[0])
    x0 = max(slc[1].start - 1, 0)
    x1 = min(slc[1].stop + 1, shape[1])
    return y0, y1, x0, x1


def derive_prompts_components(
    bundle: PredictionBundle, params: APGParams
) -> list[PointPrompt]:
    """One prompt per connected component of the seed mask.

    The prompt sits at the argmax of the component's own distance transform
    (its innermost pixel); ties break to the smallest row-major index.
    Prompts are emitted in component-label order.

    The transform runs on the component's bounding box padded by one pixel:
    the nearest non-component pixel of any component pixel is adjacent to
    the component, so the window sees the full false set that matters.
    """
    seed_mask = derive_seed_mask(bundle, params)
    labels, count = connected_components(seed_mask, params.connectivity)
    if count == 0:
        return []
    prompts: list[PointPrompt] = []
    shape = labels.shape
    for k, slc in enumerate(ndimage.find_objects(labels, max_label=count), start=1):
        y0, y1, x0, x1 = _padded_window(slc, shape)
        window = labels[y0:y1, x0:x1] == k
        distances = edt(window)
        r, c = divmod(int(np.argmax(distances)), window.shape[1])
        prompts.append(PointPrompt(y0 + r, x0 + c))
    return prompts


def derive_prompts_boundary_maxima(
    bundle: PredictionBundle, params: APGParams, min_separation: int = 3
) -> list[PointPrompt]:
    """Prompts at local maxima of boundary_dist restricted to the foreground.

    A pixel is a local maximum if its value is >= all 8 neighbors within
    the fg >= t_fg support. Connected plateaus collapse to the pixel with
    the smallest row-major index. Scanning maxima by descending value (ties
    row-major), a maximum closer than min_separation in Chebyshev distance
    to one already emitted is suppressed.
    """
    fg_mask = bundle.fg >= params.t_fg
    if not fg_mask.any():
        return []
    h, w = fg_mask.shape
    values = np.where(fg_mask, bundle.boundary_dist.astype(np.float64), -np.inf)
    padded = np.full((h + 2, w + 2), -np.inf)
    padded[1:-1, 1:-1] = values
    is_max = fg_mask.copy()
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            is_max &= values >= padded[1 + di : 1 + di + h, 1 + dj : 1 + dj + w]
    if not is_max.any():
        return []

    # Adjacent maxima are necessarily equal-valued, so plateaus are exactly
    # the connected components of the maxima set.
    plateau_labels, _ = connected_components(is_max, 8)
    representatives: dict[int, tuple[int, int]] = {}
    for y, x in np.argwhere(is_max).tolist():
        representatives.setdefault(int(plateau_labels[y, x]), (y, x))

    ordered = sorted(
        representatives.values(), key=lambda p: (-values[p[0], p[1]], p[0] * w + p[1])
    )
    kept: list[tuple[int, int]] = []
    for y, x in ordered:
        if all(max(abs(y - ky), abs(x - kx)) >= min_separation for ky, kx in kept):
            kept.append((y, x))
    return [PointPrompt(y, x) for y, x in kept]


def grid_prompts(height: int, width: int, n_per_side: int) -> list[PointPrompt]:
    """Uniform n x n grid of prompts at cell centers, in row-major order.

    Coordinates are floor((i + 0.5) * extent / n), always in bounds.
    """
    if n_per_side < 1:
        raise ValueError(f"n_per_side must be at least 1, got {n_per_side}")
    rows = [((2 * i + 1) * height) // (2 * n_per_side) for i in range(n_per_side)]
    cols = [((2 * j + 1) * width) // (2 * n_per_side) for j in range(n_per_side)]
    return [PointPrompt(r, c) for r in rows for c in cols]
