"""Complete instance-segmentation pipelines.

Three families over one prediction bundle:

- APG: prompts from the thresholded seed mask (or boundary-distance
  maxima), one predicted mask per prompt, size filter, greedy NMS,
  rasterization.
- AIS: seeded watershed over the decoder's distance predictions, no
  candidate filtering beyond the size sweep.
- AMG: a uniform grid of prompts with quality and stability cutoffs,
  then the same size filter / NMS / rasterization tail.

Every pipeline is a pure function per image and returns an int32 instance
label map; callers may process images concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backends import (
    STABILITY_HALF_WIDTH,
    MaskCandidate,
    PredictorContext,
    resolve_backend,
)
from .exchange import PredictionBundle
from .geometry import connected_components, seeded_watershed
from .prompting import (
    APGParams,
    derive_prompts_boundary_maxima,
    derive_prompts_components,
    derive_seed_mask,
    grid_prompts,
)


@dataclass(frozen=True)
class AMGParams:
    """Grid-prompting parameters: grid density, candidate cutoffs, NMS, size."""

    n_per_side: int = 32
    min_quality: float = 0.7
    min_stability: float = 0.8
    t_nms: float = 0.9
    min_area: int = 25

    def __post_init__(self) -> None:
        if self.n_per_side < 1:
            raise ValueError(f"n_per_side must be at least 1, got {self.n_per_side}")
        for name in ("min_quality", "min_stability", "t_nms"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.min_area < 0:
            raise ValueError(f"min_area must be nonnegative, got {self.min_area}")


@dataclass
class NmsDecision:
    """Outcome of greedy NMS: kept candidate indices (descending quality)
    and, for every suppressed candidate, the kept index that suppressed it."""

    kept: list[int]
    suppressed_by: dict[int, int]


def size_filter(candidates: list[MaskCandidate], s: int) -> list[MaskCandidate]:
    """Drop candidates whose binarized area is below s; order is preserved."""
    return [c for c in candidates if c.area >= s]


def _overlap(a, b, area_a: int, area_b: int, measure: str) -> float:
    inter = int(np.count_nonzero(a & b))
    if measure == "iou":
        union = area_a + area_b - inter
        return inter / union if union else 0.0
    if measure == "iomin":
        smaller = min(area_a, area_b)
        return inter / smaller if smaller else 0.0
    raise ValueError(f"unknown overlap measure {measure!r}")


def nms(
    candidates: list[MaskCandidate], t_nms: float, overlap_measure: str = "iou"
) -> NmsDecision:
    """Greedy non-maximum suppression over mask candidates.

    Candidates are visited by descending quality, ties broken by ascending
    row-major index of the source prompt (then input order). A candidate is
    kept iff its overlap with every already-kept candidate is below t_nms.
    Empty masks never overlap anything under either measure.
    """
    n = len(candidates)
    if n == 0:
        return NmsDecision([], {})
    width = candidates[0].soft_mask.shape[1]

    def sort_key(i: int):
        prompt = candidates[i].source_prompt
        return (-candidates[i].quality, prompt.row * width + prompt.col, i)

    binaries = [c.binary for c in candidates]
    areas = [int(np.count_nonzero(b)) for b in binaries]
    kept: list[int] = []
    suppressed_by: dict[int, int] = {}
    for i in sorted(range(n), key=sort_key):
        blocker = None
        for j in kept:
            if _overlap(binaries[i], binaries[j], areas[i], areas[j], overlap_measure) >= t_nms:
                blocker = j
                break
        if blocker is None:
            kept.append(i)
        else:
            suppressed_by[i] = blocker
    return NmsDecision(kept, suppressed_by)


def rasterize(candidates: list[MaskCandidate], shape: tuple[int, int]) -> np.ndarray:
    """Paint candidates into a label map, numbering them 1..N in input order.

    A pixel claimed by several masks goes to the highest-quality claimant;
    ties go to the earlier input index.
    """
    labels = np.zeros(shape, dtype=np.int32)
    order = sorted(range(len(candidates)), key=lambda i: (-candidates[i].quality, i))
    for i in order:
        claim = candidates[i].binary & (labels == 0)
        labels[claim] = i + 1
    return labels


def _sweep_small(labels: np.ndarray, min_area: int) -> np.ndarray:
    """Remove instances below min_area and renumber the rest densely."""
    counts = np.bincount(labels.ravel())
    remap = np.zeros(counts.size, dtype=np.int32)
    nxt = 1
    for lab in range(1, counts.size):
        if counts[lab] >= min_area and counts[lab] > 0:
            remap[lab] = nxt
            nxt += 1
    return remap[labels]


def _prompted_pipeline(
    bundle: PredictionBundle,
    ctx: PredictorContext,
    prompts,
    backend: str,
    grow_threshold: float,
    min_area: int,
    t_nms: float,
    overlap_measure: str,
    info: dict | None,
) -> np.ndarray:
    predict = resolve_backend(backend, grow_threshold)
    candidates = [predict(ctx, prompt) for prompt in prompts]
    survivors = size_filter(candidates, min_area)
    decision = nms(survivors, t_nms, overlap_measure)
    kept = [survivors[i] for i in decision.kept]
    labels = _sweep_small(rasterize(kept, bundle.shape), min_area)
    if info is not None:
        info.update(
            prompt_count=len(prompts),
            kept_count=len(kept),
            instance_count=int(labels.max(initial=0)),
        )
    return labels


def run_apg(
    bundle: PredictionBundle,
    ctx: PredictorContext,
    params: APGParams = APGParams(),
    backend: str = "oracle",
    info: dict | None = None,
) -> np.ndarray:
    """Prompt generation from seed-mask components, end to end.

    Composition: derive one prompt per seed component, predict a mask per
    prompt, size-filter at s, NMS at t_nms, rasterize, then sweep out
    instances that rasterization conflicts shrank below s.
    """
    prompts = derive_prompts_components(bundle, params)
    return _prompted_pipeline(
        bundle,
        ctx,
        prompts,
        backend,
        params.t_fg,
        params.s,
        params.t_nms,
        params.overlap_measure,
        info,
    )


def run_apg_boundary(
    bundle: PredictionBundle,
    ctx: PredictorContext,
    params: APGParams = APGParams(),
    min_separation: int = 3,
    backend: str = "oracle",
    info: dict | None = None,
) -> np.ndarray:
    """APG variant prompting at boundary-distance maxima instead of components."""
    prompts = derive_prompts_boundary_maxima(bundle, params, min_separation)
    return _prompted_pipeline(
        bundle,
        ctx,
        prompts,
        backend,
        params.t_fg,
        params.s,
        params.t_nms,
        params.overlap_measure,
        info,
    )


def run_ais(
    bundle: PredictionBundle,
    params: APGParams = APGParams(),
    info: dict | None = None,
) -> np.ndarray:
    """Watershed baseline: seed components flooded over the inverted boundary map.

    Seeds are the connected components of the same seed mask APG uses;
    elevation is 1 - boundary_dist; the flood region is fg >= t_fg. Basins
    are kept as-is (no NMS); only the size sweep at s applies.
    """
    seeds, count = connected_components(
        derive_seed_mask(bundle, params), params.connectivity
    )
    if count == 0:
        labels = np.zeros(bundle.shape, dtype=np.int32)
    else:
        region = bundle.fg >= params.t_fg
        labels = seeded_watershed(1.0 - bundle.boundary_dist, seeds, region)
    labels = _sweep_small(labels, params.s)
    if info is not None:
        info.update(seed_count=count, instance_count=int(labels.max(initial=0)))
    return labels


def _stability(candidate: MaskCandidate) -> float:
    """Area ratio of the soft mask's level sets at 0.5 +/- the bracket width.

    An empty lower level set is vacuously stable (the size filter removes
    such candidates anyway).
    """
    soft = candidate.soft_mask
    lower = int(np.count_nonzero(soft >= 0.5 - STABILITY_HALF_WIDTH))
    if lower == 0:
        return 1.0
    upper = int(np.count_nonzero(soft >= 0.5 + STABILITY_HALF_WIDTH))
    return upper / lower


def run_amg(
    bundle: PredictionBundle,
    ctx: PredictorContext,
    params: AMGParams = AMGParams(),
    backend: str = "oracle",
    info: dict | None = None,
) -> np.ndarray:
    """Grid baseline: predict a mask per grid prompt, cut, merge, rasterize.

    Candidates below min_quality or min_stability are dropped before the
    size filter; NMS then merges duplicates from prompts that landed in the
    same object. The region_grow backend runs at threshold 0.5 here.
    """
    height, width = bundle.shape
    prompts = grid_prompts(height, width, params.n_per_side)
    predict = resolve_backend(backend, 0.5)
    candidates = [predict(ctx, prompt) for prompt in prompts]
    filtered = [
        c
        for c in candidates
        if c.quality >= params.min_quality and _stability(c) >= params.min_stability
    ]
    survivors = size_filter(filtered, params.min_area)
    decision = nms(survivors, params.t_nms, "iou")
    kept = [survivors[i] for i in decision.kept]
    labels = _sweep_small(rasterize(kept, bundle.shape), params.min_area)
    if info is not None:
        info.update(
            prompt_count=len(prompts),
            kept_count=len(kept),
            instance_count=int(labels.max(initial=0)),
        )
    return labels
