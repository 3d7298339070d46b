"""Mask predictors: one soft mask plus a quality score per point prompt.

Three interchangeable backends implement the same contract
``predict(ctx, prompt) -> MaskCandidate``:

- ``oracle`` looks the instance up in a ground-truth label map,
- ``region_grow`` grows a connected region of the foreground map and is
  fully model-free,
- ``external`` runs a serialized decoder graph against a precomputed
  image embedding.

All backends are deterministic for a fixed context and prompt. A context
may be shared across threads; the external backend serializes graph calls
internally so callers never need their own locking.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import (
    BackendUnavailableError,
    EmbeddingMissingError,
    GraphLoadError,
    GraphSignatureMismatchError,
)
from .exchange import PredictionBundle
from .geometry import connected_components, mask_iou
from .prompting import PointPrompt

# Half-width of the threshold bracket used for stability scoring.
STABILITY_HALF_WIDTH = 0.05


@dataclass
class MaskCandidate:
    """A predicted soft mask with its quality estimate.

    ``soft_mask`` is an H x W float32 foreground probability; binarization
    at 0.5 yields the candidate's mask, whose pixel count is its area.
    ``quality`` is the predicted-IoU/quality estimate in [0, 1].
    """

    soft_mask: np.ndarray
    quality: float
    source_prompt: PointPrompt

    @property
    def binary(self) -> np.ndarray:
        return self.soft_mask >= 0.5

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.binary))


@dataclass
class PredictorContext:
    """Per-image state shared by all predict calls.

    The oracle backend requires ``ground_truth``; the external backend
    requires ``decoder_graph`` and a bundle with an embedding. The context
    is immutable after construction apart from internal caches.
    """

    bundle: PredictionBundle
    ground_truth: np.ndarray | None = None
    decoder_graph: str | Path | None = None
    _component_cache: dict = field(default_factory=dict, repr=False)
    _graph: object = field(default=None, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)


PredictFn = Callable[[PredictorContext, PointPrompt], MaskCandidate]


def oracle_predict(ctx: PredictorContext, prompt: PointPrompt) -> MaskCandidate:
    """Ground-truth lookup: the instance under the prompt, quality 1.0.

    A prompt on background yields an empty mask with quality 0.0.
    """
    if ctx.ground_truth is None:
        raise BackendUnavailableError("oracle backend requires a ground-truth label map")
    gt = ctx.ground_truth
    label = int(gt[prompt.row, prompt.col])
    if label > 0:
        soft = (gt == label).astype(np.float32)
        quality = 1.0
    else:
        soft = np.zeros(gt.shape, dtype=np.float32)
        quality = 0.0
    return MaskCandidate(soft, quality, prompt)


def _grown_components(ctx: PredictorContext, threshold: float) -> np.ndarray:
    key = round(float(threshold), 6)
    with ctx._lock:
        cached = ctx._component_cache.get(key)
    if cached is None:
        cached, _ = connected_components(ctx.bundle.fg >= threshold, connectivity=8)
        with ctx._lock:
            ctx._component_cache[key] = cached
    return cached


def region_grow_predict(
    ctx: PredictorContext, prompt: PointPrompt, grow_threshold: float = 0.5
) -> MaskCandidate:
    """Model-free predictor: the thresholded-foreground component under the prompt.

    The soft mask is fg restricted to the 8-connected component of
    {fg >= grow_threshold} containing the prompt. Quality is a stability
    score: the IoU of the component intersected with the level sets at
    grow_threshold +/- 0.05, so razor-sharp foreground edges score 1.0. A
    prompt on a sub-threshold pixel yields an empty mask with quality 0.
    """
    fg = ctx.bundle.fg
    labels = _grown_components(ctx, grow_threshold)
    label = int(labels[prompt.row, prompt.col])
    if label == 0:
        return MaskCandidate(np.zeros(fg.shape, dtype=np.float32), 0.0, prompt)
    component = labels == label
    soft = np.where(component, fg, 0.0).astype(np.float32)
    upper = component & (fg >= grow_threshold + STABILITY_HALF_WIDTH)
    lower = component & (fg >= grow_threshold - STABILITY_HALF_WIDTH)
    return MaskCandidate(soft, mask_iou(upper, lower), prompt)


def _load_graph(ctx: PredictorContext):
    try:
        import torch
    except ImportError as exc:
        raise BackendUnavailableError(
            "external backend requires torch; install the 'external' extra"
        ) from exc
    with ctx._lock:
        if ctx._graph is None:
            try:
                ctx._graph = torch.jit.load(str(ctx.decoder_graph), map_location="cpu")
            except Exception as exc:
                raise GraphLoadError(
                    f"cannot load decoder graph {ctx.decoder_graph}: {exc}"
                ) from exc
    return ctx._graph


def external_predict(ctx: PredictorContext, prompt: PointPrompt) -> MaskCandidate:
    """Run a serialized decoder graph for one prompt.

    Graph signature: inputs (embedding C x He x We float32, points K x 2
    float32 with coordinates normalized as (index + 0.5) / extent in row,
    column order, labels K int32); outputs (mask_logits M x h x w float32,
    scores M float32). The highest-scoring plane is resized bilinearly to
    the bundle's resolution and squashed through a logistic; quality is the
    selected score clamped to [0, 1].
    """
    if ctx.decoder_graph is None:
        raise BackendUnavailableError("external backend requires a decoder graph path")
    embedding = ctx.bundle.embedding
    if embedding is None:
        raise EmbeddingMissingError("bundle has no embedding for the external backend")
    graph = _load_graph(ctx)
    import torch
    import torch.nn.functional as F

    h, w = ctx.bundle.shape
    points = torch.tensor(
        [[(prompt.row + 0.5) / h, (prompt.col + 0.5) / w]], dtype=torch.float32
    )
    labels = torch.tensor([prompt.label], dtype=torch.int32)
    with ctx._lock:
        with torch.no_grad():
            try:
                outputs = graph(torch.from_numpy(embedding), points, labels)
            except (RuntimeError, TypeError, ValueError) as exc:
                raise GraphSignatureMismatchError(
                    f"decoder graph rejected its inputs: {exc}"
                ) from exc
    if not isinstance(outputs, (tuple, list)) or len(outputs) != 2:
        raise GraphSignatureMismatchError(
            "decoder graph must return (mask_logits, scores)"
        )
    logits, scores = outputs
    if (
        not isinstance(logits, torch.Tensor)
        or not isinstance(scores, torch.Tensor)
        or logits.ndim != 3
        or scores.ndim != 1
        or logits.dtype != torch.float32
        or scores.dtype != torch.float32
        or logits.shape[0] != scores.shape[0]
        or scores.shape[0] < 1
    ):
        raise GraphSignatureMismatchError(
            "decoder graph outputs must be float32 mask_logits (M x h x w) "
            "and scores (M) with matching M >= 1"
        )
    selected = int(torch.argmax(scores))
    plane = logits[selected : selected + 1].unsqueeze(0)
    resized = F.interpolate(plane, size=(h, w), mode="bilinear", align_corners=False)
    soft = torch.sigmoid(resized[0, 0]).numpy().astype(np.float32)
    quality = min(max(float(scores[selected]), 0.0), 1.0)
    return MaskCandidate(soft, quality, prompt)


def resolve_backend(name: str, grow_threshold: float = 0.5) -> PredictFn:
    """Map a backend name to its predict function.

    ``grow_threshold`` only affects the region_grow backend.
    """
    if name == "oracle":
        return oracle_predict
    if name == "region_grow":
        return partial(region_grow_predict, grow_threshold=grow_threshold)
    if name == "external":
        return external_predict
    raise BackendUnavailableError(f"unknown backend {name!r}")
