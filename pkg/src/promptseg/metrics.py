"""Segmentation accuracy: IoU matching, per-image scores, ranks.

The per-image score averages TP / (TP + FP + FN) over a schedule of IoU
thresholds; a prediction matches a ground-truth object iff their IoU is
strictly above the threshold. For thresholds >= 0.5 that relation is
already a partial matching (two predictions cannot both overlap one object
with IoU > 0.5), so no assignment search is needed; thresholds below 0.5
are rejected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sp_stats

from .errors import (
    EmptyGroupError,
    MissingCellError,
    ShapeMismatchError,
    ThresholdBelowHalfError,
)
from .exchange import ScoreTable

DEFAULT_THRESHOLDS = (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95)


@dataclass(frozen=True)
class IouTable:
    """Sparse pairwise IoU of predicted vs ground-truth instances.

    ``entries`` maps (pred_label, gt_label) to IoU for overlapping pairs;
    background is excluded on both sides.
    """

    entries: dict[tuple[int, int], float]
    pred_labels: tuple[int, ...]
    gt_labels: tuple[int, ...]


@dataclass(frozen=True)
class MatchResult:
    threshold: float
    tp: int
    fp: int
    fn: int
    matches: tuple[tuple[int, int, float], ...]


def iou_table(pred, gt) -> IouTable:
    """All pairwise instance IoUs from one joint contingency pass.

    Instance areas and intersection counts come from a single bincount over
    jointly coded labels, so the cost is one pass over the pixels plus one
    pass over the distinct label pairs.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"label map shapes differ: {pred.shape} vs {gt.shape}")
    pred_values, pred_codes = np.unique(pred, return_inverse=True)
    gt_values, gt_codes = np.unique(gt, return_inverse=True)
    joint = pred_codes.ravel().astype(np.int64) * len(gt_values) + gt_codes.ravel()
    counts = np.bincount(joint, minlength=len(pred_values) * len(gt_values))

    pred_areas: dict[int, int] = {}
    gt_areas: dict[int, int] = {}
    intersections: dict[tuple[int, int], int] = {}
    for code in np.flatnonzero(counts).tolist():
        count = int(counts[code])
        p = int(pred_values[code // len(gt_values)])
        g = int(gt_values[code % len(gt_values)])
        if p > 0:
            pred_areas[p] = pred_areas.get(p, 0) + count
        if g > 0:
            gt_areas[g] = gt_areas.get(g, 0) + count
        if p > 0 and g > 0:
            intersections[(p, g)] = count

    entries = {
        (p, g): inter / (pred_areas[p] + gt_areas[g] - inter)
        for (p, g), inter in intersections.items()
    }
    return IouTable(entries, tuple(sorted(pred_areas)), tuple(sorted(gt_areas)))


def match_at(table: IouTable, threshold: float) -> MatchResult:
    """Match instances whose IoU strictly exceeds the threshold.

    TP is the number of matches, FP the unmatched predictions, FN the
    unmatched ground-truth objects.
    """
    if threshold < 0.5:
        raise ThresholdBelowHalfError(
            f"matching threshold must be at least 0.5, got {threshold}"
        )
    matches = tuple(
        sorted((p, g, iou) for (p, g), iou in table.entries.items() if iou > threshold)
    )
    tp = len(matches)
    return MatchResult(
        threshold, tp, len(table.pred_labels) - tp, len(table.gt_labels) - tp, matches
    )


def msa(pred, gt, schedule=DEFAULT_THRESHOLDS) -> float:
    """Mean over the threshold schedule of TP / (TP + FP + FN).

    Two empty maps are an all-correct empty prediction and score 1.0 at
    every threshold.
    """
    schedule = tuple(schedule)
    if not schedule:
        raise ValueError("threshold schedule is empty")
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("threshold schedule must be strictly increasing")
    table = iou_table(pred, gt)
    total = 0.0
    for threshold in schedule:
        result = match_at(table, threshold)
        denom = result.tp + result.fp + result.fn
        total += 1.0 if denom == 0 else result.tp / denom
    return total / len(schedule)


def aggregate(table: ScoreTable) -> dict[tuple[str, str], float]:
    """Unweighted per-(dataset, method) mean of per-image scores."""
    if not table.rows:
        raise EmptyGroupError("score table has no rows")
    groups: dict[tuple[str, str], list[float]] = {}
    for row in table.rows:
        groups.setdefault((row.dataset, row.method), []).append(row.msa)
    return {key: sum(values) / len(values) for key, values in groups.items()}


def average_rank(per_dataset_means: dict[str, dict[str, float]]) -> dict[str, float]:
    """Mean rank of each method across datasets (rank 1 = best, midranks on ties).

    Input maps method -> dataset -> mean score; every method must cover
    every dataset.
    """
    methods = sorted(per_dataset_means)
    if not methods:
        raise EmptyGroupError("no methods to rank")
    datasets = sorted({d for m in methods for d in per_dataset_means[m]})
    if not datasets:
        raise EmptyGroupError("no datasets to rank over")
    for method in methods:
        for dataset in datasets:
            if dataset not in per_dataset_means[method]:
                raise MissingCellError(
                    f"method {method!r} has no score for dataset {dataset!r}"
                )
    totals = {m: 0.0 for m in methods}
    for dataset in datasets:
        scores = np.array([per_dataset_means[m][dataset] for m in methods])
        ranks = sp_stats.rankdata(-scores, method="average")
        for method, rank in zip(methods, ranks):
            totals[method] += float(rank)
    return {m: totals[m] / len(datasets) for m in methods}
