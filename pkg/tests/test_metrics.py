"""Metric tests: IoU tables, threshold matching, per-image scores, ranks."""

import numpy as np
import pytest

import oracles
from promptseg import metrics
from promptseg.errors import (
    EmptyGroupError,
    MissingCellError,
    ShapeMismatchError,
    ThresholdBelowHalfError,
)
from promptseg.exchange import ScoreRow, ScoreTable


def random_labels(rng, shape=(64, 64), max_instances=10):
    labels = np.zeros(shape, np.int32)
    n = int(rng.integers(0, max_instances + 1))
    for k in range(1, n + 1):
        h = int(rng.integers(3, 14))
        w = int(rng.integers(3, 14))
        y = int(rng.integers(0, shape[0] - h))
        x = int(rng.integers(0, shape[1] - w))
        labels[y : y + h, x : x + w] = k
    return labels


def perturbed(rng, gt):
    pred = np.roll(gt, (int(rng.integers(-3, 4)), int(rng.integers(-3, 4))), (0, 1))
    if rng.random() < 0.3 and pred.max() > 0:
        pred = np.where(pred == pred.max(), 0, pred)
    return pred


def three_squares(shape=(20, 20)):
    gt = np.zeros(shape, np.int32)
    gt[1:7, 1:7] = 1
    gt[1:7, 10:16] = 2
    gt[10:16, 1:7] = 3
    return gt


def iou_07_pair():
    gt = np.zeros((12, 12), np.int32)
    pred = np.zeros((12, 12), np.int32)
    gt[1:11, 1:11] = 1
    pred[1:8, 1:11] = 1
    return pred, gt


class TestIouTable:
    def test_identity_is_diagonal(self):
        gt = three_squares()
        table = metrics.iou_table(gt, gt)
        assert table.entries == {(1, 1): 1.0, (2, 2): 1.0, (3, 3): 1.0}
        assert table.pred_labels == (1, 2, 3)
        assert table.gt_labels == (1, 2, 3)

    def test_empty_prediction(self):
        gt = three_squares()
        table = metrics.iou_table(np.zeros_like(gt), gt)
        assert table.entries == {}
        assert table.pred_labels == ()
        assert table.gt_labels == (1, 2, 3)

    def test_matches_mask_pair_oracle(self, rng):
        for _ in range(15):
            gt = random_labels(rng)
            pred = perturbed(rng, gt) if rng.random() < 0.5 else random_labels(rng)
            table = metrics.iou_table(pred, gt)
            expected = oracles.iou_pairs_masks(pred, gt)
            assert set(table.entries) == set(expected)
            for key, value in expected.items():
                assert table.entries[key] == pytest.approx(value, abs=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            metrics.iou_table(np.zeros((4, 4), np.int32), np.zeros((4, 5), np.int32))


class TestMatchAt:
    def test_perfect_prediction(self):
        gt = three_squares()
        table = metrics.iou_table(gt, gt)
        for threshold in (0.5, 0.75, 0.95):
            result = metrics.match_at(table, threshold)
            assert (result.tp, result.fp, result.fn) == (3, 0, 0)

    def test_strict_threshold_on_iou_07(self):
        pred, gt = iou_07_pair()
        table = metrics.iou_table(pred, gt)
        at_065 = metrics.match_at(table, 0.65)
        assert (at_065.tp, at_065.fp, at_065.fn) == (1, 0, 0)
        at_07 = metrics.match_at(table, 0.7)
        assert (at_07.tp, at_07.fp, at_07.fn) == (0, 1, 1)

    def test_counts_with_unmatched_objects(self):
        gt = three_squares()
        pred = np.zeros_like(gt)
        pred[1:7, 1:7] = 1  # matches gt 1 exactly
        pred[17:20, 17:20] = 2  # background-only prediction
        result = metrics.match_at(metrics.iou_table(pred, gt), 0.5)
        assert (result.tp, result.fp, result.fn) == (1, 1, 2)

    def test_matches_are_reported(self):
        gt = three_squares()
        result = metrics.match_at(metrics.iou_table(gt, gt), 0.5)
        assert result.matches == ((1, 1, 1.0), (2, 2, 1.0), (3, 3, 1.0))

    def test_threshold_below_half_rejected(self):
        table = metrics.iou_table(three_squares(), three_squares())
        with pytest.raises(ThresholdBelowHalfError):
            metrics.match_at(table, 0.4)

    def test_greedy_equals_optimal_assignment(self, rng):
        for _ in range(10):
            gt = random_labels(rng)
            pred = perturbed(rng, gt)
            table = metrics.iou_table(pred, gt)
            for threshold in metrics.DEFAULT_THRESHOLDS:
                got = metrics.match_at(table, threshold).tp
                assert got == oracles.optimal_assignment_tp(pred, gt, threshold)


class TestMsa:
    def test_identical_maps(self):
        gt = three_squares()
        assert metrics.msa(gt, gt) == 1.0

    def test_empty_prediction_nonempty_gt(self):
        gt = three_squares()
        assert metrics.msa(np.zeros_like(gt), gt) == 0.0

    def test_both_empty(self):
        empty = np.zeros((8, 8), np.int32)
        assert metrics.msa(empty, empty) == 1.0

    def test_iou_07_scores_exactly_point_four(self):
        pred, gt = iou_07_pair()
        assert metrics.msa(pred, gt) == 0.4

    def test_matches_mask_pair_oracle(self, rng):
        for _ in range(10):
            gt = random_labels(rng)
            pred = perturbed(rng, gt) if rng.random() < 0.5 else random_labels(rng)
            got = metrics.msa(pred, gt)
            expected = oracles.msa_mask_pairs(pred, gt, metrics.DEFAULT_THRESHOLDS)
            assert got == pytest.approx(expected, abs=1e-13)

    def test_label_permutation_invariance(self, rng):
        gt = random_labels(rng)
        pred = perturbed(rng, gt)
        base = metrics.msa(pred, gt)
        top = int(pred.max()) + 1
        shuffled = np.arange(1, top, dtype=np.int32)
        rng.shuffle(shuffled)
        remap = np.concatenate(([0], shuffled)).astype(np.int32)
        assert metrics.msa(remap[pred], gt) == base

    def test_default_schedule_values(self):
        assert metrics.DEFAULT_THRESHOLDS == (
            0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95,
        )

    def test_schedule_must_be_increasing(self):
        gt = three_squares()
        with pytest.raises(ValueError):
            metrics.msa(gt, gt, schedule=())
        with pytest.raises(ValueError):
            metrics.msa(gt, gt, schedule=(0.5, 0.5))
        with pytest.raises(ValueError):
            metrics.msa(gt, gt, schedule=(0.9, 0.6))


class TestAggregate:
    def test_single_image(self):
        table = ScoreTable([ScoreRow("d", "i", "m", 0.7)])
        assert metrics.aggregate(table) == {("d", "m"): 0.7}

    def test_mean_of_two(self):
        table = ScoreTable(
            [ScoreRow("d", "a", "m", 0.2), ScoreRow("d", "b", "m", 0.4)]
        )
        assert metrics.aggregate(table)[("d", "m")] == pytest.approx(0.3)

    def test_empty_table(self):
        with pytest.raises(EmptyGroupError):
            metrics.aggregate(ScoreTable([]))


class TestAverageRank:
    def test_dominant_method(self):
        means = {
            "a": {"d1": 0.9, "d2": 0.8, "d3": 0.7},
            "b": {"d1": 0.5, "d2": 0.6, "d3": 0.4},
        }
        assert metrics.average_rank(means) == {"a": 1.0, "b": 2.0}

    def test_midrank_on_tie(self):
        means = {
            "a": {"d1": 0.9, "d2": 0.5},
            "b": {"d1": 0.5, "d2": 0.5},
        }
        ranks = metrics.average_rank(means)
        assert ranks["a"] == pytest.approx((1.0 + 1.5) / 2)
        assert ranks["b"] == pytest.approx((2.0 + 1.5) / 2)

    def test_matches_sort_oracle(self):
        means = {
            "a": {"d1": 0.31, "d2": 0.62},
            "b": {"d1": 0.44, "d2": 0.62},
            "c": {"d1": 0.44, "d2": 0.10},
        }
        got = metrics.average_rank(means)
        methods = sorted(means)
        expected_totals = {m: 0.0 for m in methods}
        for dataset in ("d1", "d2"):
            for m in methods:
                score = means[m][dataset]
                better = sum(means[x][dataset] > score for x in methods)
                equal = sum(means[x][dataset] == score for x in methods)
                expected_totals[m] += better + (equal + 1) / 2.0
        for m in methods:
            assert got[m] == pytest.approx(expected_totals[m] / 2.0)

    def test_missing_cell(self):
        with pytest.raises(MissingCellError):
            metrics.average_rank({"a": {"d1": 0.5}, "b": {}})

    def test_empty(self):
        with pytest.raises(EmptyGroupError):
            metrics.average_rank({})
