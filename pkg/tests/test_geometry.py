"""Raster kernel tests against brute-force oracles."""

import numpy as np
import pytest

import oracles
from promptseg import geometry
from promptseg.errors import (
    MalformedRleError,
    SeedOutsideRegionError,
    ShapeMismatchError,
)
from promptseg.geometry import UNBOUNDED_DISTANCE


def random_mask(rng, shape, density):
    return rng.random(shape) < density


class TestConnectedComponents:
    def test_all_false(self):
        labels, count = geometry.connected_components(np.zeros((5, 5), bool))
        assert count == 0
        assert not labels.any()

    def test_diagonal_pair(self):
        mask = np.zeros((2, 2), bool)
        mask[0, 0] = mask[1, 1] = True
        _, count8 = geometry.connected_components(mask, connectivity=8)
        _, count4 = geometry.connected_components(mask, connectivity=4)
        assert count8 == 1
        assert count4 == 2

    @pytest.mark.parametrize("connectivity", [4, 8])
    @pytest.mark.parametrize("density", [0.15, 0.5, 0.85])
    def test_matches_flood_fill(self, rng, connectivity, density):
        for _ in range(12):
            shape = (int(rng.integers(1, 65)), int(rng.integers(1, 65)))
            mask = random_mask(rng, shape, density)
            labels, count = geometry.connected_components(mask, connectivity)
            expected, expected_count = oracles.cc_flood_fill(mask, connectivity)
            assert count == expected_count
            np.testing.assert_array_equal(labels, expected)

    def test_labels_dense_in_scan_order(self, rng):
        mask = random_mask(rng, (40, 40), 0.4)
        labels, count = geometry.connected_components(mask)
        values = labels[labels > 0]
        assert sorted(set(values.tolist())) == list(range(1, count + 1))
        first_seen = [int(np.flatnonzero(labels.ravel() == k)[0]) for k in range(1, count + 1)]
        assert first_seen == sorted(first_seen)

    def test_single_row_and_column(self):
        row = np.array([[True, False, True, True]])
        labels, count = geometry.connected_components(row, 4)
        assert count == 2
        np.testing.assert_array_equal(labels, [[1, 0, 2, 2]])
        col = row.T
        labels, count = geometry.connected_components(col, 4)
        assert count == 2

    def test_bad_connectivity(self):
        with pytest.raises(ValueError):
            geometry.connected_components(np.zeros((2, 2), bool), 6)


class TestEdt:
    def test_single_pixel(self):
        mask = np.zeros((5, 5), bool)
        mask[2, 2] = True
        distances = geometry.edt(mask)
        assert distances[2, 2] == 1.0
        assert distances[0, 0] == 0.0

    def test_centered_block(self):
        mask = np.zeros((7, 7), bool)
        mask[2:5, 2:5] = True
        distances = geometry.edt(mask)
        assert distances[3, 3] == 2.0
        assert distances[2, 2] == 1.0

    def test_matches_exhaustive_search(self, rng):
        for density in (0.2, 0.5, 0.9):
            for _ in range(8):
                shape = (int(rng.integers(1, 33)), int(rng.integers(1, 33)))
                mask = random_mask(rng, shape, density)
                got = geometry.edt(mask)
                expected = oracles.edt_exhaustive(mask)
                np.testing.assert_array_equal(got, expected)

    def test_all_true_is_unbounded(self):
        distances = geometry.edt(np.ones((4, 6), bool))
        assert (distances == UNBOUNDED_DISTANCE).all()

    def test_all_false_is_zero(self):
        assert not geometry.edt(np.zeros((4, 6), bool)).any()

    def test_anisotropic_strip(self):
        # A 1 x n strip measures distance along the row only.
        mask = np.zeros((3, 9), bool)
        mask[1, :] = True
        distances = geometry.edt(mask)
        assert distances[1, 4] == 1.0
        mask[:, :] = True
        mask[0, 0] = False
        distances = geometry.edt(mask)
        assert distances[2, 8] == np.float32(np.sqrt(68.0))


class TestWatershed:
    def test_flat_elevation_covers_region(self):
        elevation = np.zeros((8, 8))
        seeds = np.zeros((8, 8), np.int32)
        seeds[1, 1] = 1
        seeds[6, 6] = 2
        region = np.ones((8, 8), bool)
        labels = geometry.seeded_watershed(elevation, seeds, region)
        assert (labels > 0).all()
        assert set(np.unique(labels)) == {1, 2}

    def test_single_seed_fills_component(self):
        region = np.zeros((6, 6), bool)
        region[1:4, 1:4] = True
        seeds = np.zeros((6, 6), np.int32)
        seeds[2, 2] = 7
        labels = geometry.seeded_watershed(np.zeros((6, 6)), seeds, region)
        np.testing.assert_array_equal(labels > 0, region)
        assert set(np.unique(labels)) == {0, 7}

    def test_ridge_splits_basins(self):
        # Two basins sloping toward a tall middle column on a 9 x 9 ramp.
        elevation = np.zeros((9, 9))
        for j in range(9):
            elevation[:, j] = -abs(j - 4)
        elevation[:, 4] = 10.0
        seeds = np.zeros((9, 9), np.int32)
        seeds[4, 0] = 1
        seeds[4, 8] = 2
        region = np.ones((9, 9), bool)
        labels = geometry.seeded_watershed(elevation, seeds, region)
        expected = oracles.watershed_sorted_frontier(elevation, seeds, region)
        np.testing.assert_array_equal(labels, expected)
        assert (labels[:, :4] == 1).all()
        assert (labels[:, 5:] == 2).all()

    def test_matches_sorted_frontier_oracle(self, rng):
        for _ in range(20):
            shape = (int(rng.integers(4, 25)), int(rng.integers(4, 25)))
            region = random_mask(rng, shape, 0.75)
            positions = np.argwhere(region)
            if positions.size == 0:
                continue
            n_seeds = int(rng.integers(1, min(4, len(positions)) + 1))
            picks = rng.choice(len(positions), size=n_seeds, replace=False)
            seeds = np.zeros(shape, np.int32)
            for lab, p in enumerate(picks, start=1):
                seeds[tuple(positions[p])] = lab
            # Quantized elevations force priority ties.
            elevation = rng.integers(0, 4, shape) / 4.0
            got = geometry.seeded_watershed(elevation, seeds, region)
            expected = oracles.watershed_sorted_frontier(elevation, seeds, region)
            np.testing.assert_array_equal(got, expected)

    def test_unreachable_region_stays_zero(self):
        region = np.ones((5, 5), bool)
        region[2, :] = False
        seeds = np.zeros((5, 5), np.int32)
        seeds[0, 0] = 1
        labels = geometry.seeded_watershed(np.zeros((5, 5)), seeds, region)
        assert (labels[3:] == 0).all()
        assert (labels[:2] == 1).all()

    def test_seed_outside_region(self):
        region = np.zeros((4, 4), bool)
        seeds = np.zeros((4, 4), np.int32)
        seeds[1, 1] = 1
        with pytest.raises(SeedOutsideRegionError):
            geometry.seeded_watershed(np.zeros((4, 4)), seeds, region)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            geometry.seeded_watershed(
                np.zeros((4, 4)), np.zeros((4, 5), np.int32), np.ones((4, 4), bool)
            )


class TestMaskIou:
    def test_identity(self):
        mask = np.zeros((5, 5), bool)
        mask[1:3, 1:3] = True
        assert geometry.mask_iou(mask, mask) == 1.0

    def test_disjoint(self):
        a = np.zeros((5, 5), bool)
        b = np.zeros((5, 5), bool)
        a[0, 0] = True
        b[4, 4] = True
        assert geometry.mask_iou(a, b) == 0.0

    def test_sub_rectangle(self):
        a = np.zeros((12, 12), bool)
        b = np.zeros((12, 12), bool)
        a[1:11, 1:11] = True
        b[1:8, 1:11] = True
        assert geometry.mask_iou(a, b) == 0.7

    def test_both_empty(self):
        empty = np.zeros((3, 3), bool)
        assert geometry.mask_iou(empty, empty) == 0.0

    def test_pairwise_matrix(self, rng):
        masks = [random_mask(rng, (10, 10), 0.5) for _ in range(4)]
        matrix = geometry.pairwise_iou(masks)
        assert matrix.shape == (4, 4)
        np.testing.assert_array_equal(matrix, matrix.T)
        for i in range(4):
            for j in range(4):
                assert matrix[i, j] == geometry.mask_iou(masks[i], masks[j])


class TestRle:
    def test_empty_mask(self):
        assert geometry.rle_encode(np.zeros((4, 4), bool)) == [16]

    def test_full_mask(self):
        assert geometry.rle_encode(np.ones((4, 4), bool)) == [0, 16]

    def test_round_trip(self, rng):
        for _ in range(25):
            shape = (int(rng.integers(1, 20)), int(rng.integers(1, 20)))
            mask = random_mask(rng, shape, float(rng.random()))
            runs = geometry.rle_encode(mask)
            np.testing.assert_array_equal(geometry.rle_decode(runs, shape), mask)

    def test_negative_run_rejected(self):
        with pytest.raises(MalformedRleError):
            geometry.rle_decode([4, -1, 13], (4, 4))

    def test_wrong_total_rejected(self):
        with pytest.raises(MalformedRleError):
            geometry.rle_decode([10], (4, 4))
