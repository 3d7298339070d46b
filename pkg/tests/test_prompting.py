"""Prompt-derivation tests: seed masks, component/maxima prompts, grids."""

import numpy as np
import pytest

import oracles
from promptseg import phantom, prompting
from promptseg.exchange import PredictionBundle
from promptseg.prompting import APGParams, PointPrompt


def bundle_from(fg, center, boundary):
    return PredictionBundle(
        fg=np.asarray(fg, np.float32),
        center_dist=np.asarray(center, np.float32),
        boundary_dist=np.asarray(boundary, np.float32),
    )


def disk_gt(shape, *disks):
    ys, xs = np.indices(shape)
    labels = np.zeros(shape, np.int32)
    for k, (cy, cx, r) in enumerate(disks, start=1):
        labels[(ys - cy) ** 2 + (xs - cx) ** 2 <= r * r] = k
    return labels


class TestSeedMask:
    def test_all_zero_maps(self):
        bundle = bundle_from(np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((4, 4)))
        assert not prompting.derive_seed_mask(bundle, APGParams()).any()

    def test_ideal_core_maps(self):
        bundle = bundle_from(np.ones((4, 4)), np.zeros((4, 4)), np.ones((4, 4)))
        assert prompting.derive_seed_mask(bundle, APGParams()).all()

    def test_thresholds_are_inclusive(self):
        bundle = bundle_from(
            np.full((1, 1), 0.5), np.full((1, 1), 0.5), np.full((1, 1), 0.5)
        )
        assert prompting.derive_seed_mask(bundle, APGParams()).all()

    def test_relaxing_thresholds_grows_mask(self, rng):
        maps = [rng.random((24, 24)).astype(np.float32) for _ in range(3)]
        bundle = bundle_from(*maps)
        tight = prompting.derive_seed_mask(bundle, APGParams(t_b=0.6, t_c=0.4))
        loose = prompting.derive_seed_mask(bundle, APGParams(t_b=0.4, t_c=0.6))
        assert (loose | tight == loose).all()


class TestComponentPrompts:
    def test_empty_seed_mask(self):
        bundle = bundle_from(np.zeros((6, 6)), np.zeros((6, 6)), np.zeros((6, 6)))
        assert prompting.derive_prompts_components(bundle, APGParams()) == []

    def test_square_component_center(self):
        fg = np.zeros((12, 12))
        fg[3:8, 4:9] = 1.0
        bundle = bundle_from(fg, np.zeros((12, 12)), fg)
        prompts = prompting.derive_prompts_components(bundle, APGParams())
        assert prompts == [PointPrompt(5, 6)]

    def test_two_disks_per_component_argmax(self):
        gt = disk_gt((40, 40), (10, 10, 6), (28, 30, 5))
        maps = phantom.analytic_maps(gt)
        prompts = prompting.derive_prompts_components(maps, APGParams())
        assert len(prompts) == 2
        seed_mask = prompting.derive_seed_mask(maps, APGParams())
        for prompt, label in zip(prompts, (1, 2)):
            assert gt[prompt.row, prompt.col] == label
            component = seed_mask & (gt == label)
            distances = oracles.edt_exhaustive(component)
            best = np.max(distances[distances < np.finfo(np.float32).max])
            assert distances[prompt.row, prompt.col] == best

    def test_argmax_tie_breaks_row_major(self):
        # A 1 x 2 component has two pixels at distance 1; the first wins.
        fg = np.zeros((5, 5))
        fg[2, 1:3] = 1.0
        bundle = bundle_from(fg, np.zeros((5, 5)), fg)
        prompts = prompting.derive_prompts_components(bundle, APGParams())
        assert prompts == [PointPrompt(2, 1)]

    def test_prompts_in_component_label_order(self, rng):
        fg = (rng.random((30, 30)) < 0.3).astype(np.float32)
        bundle = bundle_from(fg, np.zeros((30, 30)), fg)
        params = APGParams()
        prompts = prompting.derive_prompts_components(bundle, params)
        from promptseg.geometry import connected_components

        labels, count = connected_components(
            prompting.derive_seed_mask(bundle, params), params.connectivity
        )
        assert len(prompts) == count
        assert [labels[p.row, p.col] for p in prompts] == list(range(1, count + 1))


class TestBoundaryMaximaPrompts:
    def test_plateau_collapses_to_one_prompt(self):
        fg = np.zeros((12, 12))
        fg[3:8, 3:8] = 1.0
        boundary = fg * 0.8
        bundle = bundle_from(fg, np.zeros((12, 12)), boundary)
        prompts = prompting.derive_prompts_boundary_maxima(bundle, APGParams())
        assert prompts == [PointPrompt(3, 3)]

    def test_two_disks_distinct_peaks(self):
        gt = disk_gt((48, 48), (12, 12, 7), (34, 33, 6))
        maps = phantom.analytic_maps(gt)
        prompts = prompting.derive_prompts_boundary_maxima(maps, APGParams())
        assert len(prompts) == 2
        values = np.where(maps.fg >= 0.5, maps.boundary_dist, -np.inf)
        for prompt, label in zip(sorted(prompts, key=lambda p: p.row), (1, 2)):
            assert gt[prompt.row, prompt.col] == label
            inside = values[gt == label]
            assert values[prompt.row, prompt.col] == inside.max()

    def test_sub_threshold_foreground(self):
        fg = np.full((6, 6), 0.4)
        bundle = bundle_from(fg, np.zeros((6, 6)), np.ones((6, 6)))
        assert prompting.derive_prompts_boundary_maxima(bundle, APGParams()) == []

    def test_min_separation_suppresses_near_peaks(self):
        fg = np.ones((9, 9))
        boundary = np.zeros((9, 9))
        boundary[4, 3] = 1.0
        boundary[4, 5] = 0.9
        boundary[4, 8] = 0.8
        bundle = bundle_from(fg, np.zeros((9, 9)), boundary)
        prompts = prompting.derive_prompts_boundary_maxima(
            bundle, APGParams(), min_separation=3
        )
        assert PointPrompt(4, 3) in prompts
        assert PointPrompt(4, 5) not in prompts
        assert PointPrompt(4, 8) in prompts
        # The flat zero background is itself one plateau; its representative
        # (smallest row-major pixel) is emitted too.
        assert PointPrompt(0, 0) in prompts
        assert len(prompts) == 3

    def test_matches_exhaustive_local_max_scan(self, rng):
        fg = np.ones((20, 20), np.float32)
        boundary = rng.random((20, 20)).astype(np.float32)
        bundle = bundle_from(fg, np.zeros((20, 20)), boundary)
        prompts = prompting.derive_prompts_boundary_maxima(
            bundle, APGParams(), min_separation=1
        )
        # With min_separation 1 nothing is suppressed; prompts are exactly
        # one representative per plateau of 8-neighborhood maxima.
        values = boundary.astype(np.float64)
        padded = np.full((22, 22), -np.inf)
        padded[1:-1, 1:-1] = values
        expected = set()
        for y in range(20):
            for x in range(20):
                window = padded[y : y + 3, x : x + 3]
                if values[y, x] >= window.max():
                    expected.add((y, x))
        got = {(p.row, p.col) for p in prompts}
        assert got <= expected
        # Distinct random values make plateaus singletons almost surely.
        assert got == expected


class TestGridPrompts:
    def test_single_center(self):
        assert prompting.grid_prompts(100, 100, 1) == [PointPrompt(50, 50)]

    def test_two_per_side(self):
        prompts = prompting.grid_prompts(100, 100, 2)
        assert {(p.row, p.col) for p in prompts} == {(25, 25), (25, 75), (75, 25), (75, 75)}

    def test_dense_grid_in_bounds(self):
        prompts = prompting.grid_prompts(64, 48, 32)
        assert len(prompts) == 1024
        assert all(0 <= p.row < 64 and 0 <= p.col < 48 for p in prompts)

    def test_row_major_order(self):
        prompts = prompting.grid_prompts(10, 10, 3)
        flat = [p.row * 10 + p.col for p in prompts]
        assert flat == sorted(flat)

    def test_rejects_empty_grid(self):
        with pytest.raises(ValueError):
            prompting.grid_prompts(10, 10, 0)


class TestParams:
    def test_defaults(self):
        params = APGParams()
        assert (params.t_fg, params.t_b, params.t_c) == (0.5, 0.5, 0.5)
        assert params.s == 25
        assert params.t_nms == 0.9

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"t_fg": 1.5},
            {"t_b": -0.1},
            {"s": -1},
            {"connectivity": 6},
            {"overlap_measure": "dice"},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            APGParams(**kwargs)
