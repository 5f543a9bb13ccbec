from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lanedet.errors import DegenerateWindowError
from lanedet.image import IPM_FRAME, ImageBuffer
from lanedet.line_detect import (
    EXHAUSTIVE_MAX_POINTS,
    Line,
    LineDetectParams,
    column_histogram,
    find_line_candidates,
    group_peaks,
    parabola_vertex,
    peaks_from_smoothed,
    ransac_line,
)
from lanedet.synth import LaneSpec, SceneSpec, synth_scene
from lanedet.camera import warp_to_ipm

PARAMS = LineDetectParams(window_halfwidth=16.0)


def mass_of_pair(px, py, w, i, j, thr):
    dx, dy = px[j] - px[i], py[j] - py[i]
    n = math.hypot(dx, dy)
    d = np.abs(dx * (py - py[i]) - dy * (px - px[i])) / n
    return float(w[d <= thr].sum())


def line_mass(line, img, thr):
    ys, xs = np.nonzero(img > 0)
    (x0, y0), (x1, y1) = line.p_start, line.p_end
    dx, dy = x1 - x0, y1 - y0
    d = np.abs(dx * (ys - y0) - dy * (xs - x0)) / math.hypot(dx, dy)
    return float(img[ys, xs][d <= thr].sum())


class TestHistogram:
    def test_single_pixel(self):
        img = np.zeros((10, 12))
        img[4, 7] = 5.0
        h = column_histogram(ImageBuffer(img, IPM_FRAME))
        assert h[7] == 5.0 and h.sum() == 5.0 and len(h) == 12

    def test_all_zero(self):
        assert np.all(column_histogram(np.zeros((5, 9))) == 0)

    def test_two_stripe_scene_has_two_peaks(self, cam, synth_cfg):
        grid = synth_cfg.grid
        scene = SceneSpec((LaneSpec(-1.8), LaneSpec(1.8)), texture=0.0, noise=0.0)
        frame, _ = synth_scene(scene, cam, grid, np.random.default_rng(0))
        hist = column_histogram(warp_to_ipm(frame, cam, grid))
        peaks = find_line_candidates(hist, LineDetectParams.for_lane_width(3.6 / grid.dx))
        expected = [int(np.argmin(np.abs(grid.column_x - x))) for x in (-1.8, 1.8)]
        assert len(peaks) == 2
        assert np.allclose(peaks, expected, atol=1.0)


class TestCandidates:
    def test_symmetric_vertex(self):
        assert 10 + parabola_vertex(4, 10, 4) == 10.0

    def test_asymmetric_vertex(self):
        v = 10 + parabola_vertex(3, 10, 5)
        assert v == pytest.approx(10 + 0.5 * (3 - 5) / (3 - 20 + 5), abs=1e-15)
        assert v == pytest.approx(10.083333333333334)
        # Dense quadratic fit through the same three points.
        a, b, _ = np.polyfit([9, 10, 11], [3, 10, 5], 2)
        assert v == pytest.approx(-b / (2 * a), abs=1e-9)

    def test_vertex_on_arrays(self):
        out = parabola_vertex(np.array([4.0, 3.0, 1.0]), np.array([10.0, 10.0, 1.0]), np.array([4.0, 5.0, 1.0]))
        assert np.allclose(out, [0.0, 1 / 12, 0.0])

    def test_smoothed_peaks_use_vertex(self):
        smooth = np.zeros(20)
        smooth[9:12] = [3, 10, 5]
        assert peaks_from_smoothed(smooth, 5.0) == [pytest.approx(10.083333333333334)]

    def test_grouping_boundary(self):
        gd = 10.0
        assert group_peaks([20.0, 35.0], [1.0, 1.0], gd) == [20.0, 35.0]
        assert group_peaks([20.0, 29.0], [1.0, 3.0], gd) == [pytest.approx(26.75)]

    def test_two_maxima_at_one_and_a_half_group_distances(self):
        hist = np.zeros(100)
        hist[[30, 45]] = 50.0
        p = LineDetectParams(hist_smooth_sigma=2.0, group_distance=10.0)
        assert find_line_candidates(hist, p) == [pytest.approx(30.0), pytest.approx(45.0)]

    def test_floor_discards_weak_maxima(self):
        hist = np.zeros(100)
        hist[20], hist[60] = 100.0, 5.0
        assert find_line_candidates(hist, LineDetectParams(group_distance=10.0)) == [pytest.approx(20.0)]

    def test_boundary_columns_never_peak(self):
        hist = np.zeros(50)
        hist[0] = hist[-1] = 10.0
        assert find_line_candidates(hist, LineDetectParams(group_distance=5.0)) == []

    def test_short_or_empty(self):
        assert find_line_candidates([1.0, 2.0], PARAMS) == []
        assert find_line_candidates(np.zeros(40), PARAMS) == []

    @given(st.lists(st.floats(0, 100), min_size=3, max_size=120), st.floats(1, 30))
    def test_sorted_and_separated(self, hist, gd):
        out = find_line_candidates(hist, LineDetectParams(group_distance=gd))
        assert all(b - a >= gd for a, b in zip(out, out[1:]))

    @given(st.lists(st.floats(0, 100), min_size=3, max_size=80), st.integers(1, 30))
    def test_translation_equivariant(self, hist, k):
        hist = np.asarray(hist)
        # Content kept clear of the borders, where edge replication breaks the symmetry.
        base = find_line_candidates(np.concatenate([np.zeros(12), hist, np.zeros(42)]), PARAMS)
        shifted = find_line_candidates(np.concatenate([np.zeros(12 + k), hist, np.zeros(42 - k)]), PARAMS)
        assert len(base) == len(shifted)
        assert np.allclose(np.add(base, k), shifted, atol=1e-9)


class TestLine:
    def test_rejects_degenerate(self):
        with pytest.raises(ValueError):
            Line((1.0, 2.0), (1.0, 2.0))
        with pytest.raises(ValueError):
            Line((1.0, float("nan")), (1.0, 2.0))

    def test_x_at(self):
        line = Line((0.0, 0.0), (10.0, 20.0))
        assert line.x_at(10.0) == 5.0
        assert np.allclose(line.direction, np.array([1, 2]) / math.sqrt(5))


class TestRansacLine:
    def test_vertical_with_outliers(self):
        rng = np.random.default_rng(5)
        img = np.zeros((20, 48))
        img[:, 30] = 1.0
        for _ in range(2):
            img[rng.integers(0, 20), rng.integers(18, 44)] = 1.0
        line = ransac_line(img, 30.0, PARAMS, np.random.default_rng(0))
        assert abs(line.p_start[0] - 30) < 0.1 and abs(line.p_end[0] - 30) < 0.1
        assert line.p_start[1] == 0 and line.p_end[1] == 19

    def test_two_pixels(self):
        img = np.zeros((30, 40))
        img[5, 18] = 2.0
        img[25, 22] = 3.0
        line = ransac_line(img, 20.0, PARAMS, np.random.default_rng(0))
        assert line.x_at(5.0) == pytest.approx(18.0)
        assert line.x_at(25.0) == pytest.approx(22.0)

    @pytest.mark.parametrize("n_rows", [30, 200])
    def test_tilted_five_degrees(self, n_rows):
        img = np.zeros((n_rows, 80))
        slope = math.tan(math.radians(5))
        ys = np.arange(n_rows)
        img[ys, np.round(30 + slope * ys).astype(int)] = 1.0
        line = ransac_line(img, 30 + slope * n_rows / 2, LineDetectParams(window_halfwidth=25.0), np.random.default_rng(1))
        angle = math.degrees(math.atan2(line.p_end[0] - line.p_start[0], line.p_end[1] - line.p_start[1]))
        assert abs(angle - 5) < 0.5

    def test_degenerate_windows(self):
        img = np.zeros((10, 40))
        img[3, 20] = 1.0
        with pytest.raises(DegenerateWindowError):
            ransac_line(img, 20.0, PARAMS, np.random.default_rng(0))
        with pytest.raises(DegenerateWindowError):
            ransac_line(np.ones((10, 40)), 200.0, PARAMS, np.random.default_rng(0))

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        img = rng.random((60, 50)) * (rng.random((60, 50)) < 0.3)
        a = ransac_line(img, 25.0, PARAMS, np.random.default_rng(9))
        b = ransac_line(img, 25.0, PARAMS, np.random.default_rng(9))
        assert a == b

    @given(st.integers(2, EXHAUSTIVE_MAX_POINTS), st.integers(0, 2**31))
    def test_beats_every_pair_on_small_windows(self, n, seed):
        rng = np.random.default_rng(seed)
        img = np.zeros((20, 20))
        flat = rng.choice(400, size=n, replace=False)
        img.flat[flat] = rng.uniform(0.1, 1.0, n)
        p = LineDetectParams(window_halfwidth=12.0)
        line = ransac_line(img, 10.0, p, np.random.default_rng(0))
        ys, xs = np.nonzero(img)
        w = img[ys, xs]
        best = max(
            mass_of_pair(xs.astype(float), ys.astype(float), w, i, j, p.ransac_inlier_threshold)
            for i, j in itertools.combinations(range(len(xs)), 2)
        )
        assert line.mass >= best - 1e-12
        assert line_mass(line, img, p.ransac_inlier_threshold) == pytest.approx(line.mass, abs=1e-9)

    @given(st.integers(0, 2**31), st.integers(1, 20), st.booleans())
    def test_translation_equivariant(self, seed, k, dense):
        rng = np.random.default_rng(seed)
        density = 0.5 if dense else 0.03
        content = rng.random((30, 30)) * (rng.random((30, 30)) < density)
        content[:, 15] = 1.0
        a_img = np.zeros((30, 80))
        b_img = np.zeros((30, 80))
        a_img[:, 10:40] = content
        b_img[:, 10 + k : 40 + k] = content
        a = ransac_line(a_img, 25.0, PARAMS, np.random.default_rng(4))
        b = ransac_line(b_img, 25.0 + k, PARAMS, np.random.default_rng(4))
        assert b.mass == a.mass
        assert np.allclose(np.add(a.p_start, (k, 0)), b.p_start, atol=1e-9)
        assert np.allclose(np.add(a.p_end, (k, 0)), b.p_end, atol=1e-9)

    def test_params_validation(self):
        with pytest.raises(ValueError):
            LineDetectParams(group_distance=0)
        p = LineDetectParams.for_lane_width(40.0)
        assert p.group_distance == pytest.approx(24.0)
