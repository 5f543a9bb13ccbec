from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lanedet.bezier import Spline, evaluate, fit_least_squares, line_spline, polygon_theta, raster_length, rasterize
from lanedet.camera import ground_to_image
from lanedet.image import IMAGE_FRAME, IPM_FRAME, ImageBuffer
from lanedet.line_detect import Line
from lanedet.postprocess import (
    PostParams,
    back_project_spline,
    extend_spline,
    extend_splines,
    forward_project_spline,
    geometry_check,
    geometry_check_batch,
    localize_spline,
    ridge_strength,
)

P = PostParams()
H, W = 120, 160


def ridge_image(x_of_y, rows=None, sigma=1.5, height=H, width=W):
    """Gaussian ridge of height 1 centered on column x_of_y(row), limited to ``rows``."""
    y = np.arange(height, dtype=float)[:, None]
    x = np.arange(width, dtype=float)[None, :]
    img = np.exp(-((x - x_of_y(y)) ** 2) / (2 * sigma**2))
    if rows is not None:
        img[(y[:, 0] < rows[0]) | (y[:, 0] > rows[1])] = 0.0
    return img


def max_offset(s, x_of_y):
    pts = evaluate(s, np.linspace(0, 1, 50))
    return float(np.max(np.abs(pts[:, 0] - x_of_y(pts[:, 1]))))


def rows_of(s):
    return sorted([s.p0[1], s.p3[1]])


class TestLocalize:
    def test_fixed_point_on_ridge(self):
        img = ridge_image(lambda y: 80.0 + 0 * y)
        s = line_spline((80, 10), (80, 110))
        out = localize_spline(s, img, P)
        assert np.max(np.abs(evaluate(out, np.linspace(0, 1, 50)) - evaluate(s, np.linspace(0, 1, 50)))) < 0.3

    def test_offset_is_corrected(self):
        img = ridge_image(lambda y: 80.0 + 0 * y)
        out = localize_spline(line_spline((82, 10), (82, 110)), img, P)
        assert max_offset(out, lambda y: 80.0) < 0.5

    def test_tilted_ridge(self):
        f = lambda y: 60.0 + 0.2 * y  # noqa: E731
        out = localize_spline(line_spline((f(10) - 2, 10), (f(110) - 2, 110)), ridge_image(f), P)
        assert max_offset(out, f) < 0.5

    def test_constant_image_unchanged(self):
        s = Spline([[80, 10], [85, 40], [78, 80], [82, 110]])
        assert localize_spline(s, np.full((H, W), 0.5), P) == s

    def test_far_peaks_rejected(self):
        # A ridge 4 px away needs more than the allowed angle change over a short spline.
        img = ridge_image(lambda y: 84.0 + 0 * y)
        s = line_spline((80, 50), (80, 58))
        assert localize_spline(s, img, P) == s

    def test_idempotent(self):
        f = lambda y: 70.0 + 8 * np.sin(y / 40.0)  # noqa: E731
        img = ridge_image(f)
        ys = np.linspace(5, 115, 12)
        start = fit_least_squares(np.column_stack([f(ys) + 1.5, ys]))
        once = localize_spline(start, img, P)
        assert max_offset(once, f) < 0.5
        twice = localize_spline(once, img, P)
        t = np.linspace(0, 1, 50)
        assert np.max(np.hypot(*(evaluate(twice, t) - evaluate(once, t)).T)) < 0.5

    def test_preserves_frame(self):
        img = ridge_image(lambda y: 80.0 + 0 * y)
        s = Spline(line_spline((81, 10), (81, 110)).points, IMAGE_FRAME)
        assert localize_spline(s, ImageBuffer(img), P).frame == IMAGE_FRAME


class TestExtend:
    def test_full_height_ridge(self):
        img = ridge_image(lambda y: 80.0 + 0 * y)
        out = extend_spline(line_spline((80, 30), (80, 90)), img, P)
        top, bottom = rows_of(out)
        assert top <= 3 and bottom >= H - 1 - 3
        assert max_offset(out, lambda y: 80.0) < 0.5

    def test_stops_at_ridge_end(self):
        img = ridge_image(lambda y: 80.0 + 0 * y, rows=(0, 70))
        out = extend_spline(line_spline((80, 20), (80, 50)), img, P)
        top, bottom = rows_of(out)
        assert abs(bottom - 70) <= 2 * P.extend_step
        assert top <= 3

    def test_at_borders_unchanged(self):
        img = ridge_image(lambda y: 80.0 + 0 * y)
        s = line_spline((80, 0), (80, H - 1))
        assert extend_spline(s, img, P) == s

    def test_curved_ridge_followed(self):
        f = lambda y: 60.0 + 0.002 * (y - 20) ** 2  # noqa: E731
        img = ridge_image(f)
        out = extend_spline(localize_spline(line_spline((f(40), 40), (f(80), 80)), img, P), img, P)
        top, bottom = rows_of(out)
        assert top <= 3 + P.extend_step and bottom >= H - 1 - 3 - P.extend_step
        assert max_offset(out, f) < 1.0

    def test_min_row_limits_walk(self):
        img = ridge_image(lambda y: 80.0 + 0 * y)
        out = extend_spline(line_spline((80, 50), (80, 90)), img, P, min_row=30.0)
        assert rows_of(out)[0] >= 30 - 1

    def test_idempotent(self):
        img = ridge_image(lambda y: 80.0 + 0 * y, rows=(10, 100))
        once = extend_spline(line_spline((80, 40), (80, 60)), img, P)
        twice = extend_spline(once, img, P)
        t = np.linspace(0, 1, 50)
        assert np.max(np.hypot(*(evaluate(twice, t) - evaluate(once, t)).T)) < 0.5

    def test_batch_matches_single(self):
        img = ridge_image(lambda y: 50.0 + 0 * y) + ridge_image(lambda y: 110.0 + 0.1 * y, rows=(0, 80))
        splines = [line_spline((50, 40), (50, 70)), line_spline((114, 40), (116, 60)), line_spline((10, 5), (10, 9))]
        assert extend_splines(splines, img, P) == [extend_spline(s, img, P) for s in splines]

    @settings(max_examples=25)
    @given(st.integers(0, 2**31))
    def test_never_shortens(self, seed):
        rng = np.random.default_rng(seed)
        img = rng.random((H, W)) * 0.3 + ridge_image(lambda y: 40.0 + 0.3 * y)
        ctrl = np.column_stack([rng.uniform(20, 140, 4), np.sort(rng.uniform(0, H - 1, 4))])
        if ctrl[0, 1] == ctrl[3, 1]:
            return
        s = Spline(ctrl)
        out = extend_spline(s, img, P)
        assert raster_length(rasterize(out)) >= raster_length(rasterize(s)) - 1e-9
        assert out.frame == s.frame


def test_ridge_strength_zero_on_flat_image():
    assert ridge_strength(line_spline((80, 10), (80, 110)), np.full((H, W), 0.4), P) == 0.0
    assert ridge_strength(line_spline((80, 10), (80, 110)), ridge_image(lambda y: 80.0 + 0 * y), P) > 0.5


def hairpin(theta_cos: float) -> Spline:
    turn = math.acos(theta_cos)
    d0 = np.array([0.0, 1.0])
    rot = np.array([[math.cos(turn), -math.sin(turn)], [math.sin(turn), math.cos(turn)]])
    d1 = rot @ d0
    d2 = rot.T @ d1
    p0 = np.array([80.0, 10.0])
    p1 = p0 + 40 * d0
    p2 = p1 + 40 * d1
    return Spline(np.array([p0, p1, p2, p2 + 40 * d2]))


class TestGeometryCheck:
    seed = Line((80.0, 0.0), (80.0, 119.0))

    def test_pass_through(self):
        s = Spline([[80, 0], [81, 40], [79, 80], [80, 119]])
        v = geometry_check(s, self.seed, P, H)
        assert v.status == "pass" and v.spline is s

    def test_hairpin_replaced(self):
        s = hairpin(0.2)
        assert polygon_theta(s.points) == pytest.approx(0.2)
        v = geometry_check(s, self.seed, P, H)
        assert v.status == "replaced"
        assert v.spline == line_spline(self.seed.p_start, self.seed.p_end)

    def test_short_replaced(self):
        v = geometry_check(line_spline((80, 50), (80, 55)), self.seed, P, H)
        assert v.status == "replaced"

    def test_horizontal_rejected(self):
        v = geometry_check(line_spline((10, 60), (150, 60)), Line((10.0, 60.0), (150.0, 60.0)), P, H)
        assert v.rejected and v.status == "rejected"

    def test_batch_equals_single(self):
        rng = np.random.default_rng(3)
        splines = [hairpin(0.2), line_spline((80, 50), (80, 55)), line_spline((10, 60), (150, 60))]
        splines += [Spline(rng.uniform(0, 150, (4, 2))) for _ in range(20)]
        seeds = [self.seed] * len(splines)
        for v, s in zip(geometry_check_batch(splines, seeds, P, H), splines):
            w = geometry_check(s, self.seed, P, H)
            assert v.status == w.status and v.spline == w.spline
        assert geometry_check_batch([], [], P, H) == []

    @given(st.lists(st.floats(0, 150), min_size=8, max_size=8))
    def test_output_respects_curvature_floor(self, coords):
        ctrl = np.array(coords).reshape(4, 2)
        if np.array_equal(ctrl[0], ctrl[3]):
            return
        v = geometry_check(Spline(ctrl), self.seed, P, H)
        if not v.rejected:
            assert polygon_theta(v.spline.points) >= P.min_spline_theta
            assert v.spline.frame == IPM_FRAME


class TestBackProjection:
    def test_center_line_converges_to_horizon(self, cam, synth_cfg):
        grid = synth_cfg.grid
        col = float(grid.world_to_ipm([[0.0, 10.0]])[0, 0])
        s = line_spline((col, 0.0), (col, grid.out_height - 1.0))
        img = back_project_spline(s, cam, grid)
        assert img.frame == IMAGE_FRAME
        pts = evaluate(img, np.linspace(0, 1, 40))
        assert np.allclose(pts[:, 0], cam.cu, atol=1e-6)
        assert np.all(pts[:, 1] > cam.horizon_row)
        far, near = sorted([img.p0[1], img.p3[1]])
        assert far - cam.horizon_row < near - cam.horizon_row

    def test_matches_ray_casting(self, cam, synth_cfg):
        grid = synth_cfg.grid
        s = Spline([[40.0, 0.0], [45.0, 40.0], [55.0, 80.0], [60.0, 119.0]])
        img = back_project_spline(s, cam, grid)
        t = np.linspace(0, 1, 30)
        want = ground_to_image(grid.ipm_to_world(evaluate(s, t)), cam)
        got = evaluate(img, t)
        dense = ground_to_image(grid.ipm_to_world(evaluate(s, np.linspace(0, 1, 4000))), cam)
        d = np.min(np.hypot(*(got[:, None, :] - dense[None, :, :]).transpose(2, 0, 1)), axis=1)
        # A projected cubic is rational, so one cubic only approximates it.
        assert d.max() < 1.0
        assert np.allclose(got[[0, -1]], want[[0, -1]], atol=1e-9)

    def test_straight_lines_project_exactly(self, cam, synth_cfg):
        grid = synth_cfg.grid
        s = line_spline((30.0, 2.0), (70.0, 117.0))
        img = back_project_spline(s, cam, grid)
        t = np.linspace(0, 1, 40)
        pts = evaluate(img, t)
        a, b = img.p0, img.p3
        cross = (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0])
        assert np.max(np.abs(cross)) / np.hypot(*(b - a)) < 1e-6

    def test_round_trip(self, cam, synth_cfg):
        grid = synth_cfg.grid
        s = Spline([[70.0, 5.0], [72.0, 40.0], [78.0, 80.0], [85.0, 115.0]])
        back = forward_project_spline(back_project_spline(s, cam, grid), cam, grid)
        t = np.linspace(0, 1, 60)
        dense = evaluate(s, np.linspace(0, 1, 4000))
        got = evaluate(back, t)
        d = np.min(np.hypot(*(got[:, None, :] - dense[None, :, :]).transpose(2, 0, 1)), axis=1)
        assert d.max() < 0.5

    def test_parallel_pair_converges(self, cam, synth_cfg):
        grid = synth_cfg.grid
        a = back_project_spline(line_spline((60.0, 0.0), (60.0, 119.0)), cam, grid)
        b = back_project_spline(line_spline((100.0, 0.0), (100.0, 119.0)), cam, grid)
        t = np.linspace(0, 1, 30)
        pa, pb = evaluate(a, t), evaluate(b, t)
        rows = np.linspace(max(pa[:, 1].min(), pb[:, 1].min()), min(pa[:, 1].max(), pb[:, 1].max()), 25)
        xa = np.interp(rows, *pa[np.argsort(pa[:, 1])][:, ::-1].T)
        xb = np.interp(rows, *pb[np.argsort(pb[:, 1])][:, ::-1].T)
        sep = xb - xa
        assert np.all(np.diff(sep) > 0)
