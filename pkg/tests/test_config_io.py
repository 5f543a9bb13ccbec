from __future__ import annotations

import numpy as np
import pytest

from lanedet.config import CAMERA_KEYS, PipelineConfig, format_config, parse_config_text
from lanedet.errors import ConfigError, FormatError
from lanedet.image import IMAGE_FRAME, ImageBuffer
from lanedet.imageio import decode_netpbm, load_frame, write_pgm, write_ppm
from lanedet.synth import synth_config_values

BASE = format_config(synth_config_values())


class TestConfig:
    def test_round_trip(self):
        values = parse_config_text(BASE)
        assert format_config(values) == BASE
        cfg = PipelineConfig.from_text(BASE, mode="two", seed=5)
        assert cfg.mode == "two" and cfg.seed == 5
        assert (cfg.grid.out_width, cfg.grid.out_height) == (160, 120)
        assert cfg.score.image_height_v == 120.0

    def test_comments_and_blank_lines(self):
        text = "# camera\n\n" + BASE.replace("\n", "  # note\n", 1)
        assert parse_config_text(text) == parse_config_text(BASE)

    def test_derived_filter_widths(self):
        cfg = PipelineConfig.from_text(BASE)
        assert cfg.filter.sigma_x == pytest.approx(0.5 * 0.15 / cfg.grid.dx)
        assert cfg.filter.sigma_y == pytest.approx(1.0 / cfg.grid.dy)
        assert cfg.filter.quantile_q == 0.975

    def test_optional_overrides(self):
        cfg = PipelineConfig.from_text(BASE + "splineRansacIters = 7\nquantile = 0.95\n")
        assert cfg.spline.num_iterations == 7 and cfg.filter.quantile_q == 0.95

    @pytest.mark.parametrize("extra", [
        "bogus = 1\n",
        "pitch = 3\n",
        "quantile 0.9\n",
        "quantile = abc\n",
        "quantile = nan\n",
        "ipmWidth = 10.5\n",
    ])
    def test_bad_lines_report_line_number(self, extra):
        with pytest.raises(ConfigError) as exc:
            parse_config_text(BASE + extra)
        assert exc.value.line == BASE.count("\n") + 1

    def test_missing_key(self):
        text = "".join(l + "\n" for l in BASE.splitlines() if not l.startswith("pitch"))
        with pytest.raises(ConfigError, match="pitch"):
            parse_config_text(text)

    def test_invalid_values(self):
        with pytest.raises(ConfigError):
            PipelineConfig.from_text(BASE + "quantile = 1.5\n")
        with pytest.raises(ConfigError):
            PipelineConfig.from_text(BASE, mode="both")

    def test_all_camera_keys_required(self):
        assert set(CAMERA_KEYS) <= set(parse_config_text(BASE))


class TestImageIO:
    def test_p6_pure_red(self, tmp_path):
        p = tmp_path / "red.ppm"
        p.write_bytes(b"P6\n2 2\n255\n" + bytes([255, 0, 0]) * 4)
        img = load_frame(p)
        assert img.frame == IMAGE_FRAME
        assert img.data.shape == (2, 2) and np.all(img.data == 1.0)

    def test_p5_normalized(self, tmp_path):
        p = tmp_path / "g.pgm"
        p.write_bytes(b"P5\n# comment\n3 1\n255\n" + bytes([128, 0, 255]))
        assert np.array_equal(load_frame(p).data, [[128 / 255, 0.0, 1.0]])

    def test_sixteen_bit(self):
        data = decode_netpbm(b"P5 1 1 65535\n" + (32768).to_bytes(2, "big"))
        assert data[0, 0] == 32768 / 65535

    def test_truncated(self, tmp_path):
        p = tmp_path / "t.ppm"
        p.write_bytes(b"P6\n4 4\n255\n" + bytes(10))
        with pytest.raises(FormatError) as exc:
            load_frame(p)
        assert exc.value.offset == len(p.read_bytes())

    @pytest.mark.parametrize("buf,offset", [(b"P6\n4 x\n255\n", 5), (b"P6", 2), (b"P3\n1 1\n255\n0 0 0", 0),
                                            (b"P5\n1 1\n70000\n", 12)])
    def test_bad_headers(self, buf, offset):
        with pytest.raises(FormatError) as exc:
            decode_netpbm(buf)
        assert exc.value.offset == offset

    def test_unknown_format(self, tmp_path):
        p = tmp_path / "x.bin"
        p.write_bytes(b"GIF89a")
        with pytest.raises(FormatError):
            load_frame(p)

    def test_png_red_channel(self, tmp_path):
        from PIL import Image

        rgb = np.zeros((3, 4, 3), np.uint8)
        rgb[..., 0] = 200
        rgb[..., 1] = 50
        Image.fromarray(rgb).save(tmp_path / "f.png")
        assert np.allclose(load_frame(tmp_path / "f.png").data, 200 / 255)

    def test_corrupt_png(self, tmp_path):
        p = tmp_path / "bad.png"
        p.write_bytes(b"\x89PNG\r\n\x1a\n" + bytes(20))
        with pytest.raises(FormatError):
            load_frame(p)

    def test_write_round_trip(self, tmp_path, rng):
        data = np.round(rng.random((5, 7)) * 255) / 255
        write_pgm(tmp_path / "a.pgm", data)
        assert np.allclose(load_frame(tmp_path / "a.pgm").data, data)
        rgb = np.stack([data, 1 - data, data], axis=2)
        write_ppm(tmp_path / "a.ppm", rgb)
        assert np.allclose(load_frame(tmp_path / "a.ppm").data, data)

    def test_image_buffer_validation(self):
        with pytest.raises(ValueError):
            ImageBuffer(np.zeros(5))
        with pytest.raises(ValueError):
            ImageBuffer(np.array([[np.nan]]))
        with pytest.raises(ValueError):
            ImageBuffer(np.zeros((2, 2)), "world")
