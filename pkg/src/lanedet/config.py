"""Flat ``key=value`` configuration files.

Lines are ``key = value``; blank lines and ``#`` comments are ignored.
Angles (``pitch``, ``yaw``) are in degrees, world lengths share the unit of
``cameraHeight`` (meters for the shipped defaults).  ``ipmLeft/Right/Top/
Bottom`` bound the image-frame region that is mapped onto the road.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .bezier import ScoreParams
from .camera import CameraParams, IpmGrid
from .errors import ConfigError, GeometryError
from .lane_filter import FilterParams
from .line_detect import LineDetectParams
from .postprocess import PostParams
from .ransac_spline import SplineRansacParams

CAMERA_KEYS = (
    "focalLengthX",
    "focalLengthY",
    "opticalCenterX",
    "opticalCenterY",
    "cameraHeight",
    "pitch",
    "yaw",
    "ipmWidth",
    "ipmHeight",
    "ipmLeft",
    "ipmRight",
    "ipmTop",
    "ipmBottom",
)

# Optional keys and their defaults.
DEFAULTS = {
    "lineWidthWorld": 0.0762,  # 3 inches
    "lineHeightWorld": 1.0,
    "laneWidthWorld": 3.6,
    "quantile": 0.975,
    "histSmoothSigma": 2.0,
    "groupDistance": None,  # 0.6 lane widths
    "lineRansacIters": 50,
    "lineInlierThresh": 1.5,
    "windowHalfwidth": None,  # 0.4 lane widths
    "splineRansacIters": 40,
    "splineSampleSize": 6,
    "splineScoreK1": 0.2,
    "splineScoreK2": 0.4,
    "minSplineSupport": 0.1,
    "minSplineContrast": 8.0,
    "localizeSamples": 10,
    "normalHalfLength": None,  # 1.5 line widths, at least 4 px
    "extendStep": 4.0,
    "maxOrientationDeltaDeg": 20.0,
    "peakFloorRatio": 0.25,
    "minSplineTheta": 0.8,
    "minSplineLengthRatio": 0.2,
    "maxTiltDeg": 30.0,
    "imageExtension": 1,
}

INT_KEYS = {"ipmWidth", "ipmHeight", "lineRansacIters", "splineRansacIters", "splineSampleSize",
            "localizeSamples", "imageExtension"}

MODES = ("all", "two")


def parse_config_text(text: str) -> dict[str, float]:
    values: dict[str, float] = {}
    known = set(CAMERA_KEYS) | set(DEFAULTS)
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key=value, got {raw.strip()!r}", lineno)
        key, _, value = (p.strip() for p in line.partition("="))
        if key not in known:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        try:
            num = float(value)
        except ValueError:
            raise ConfigError(f"{key}: not a number: {value!r}", lineno) from None
        if not math.isfinite(num):
            raise ConfigError(f"{key}: value must be finite", lineno)
        if key in INT_KEYS:
            if num != int(num):
                raise ConfigError(f"{key}: expected an integer", lineno)
            num = int(num)
        values[key] = num
    missing = [k for k in CAMERA_KEYS if k not in values]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    return values


@dataclass(frozen=True, eq=False)
class PipelineConfig:
    camera: CameraParams
    grid: IpmGrid
    filter: FilterParams
    line: LineDetectParams
    spline: SplineRansacParams
    score: ScoreParams
    post: PostParams
    min_support: float = 0.1
    min_contrast: float = 8.0
    image_extension: bool = True
    mode: str = "all"
    seed: int = 0
    debug_images: bool = False
    values: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")

    def with_options(self, **kw) -> PipelineConfig:
        return replace(self, **kw)

    @classmethod
    def from_values(cls, values: dict, mode: str = "all", seed: int = 0, debug_images: bool = False) -> PipelineConfig:
        v = {k: d for k, d in DEFAULTS.items()}
        v.update(values)
        try:
            cam = CameraParams.from_degrees(
                v["focalLengthX"], v["focalLengthY"], v["opticalCenterX"], v["opticalCenterY"],
                v["pitch"], v["yaw"], v["cameraHeight"],
            )
            grid = IpmGrid.from_image_roi(
                cam, v["ipmLeft"], v["ipmRight"], v["ipmTop"], v["ipmBottom"], v["ipmWidth"], v["ipmHeight"]
            )
            lane_px = v["laneWidthWorld"] / grid.dx
            line_px = v["lineWidthWorld"] / grid.dx
            filt = FilterParams.from_world(v["lineWidthWorld"], v["lineHeightWorld"], grid.dx, grid.dy, v["quantile"])
            halfwidth = v["windowHalfwidth"] or 0.4 * lane_px
            line = LineDetectParams(
                hist_smooth_sigma=v["histSmoothSigma"],
                group_distance=v["groupDistance"] or 0.6 * lane_px,
                ransac_iterations=v["lineRansacIters"],
                ransac_inlier_threshold=v["lineInlierThresh"],
                window_halfwidth=halfwidth,
            )
            spline = SplineRansacParams(v["splineRansacIters"], v["splineSampleSize"], halfwidth)
            score = ScoreParams(v["splineScoreK1"], v["splineScoreK2"], float(grid.out_height))
            post = PostParams(
                localize_samples=v["localizeSamples"],
                normal_half_length=v["normalHalfLength"] or max(4.0, 1.5 * line_px),
                extend_step=v["extendStep"],
                max_orientation_delta_deg=v["maxOrientationDeltaDeg"],
                peak_floor_ratio=v["peakFloorRatio"],
                min_spline_theta=v["minSplineTheta"],
                min_spline_length_ratio=v["minSplineLengthRatio"],
                max_tilt_deg=v["maxTiltDeg"],
            )
        except (GeometryError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return cls(cam, grid, filt, line, spline, score, post, v["minSplineSupport"], v["minSplineContrast"],
                   bool(v["imageExtension"]), mode, seed, debug_images, dict(v))

    @classmethod
    def from_text(cls, text: str, **kw) -> PipelineConfig:
        return cls.from_values(parse_config_text(text), **kw)

    @classmethod
    def load(cls, path: str | Path, **kw) -> PipelineConfig:
        return cls.from_text(Path(path).read_text(), **kw)


def format_config(values: dict) -> str:
    keys = [k for k in CAMERA_KEYS if k in values] + [k for k in DEFAULTS if k in values and values[k] is not None]
    return "".join(f"{k} = {values[k]}\n" for k in keys)
