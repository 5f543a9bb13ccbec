"""Synthetic road scenes with exact ground truth.

Lanes are painted on a flat road in world coordinates and rendered through
the camera model, so the projected lane centerlines are known exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraParams, IpmGrid, ground_to_image, image_to_ground
from .errors import GeometryError
from .image import IMAGE_FRAME, ImageBuffer


@dataclass(frozen=True)
class LaneSpec:
    """Lane boundary centerline ``x(y) = offset + slope*y + curvature*y**2``."""

    offset: float
    slope: float = 0.0
    curvature: float = 0.0
    width: float = 0.15
    dash_period: float = 0.0  # 0 = solid
    dash_duty: float = 0.5
    dash_phase: float = 0.0
    brightness: float = 0.9

    def x_at(self, y):
        y = np.asarray(y, dtype=np.float64)
        return self.offset + self.slope * y + self.curvature * y * y


@dataclass(frozen=True)
class ShadowBand:
    """Dark band crossing the road between forward distances y0..y1 at ``angle`` radians from lateral."""

    y0: float
    y1: float
    angle: float = 0.0
    factor: float = 0.5


@dataclass(frozen=True)
class StopLine:
    y: float
    thickness: float = 0.4
    brightness: float = 0.9


@dataclass(frozen=True)
class SceneSpec:
    lanes: tuple[LaneSpec, ...]
    shadows: tuple[ShadowBand, ...] = ()
    stop_lines: tuple[StopLine, ...] = ()
    road_level: float = 0.3
    texture: float = 0.04
    noise: float = 0.02
    sky_level: float = 0.7
    width: int = 640
    height: int = 480
    tags: tuple[str, ...] = field(default=())


def synth_camera() -> CameraParams:
    """640x480 camera 1.5 m above the road, pitched 10 degrees down."""
    return CameraParams.from_degrees(500.0, 500.0, 320.0, 240.0, 10.0, 0.0, 1.5)


def synth_config_values(cam: CameraParams | None = None, x_half: float = 7.0, y_near: float = 4.0,
                        y_far: float = 35.0, out_width: int = 160, out_height: int = 120) -> dict:
    """Config key values whose image ROI maps onto ``[-x_half, x_half] x [y_near, y_far]``."""
    cam = cam or synth_camera()
    top_l, top_r = ground_to_image([[-x_half, y_far], [x_half, y_far]], cam)
    bottom = ground_to_image([0.0, y_near], cam)[1]
    return {
        "focalLengthX": cam.fu,
        "focalLengthY": cam.fv,
        "opticalCenterX": cam.cu,
        "opticalCenterY": cam.cv,
        "cameraHeight": cam.height,
        "pitch": round(math.degrees(cam.pitch), 9),
        "yaw": round(math.degrees(cam.yaw), 9),
        "ipmWidth": out_width,
        "ipmHeight": out_height,
        "ipmLeft": round(float(top_l[0]), 6),
        "ipmRight": round(float(top_r[0]), 6),
        "ipmTop": round(float(top_l[1]), 6),
        "ipmBottom": round(float(bottom), 6),
        "lineWidthWorld": 0.15,
    }


class _RayCache:
    """Per-pixel road coordinates and footprints for one camera and frame size."""

    def __init__(self, cam: CameraParams, width: int, height: int):
        v0 = int(math.floor(cam.horizon_row)) + 2
        v0 = max(v0, 0)
        self.v0 = v0
        us, vs = np.meshgrid(np.arange(width, dtype=np.float64), np.arange(v0, height, dtype=np.float64))
        g = image_to_ground(np.column_stack([us.ravel(), vs.ravel()]), cam)
        self.x = g[:, 0].reshape(us.shape)
        self.y = g[:, 1].reshape(us.shape)
        # Road footprint of one pixel, laterally and along the road.
        gx = image_to_ground(np.column_stack([us.ravel() + 1.0, vs.ravel()]), cam)
        # v0 - 1 is still below the horizon, so the row above is always valid.
        gy = image_to_ground(np.column_stack([us.ravel(), vs.ravel() - 1.0]), cam)
        self.fx = np.abs(gx[:, 0] - g[:, 0]).reshape(us.shape)
        self.fy = np.abs(gy[:, 1] - g[:, 1]).reshape(us.shape)


_CACHE: dict = {}


def _rays(cam: CameraParams, width: int, height: int) -> _RayCache:
    key = (cam, width, height)
    if key not in _CACHE:
        _CACHE.clear()
        _CACHE[key] = _RayCache(cam, width, height)
    return _CACHE[key]


def _coverage(dist, half, footprint):
    """Fraction of a pixel of size ``footprint`` covered by a band of half-width ``half``."""
    return np.clip((half - dist) / footprint + 0.5, 0.0, 1.0) - np.clip((-half - dist) / footprint + 0.5, 0.0, 1.0)


def check_scene(spec: SceneSpec, grid: IpmGrid) -> None:
    """Raise :class:`GeometryError` if a lane leaves the road window laterally."""
    ys = np.linspace(grid.y_near, grid.y_far, 64)
    for i, lane in enumerate(spec.lanes):
        xs = lane.x_at(ys)
        if xs.min() - lane.width < grid.x_left or xs.max() + lane.width > grid.x_right:
            raise GeometryError(f"lane {i} leaves the road window")


def lane_polyline(lane: LaneSpec, cam: CameraParams, grid: IpmGrid, width: int, height: int,
                  n: int = 200) -> np.ndarray | None:
    """Projected centerline over the road window's depth, clipped to the frame."""
    ys = np.linspace(grid.y_near, grid.y_far, n)
    uv = ground_to_image(np.column_stack([lane.x_at(ys), ys]), cam)
    inside = (uv[:, 0] >= 0) & (uv[:, 0] <= width - 1) & (uv[:, 1] >= 0) & (uv[:, 1] <= height - 1)
    if np.count_nonzero(inside) < 2:
        return None
    idx = np.flatnonzero(inside)
    # Longest contiguous visible run.
    breaks = np.flatnonzero(np.diff(idx) > 1)
    runs = np.split(idx, breaks + 1)
    run = max(runs, key=len)
    return uv[run]


def render_scene(spec: SceneSpec, cam: CameraParams, rng: np.random.Generator) -> np.ndarray:
    rays = _rays(cam, spec.width, spec.height)
    x, y = rays.x, rays.y
    phase = rng.uniform(0, 2 * math.pi, 6)
    freq = rng.uniform(0.3, 1.2, 6)
    road = spec.road_level + spec.texture * (
        np.sin(freq[0] * x + phase[0]) * np.sin(freq[1] * y + phase[1])
        + 0.5 * np.sin(freq[2] * 3 * x + phase[2] + freq[3] * 2 * y)
        + 0.5 * np.sin(freq[4] * 4 * y + phase[4]) * np.cos(freq[5] * 5 * x + phase[5])
    )
    paint = np.zeros_like(x)
    for lane in spec.lanes:
        slope = lane.slope + 2 * lane.curvature * y
        dist = np.abs(x - lane.x_at(y)) / np.sqrt(1 + slope * slope)
        cov = _coverage(dist, lane.width / 2, np.maximum(rays.fx, 1e-6))
        if lane.dash_period > 0:
            on = lane.dash_duty * lane.dash_period
            s = np.mod(y - lane.dash_phase, lane.dash_period)
            dash = _coverage(np.abs(s - on / 2), on / 2, np.maximum(rays.fy, 1e-6))
            cov = cov * dash
        paint = np.maximum(paint, cov * lane.brightness)
    for stop in spec.stop_lines:
        cov = _coverage(np.abs(y - stop.y), stop.thickness / 2, np.maximum(rays.fy, 1e-6))
        paint = np.maximum(paint, cov * stop.brightness)
    img_road = road + paint * (1.0 - road)
    for band in spec.shadows:
        along = y - x * math.tan(band.angle)
        cov = _coverage(np.abs(along - (band.y0 + band.y1) / 2), (band.y1 - band.y0) / 2, np.maximum(rays.fy, 1e-6))
        img_road = img_road * (1.0 - cov * (1.0 - band.factor))
    out = np.full((spec.height, spec.width), spec.sky_level)
    out[rays.v0 :] = img_road
    # Soften the horizon seam.
    if rays.v0 > 0:
        out[rays.v0 - 1] = 0.5 * (spec.sky_level + img_road[0])
    out += rng.normal(0.0, spec.noise, out.shape)
    return np.clip(out, 0.0, 1.0)


def synth_scene(spec: SceneSpec, cam: CameraParams, grid: IpmGrid,
                rng: np.random.Generator) -> tuple[ImageBuffer, list[np.ndarray]]:
    """Rendered frame (red channel, [0, 1]) and the visible lane centerlines in image coordinates."""
    check_scene(spec, grid)
    img = render_scene(spec, cam, rng)
    labels = []
    for lane in spec.lanes:
        poly = lane_polyline(lane, cam, grid, spec.width, spec.height)
        if poly is not None:
            labels.append(poly)
    return ImageBuffer(img, IMAGE_FRAME), labels


def random_scene_spec(rng: np.random.Generator, grid: IpmGrid, n_lanes: int | None = None,
                      curved: bool | None = None, max_tries: int = 100) -> SceneSpec:
    """Random 2-4 boundary scene that fits the road window.

    Boundaries are one lane width apart around the vehicle; dashed lines,
    shadow bands and stop lines are added at random.
    """
    for _ in range(max_tries):
        n = int(n_lanes if n_lanes is not None else rng.integers(2, 5))
        lane_w = rng.uniform(3.3, 3.8)
        # Index of the boundary immediately left of the vehicle.
        left_idx = int(rng.integers(0, n - 1))
        offset = rng.uniform(-0.6, 0.6)
        xs = [offset + (i - left_idx - 0.5) * lane_w for i in range(n)]
        slope = math.tan(math.radians(rng.uniform(-1.5, 1.5)))
        is_curved = bool(rng.random() < 0.5) if curved is None else curved
        curvature = 0.0
        if is_curved:
            radius = rng.uniform(150.0, 600.0) * rng.choice([-1.0, 1.0])
            curvature = 1.0 / (2.0 * radius)
        lanes = []
        tags = {"curved" if is_curved else "straight"}
        for i, x0 in enumerate(xs):
            dashed = rng.random() < 0.4 and 0 < i < n - 1
            dashed = dashed or (n == 2 and rng.random() < 0.2)
            if dashed:
                tags.add("dashed")
            lanes.append(
                LaneSpec(
                    offset=x0,
                    slope=slope,
                    curvature=curvature,
                    width=rng.uniform(0.10, 0.18),
                    dash_period=rng.uniform(9.0, 12.0) if dashed else 0.0,
                    dash_duty=0.5,
                    dash_phase=rng.uniform(0, 12.0),
                    brightness=rng.uniform(0.7, 0.95),
                )
            )
        shadows = []
        if rng.random() < 0.4:
            tags.add("shadow")
            for _ in range(int(rng.integers(1, 4))):
                y0 = rng.uniform(grid.y_near, grid.y_far)
                shadows.append(ShadowBand(y0, y0 + rng.uniform(1.0, 5.0), math.radians(rng.uniform(-30, 30)),
                                          rng.uniform(0.35, 0.7)))
        stops = []
        if rng.random() < 0.25:
            tags.add("stopline")
            stops.append(StopLine(rng.uniform(grid.y_near + 3, grid.y_far - 5), rng.uniform(0.3, 0.6)))
        spec = SceneSpec(
            lanes=tuple(lanes),
            shadows=tuple(shadows),
            stop_lines=tuple(stops),
            road_level=rng.uniform(0.2, 0.4),
            texture=rng.uniform(0.02, 0.06),
            noise=rng.uniform(0.01, 0.03),
            tags=tuple(sorted(tags)),
        )
        try:
            check_scene(spec, grid)
        except GeometryError:
            continue
        return spec
    raise GeometryError("could not place lanes inside the road window")


@dataclass(frozen=True)
class CorpusSpec:
    """Scene distribution for a synthetic corpus (``key = value`` file, all keys optional)."""

    min_lanes: int = 2
    max_lanes: int = 4
    curved_fraction: float = 0.5

    def __post_init__(self):
        if not 1 <= self.min_lanes <= self.max_lanes:
            raise ValueError("need 1 <= minLanes <= maxLanes")
        if not 0.0 <= self.curved_fraction <= 1.0:
            raise ValueError("curvedFraction must lie in [0, 1]")

    @classmethod
    def from_text(cls, text: str) -> CorpusSpec:
        keys = {"minLanes": "min_lanes", "maxLanes": "max_lanes", "curvedFraction": "curved_fraction"}
        kw = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (p.strip() for p in line.partition("="))
            if not sep or key not in keys:
                raise ValueError(f"line {lineno}: expected one of {sorted(keys)} as key=value")
            kw[keys[key]] = float(value) if key == "curvedFraction" else int(value)
        return cls(**kw)


def synth_corpus(n_frames: int, seed: int, grid: IpmGrid, cam: CameraParams | None = None,
                 spec: CorpusSpec = CorpusSpec()):
    """Yield ``(index, frame, labels, scene)`` for ``n_frames`` seeded scenes."""
    cam = cam or synth_camera()
    rng = np.random.default_rng(seed)
    for i in range(n_frames):
        n = int(rng.integers(spec.min_lanes, spec.max_lanes + 1))
        curved = bool(rng.random() < spec.curved_fraction)
        scene = random_scene_spec(rng, grid, n_lanes=n, curved=curved)
        frame, labels = synth_scene(scene, cam, grid, rng)
        yield i, frame, labels, scene
