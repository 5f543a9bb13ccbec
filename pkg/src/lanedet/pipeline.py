"""Per-frame detection: IPM -> filter -> threshold -> lines -> splines -> post-processing."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .bezier import Spline, evaluate, raster_support, score_batch
from .camera import IpmGrid, IpmMap, ground_to_image
from .config import PipelineConfig
from .errors import LaneDetError
from .image import IMAGE_FRAME, ImageBuffer
from .lane_filter import filter_ipm, quantile_threshold
from .line_detect import Line, column_histogram, find_line_candidates, ransac_line
from .postprocess import back_project_spline, extend_splines, geometry_check_batch, localize_spline
from .ransac_spline import ransac_spline_fit

log = logging.getLogger(__name__)

STAGES = ("ipm", "filter", "threshold", "lines", "splines", "post", "backproject")

# Image-frame extension uses pixel lengths this many times the IPM ones.
IMAGE_POST_SCALE = 2.0
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True, eq=False)
class Detection:
    spline: Spline  # image frame
    ipm_spline: Spline
    score: float


@dataclass
class FrameResult:
    detections: list[Detection] = field(default_factory=list)
    timings_us: dict[str, float] = field(default_factory=dict)
    seed: int = 0
    error: str | None = None
    debug: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def total_us(self) -> float:
        return float(sum(self.timings_us.values()))


def frame_seed(base_seed: int, frame_index: int) -> int:
    return (int(base_seed) ^ int(frame_index)) & _MASK64


class Detector:
    """Detector bound to one configuration; IPM sampling maps are built once."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        grid = cfg.grid
        if cfg.mode == "two":
            # Central half of the road window, same resolution.
            q = grid.out_width // 4
            cols = max(8, grid.out_width - 2 * q)
            grid = IpmGrid(grid.x_left + q * grid.dx, grid.x_left + (q + cols) * grid.dx,
                           grid.y_near, grid.y_far, cols, grid.out_height, grid.roi_image)
        self.grid = grid
        self.ipm_map = IpmMap.build(cfg.camera, grid)
        far_row = ground_to_image([0.0, 2.0 * grid.y_far], cfg.camera)[1]
        self.min_image_row = float(max(far_row, cfg.camera.horizon_row + 1.0))
        self.image_post = cfg.post.scaled(IMAGE_POST_SCALE)

    def detect(self, frame: ImageBuffer, seed: int = 0) -> FrameResult:
        cfg = self.cfg
        res = FrameResult(seed=seed)
        t = res.timings_us
        clock = time.perf_counter_ns

        t0 = clock()
        ipm = self.ipm_map.warp(frame)
        t1 = clock()
        t["ipm"] = (t1 - t0) / 1e3
        filtered = filter_ipm(ipm, cfg.filter)
        t2 = clock()
        t["filter"] = (t2 - t1) / 1e3
        thresh = quantile_threshold(filtered, cfg.filter.quantile_q)
        t3 = clock()
        t["threshold"] = (t3 - t2) / 1e3

        cands = find_line_candidates(column_histogram(thresh), cfg.line)
        lines: list[tuple[int, Line, np.random.Generator]] = []
        for k, col in enumerate(cands):
            rng = np.random.default_rng([seed, k])
            try:
                lines.append((k, ransac_line(thresh, col, cfg.line, rng), rng))
            except LaneDetError as exc:
                log.debug("candidate %d at column %.1f: %s", k, col, exc)
        t4 = clock()
        t["lines"] = (t4 - t3) / 1e3

        fits = []
        for k, line, rng in lines:
            try:
                fit = ransac_spline_fit(thresh, line, cfg.spline, cfg.score, rng)
            except LaneDetError as exc:
                log.debug("candidate %d spline: %s", k, exc)
                continue
            fits.append((line, fit.spline))
        t5 = clock()
        t["splines"] = (t5 - t4) / 1e3

        kept = self._post_ipm(fits, ipm, thresh, filtered)
        t6 = clock()
        t["post"] = (t6 - t5) / 1e3

        projected = []
        for score, s in kept:
            try:
                projected.append((score, s, back_project_spline(s, cfg.camera, self.grid)))
            except LaneDetError as exc:
                log.debug("back-projection failed: %s", exc)
        img_splines = [p[2] for p in projected]
        if cfg.image_extension:
            img_splines = extend_splines(img_splines, frame.data, self.image_post, self.min_image_row)
        for (score, s, _), img_spline in zip(projected, img_splines):
            res.detections.append(Detection(img_spline, s, score))
        t["backproject"] = (clock() - t6) / 1e3

        if cfg.debug_images:
            res.debug = {"ipm": ipm.data, "filtered": filtered.data, "thresholded": thresh.data}
        return res

    def _post_ipm(self, fits, ipm: ImageBuffer, thresh: ImageBuffer,
                  filtered: ImageBuffer) -> list[tuple[float, Spline]]:
        cfg = self.cfg
        height = float(self.grid.out_height)
        seeds = [line for line, _ in fits]
        splines = [localize_spline(s, ipm, cfg.post) for _, s in fits]
        for step in range(2):
            if step:
                splines = extend_splines(splines, ipm, cfg.post)
            verdicts = geometry_check_batch(splines, seeds, cfg.post, height)
            seeds = [line for line, v in zip(seeds, verdicts) if not v.rejected]
            splines = [v.spline for v in verdicts if not v.rejected]
        if not splines:
            return []
        ctrl = np.stack([s.points for s in splines])
        support = raster_support(ctrl, strong_mask(thresh, filtered, cfg.min_contrast))
        scores = score_batch(ctrl, thresh, cfg.score)[0]
        out = [(float(sc), s) for sc, sup, s in zip(scores, support, splines) if sup >= cfg.min_support]
        return _suppress_duplicates(out, 0.5 * cfg.line.group_distance)


def strong_mask(thresh: ImageBuffer, filtered: ImageBuffer, contrast: float) -> np.ndarray:
    """Thresholded pixels whose response is ``contrast`` robust noise scales above the median.

    The quantile threshold always keeps a fixed share of pixels, so on a
    road with no markings it keeps texture noise.  Counting support only on
    pixels that also stand out from the filtered image's noise floor (median
    and scaled MAD of the valid pixels) lets the support floor reject
    splines fitted to that noise.
    """
    data = filtered.data
    valid = data if filtered.valid is None else data[filtered.valid]
    if not valid.size:
        return np.zeros(data.shape, dtype=bool)
    med = float(np.median(valid))
    sigma = 1.4826 * float(np.median(np.abs(valid - med)))
    return (thresh.data > 0) & (data >= med + contrast * sigma)


def _suppress_duplicates(scored: list[tuple[float, Spline]], radius: float) -> list[tuple[float, Spline]]:
    """Drop splines lying within ``radius`` (median sample distance) of a better one."""
    scored = sorted(scored, key=lambda p: -p[0])
    kept: list[tuple[float, Spline]] = []
    samples: list[np.ndarray] = []
    for score, s in scored:
        pts = evaluate(s, np.linspace(0.0, 1.0, 20))
        dup = False
        for other in samples:
            d = np.sqrt(((pts[:, None] - other[None]) ** 2).sum(-1)).min(axis=1)
            if np.median(d) < radius:
                dup = True
                break
        if not dup:
            kept.append((score, s))
            samples.append(pts)
    return sorted(kept, key=lambda p: float(p[1].points[:, 0].mean()))


@lru_cache(maxsize=8)
def _detector_for(cfg: PipelineConfig) -> Detector:
    return Detector(cfg)


def detect_frame(frame: ImageBuffer, cfg: PipelineConfig, frame_index: int = 0) -> FrameResult:
    """Detect lane boundaries in one frame; errors yield an empty result with a note."""
    seed = frame_seed(cfg.seed, frame_index)
    try:
        if frame.frame != IMAGE_FRAME:
            raise LaneDetError("detect_frame expects an image-frame raster")
        return _detector_for(cfg).detect(frame, seed)
    except (LaneDetError, ValueError) as exc:
        return FrameResult(seed=seed, error=f"{type(exc).__name__}: {exc}")
