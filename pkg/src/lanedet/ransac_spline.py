"""RANSAC fitting of cubic Bezier splines seeded by RANSAC lines."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bezier import ScoreParams, Spline, fit_batch, line_spline, raster_support, score_batch
from .errors import InsufficientSupportError
from .image import IPM_FRAME, ImageBuffer, as_array
from .line_detect import Line


@dataclass(frozen=True)
class SplineRansacParams:
    num_iterations: int = 40
    sample_size: int = 6
    window_halfwidth: float = 16.0

    def __post_init__(self):
        if self.num_iterations < 0:
            raise ValueError("num_iterations must be non-negative")
        if self.sample_size < 4:
            raise ValueError("sample_size must be at least 4")
        if not self.window_halfwidth > 0:
            raise ValueError("window_halfwidth must be positive")


def line_window(shape, line: Line, halfwidth: float) -> np.ndarray:
    """Boolean mask of pixels within ``halfwidth`` (perpendicular) of ``line``."""
    h, w = shape
    d = line.direction
    x0, y0 = line.p_start
    dist = np.abs(d[0] * (np.arange(h)[:, None] - y0) - d[1] * (np.arange(w)[None, :] - x0))
    return dist <= halfwidth


def _support(window: np.ndarray):
    ys, xs = np.nonzero(window > 0)
    return np.column_stack([xs, ys]).astype(np.float64), window[ys, xs]


def _sample_indices(weights: np.ndarray, n: int, draws: int, rng: np.random.Generator) -> np.ndarray:
    """``(draws, n)`` indices, each row a weighted sample without replacement.

    Uses exponential keys scaled by 1/weight; the n smallest keys form the
    sample.  Rows are generated in order, so the first k rows do not depend
    on ``draws``.
    """
    keys = rng.standard_exponential((draws, len(weights))) / weights
    if n >= len(weights):
        return np.broadcast_to(np.arange(len(weights)), (draws, len(weights))).copy()
    return np.argpartition(keys, n - 1, axis=1)[:, :n]


def _row_sorted(points: np.ndarray) -> np.ndarray:
    # points (..., n, 2): sort by row, then column.
    key = points[..., 1] * (points[..., 0].max(initial=0) + 1.0) + points[..., 0]
    order = np.argsort(key, axis=-1, kind="stable")
    return np.take_along_axis(points, order[..., None], axis=-2)


def weighted_sample(window: ImageBuffer | np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` distinct nonzero pixels ``(x, y)``, drawn with probability proportional to value, sorted by row."""
    pts, w = _support(as_array(window))
    if len(pts) < n:
        raise InsufficientSupportError(f"{len(pts)} nonzero pixels, sample needs {n}")
    idx = _sample_indices(w, n, 1, rng)[0]
    return _row_sorted(pts[idx])


@dataclass(frozen=True)
class SplineFit:
    spline: Spline
    score: float
    from_seed: bool


def ransac_spline_fit(thresh: ImageBuffer | np.ndarray, seed_line: Line, params: SplineRansacParams,
                      score_params: ScoreParams, rng: np.random.Generator) -> SplineFit:
    """Best-scoring spline among the seed line and ``num_iterations`` sampled fits.

    Candidates are scored on the thresholded image restricted to the window
    around ``seed_line``.  Samples whose fit is rank deficient are skipped.
    Ties keep the earlier candidate, so the seed wins ties.
    """
    data = as_array(thresh)
    window = np.where(line_window(data.shape, seed_line, params.window_halfwidth), data, 0.0)
    pts, w = _support(window)
    if len(pts) < params.sample_size:
        raise InsufficientSupportError(
            f"window holds {len(pts)} nonzero pixels, sample needs {params.sample_size}"
        )
    seed = line_spline(seed_line.p_start, seed_line.p_end, IPM_FRAME)
    ctrl = seed.points[None]
    if params.num_iterations > 0:
        idx = _sample_indices(w, params.sample_size, params.num_iterations, rng)
        samples = _row_sorted(pts[idx])
        fitted, ok = fit_batch(samples)
        ctrl = np.concatenate([ctrl, fitted[ok]])
        # Coincident endpoints cannot form a Spline.
        ctrl = ctrl[np.any(ctrl[:, 0] != ctrl[:, 3], axis=1) | (np.arange(len(ctrl)) == 0)]
    scores, _, _, _ = score_batch(ctrl, window, score_params)
    best = int(np.argmax(scores))
    # Batch and single scoring agree exactly, so this equals score_spline.
    return SplineFit(Spline(ctrl[best], IPM_FRAME), float(scores[best]), best == 0)


def support_fraction(s: Spline, thresh: ImageBuffer | np.ndarray) -> float:
    """Share of the spline's in-image raster pixels that are nonzero in ``thresh``."""
    return float(raster_support(s.points[None], thresh)[0])
