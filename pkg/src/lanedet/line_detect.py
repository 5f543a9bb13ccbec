"""Vertical line candidates from column sums, refined by weighted RANSAC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateWindowError
from .image import IPM_FRAME, ImageBuffer, as_array

# Small windows are enumerated exhaustively instead of sampled.
EXHAUSTIVE_MAX_POINTS = 40
_MAX_REDRAWS = 10


@dataclass(frozen=True)
class Line:
    p_start: tuple[float, float]
    p_end: tuple[float, float]
    frame: str = IPM_FRAME
    mass: float = 0.0

    def __post_init__(self):
        a = tuple(float(v) for v in self.p_start)
        b = tuple(float(v) for v in self.p_end)
        if not all(np.isfinite(a + b)):
            raise ValueError("line endpoints must be finite")
        if a == b:
            raise ValueError("line endpoints coincide")
        object.__setattr__(self, "p_start", a)
        object.__setattr__(self, "p_end", b)

    @property
    def direction(self) -> np.ndarray:
        d = np.subtract(self.p_end, self.p_start)
        return d / np.hypot(*d)

    def x_at(self, y):
        """Column of the (non-horizontal) line at row(s) ``y``."""
        (x0, y0), (x1, y1) = self.p_start, self.p_end
        return x0 + (np.asarray(y, dtype=np.float64) - y0) * (x1 - x0) / (y1 - y0)


@dataclass(frozen=True)
class LineDetectParams:
    hist_smooth_sigma: float = 2.0
    group_distance: float = 20.0
    ransac_iterations: int = 50
    ransac_inlier_threshold: float = 1.5
    window_halfwidth: float = 16.0
    peak_floor: float = 0.1

    def __post_init__(self):
        for name in ("hist_smooth_sigma", "group_distance", "ransac_iterations",
                     "ransac_inlier_threshold", "window_halfwidth"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def for_lane_width(cls, lane_width_px: float, **overrides) -> LineDetectParams:
        """Defaults scaled to the lane spacing in IPM columns."""
        kw = dict(group_distance=0.6 * lane_width_px, window_halfwidth=0.4 * lane_width_px)
        kw.update(overrides)
        return cls(**kw)


def column_histogram(thresh: ImageBuffer | np.ndarray) -> np.ndarray:
    return as_array(thresh).sum(axis=0)


def parabola_vertex(left, mid, right):
    """Offset of the vertex of the parabola through (-1, left), (0, mid), (1, right).

    Works elementwise on arrays; a flat triple gives 0.
    """
    left, mid, right = (np.asarray(v, dtype=np.float64) for v in (left, mid, right))
    denom = left - 2.0 * mid + right
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(denom == 0, 0.0, 0.5 * (left - right) / denom)
    return float(out) if out.ndim == 0 else out


def find_line_candidates(hist, params: LineDetectParams) -> list[float]:
    """Subpixel columns of grouped local maxima of the smoothed histogram."""
    hist = np.asarray(hist, dtype=np.float64)
    if len(hist) < 3:
        return []
    smooth = ndimage.gaussian_filter1d(hist, params.hist_smooth_sigma, mode="nearest")
    return peaks_from_smoothed(smooth, params.group_distance, params.peak_floor)


def peaks_from_smoothed(smooth: np.ndarray, group_distance: float, floor_ratio: float = 0.1) -> list[float]:
    top = smooth.max(initial=0.0)
    if not top > 0:
        return []
    mid = smooth[1:-1]
    is_max = (mid > smooth[:-2]) & (mid > smooth[2:]) & (mid >= floor_ratio * top)
    cols = np.flatnonzero(is_max) + 1
    positions = [c + parabola_vertex(smooth[c - 1], smooth[c], smooth[c + 1]) for c in cols]
    heights = [smooth[c] for c in cols]
    return group_peaks(positions, heights, group_distance)


def group_peaks(positions, heights, group_distance: float) -> list[float]:
    """Merge peaks closer than ``group_distance`` into height-weighted means.

    Merging repeats until every gap is at least ``group_distance``.
    """
    groups = [(float(p), float(h)) for p, h in sorted(zip(positions, heights))]
    merged = True
    while merged and len(groups) > 1:
        merged = False
        gaps = np.diff([g[0] for g in groups])
        i = int(np.argmin(gaps))
        if gaps[i] < group_distance:
            (p0, h0), (p1, h1) = groups[i], groups[i + 1]
            groups[i : i + 2] = [((p0 * h0 + p1 * h1) / (h0 + h1), h0 + h1)]
            merged = True
    return [g[0] for g in groups]


def window_bounds(center: float, halfwidth: float, width: int) -> tuple[int, int]:
    lo = max(0, int(np.ceil(center - halfwidth)))
    hi = min(width - 1, int(np.floor(center + halfwidth)))
    return lo, hi


def _line_masses(px, py, w, ax, ay, bx, by, threshold):
    # Lines through (ax, ay)-(bx, by), shape (K,); points (M,). Returns (K,) masses.
    dx, dy = bx - ax, by - ay
    norm = np.hypot(dx, dy)
    dist = np.abs(dx[:, None] * (py[None, :] - ay[:, None]) - dy[:, None] * (px[None, :] - ax[:, None]))
    inl = dist <= threshold * norm[:, None]
    return inl @ w, inl


def _weighted_tls(px, py, w):
    """Value-weighted total least squares line: (centroid, unit direction)."""
    sw = w.sum()
    cx, cy = (w @ px) / sw, (w @ py) / sw
    ux, uy = px - cx, py - cy
    cov = np.array([[w @ (ux * ux), w @ (ux * uy)], [w @ (ux * uy), w @ (uy * uy)]])
    evals, evecs = np.linalg.eigh(cov)
    return np.array([cx, cy]), evecs[:, 1]


def _mass_of(px, py, w, point, direction, threshold):
    dist = np.abs(direction[0] * (py - point[1]) - direction[1] * (px - point[0]))
    inl = dist <= threshold
    return float(w[inl].sum()), inl


def ransac_line(thresh: ImageBuffer | np.ndarray, center_column: float, params: LineDetectParams,
                rng: np.random.Generator) -> Line:
    """Best line inside the column window around ``center_column``.

    Minimal samples are pixel pairs drawn without replacement with
    probability proportional to value; consensus is the inlier value mass.
    Windows with at most ``EXHAUSTIVE_MAX_POINTS`` nonzero pixels are
    searched over all pairs.  The winner is refit by weighted total least
    squares on its inliers, kept only if that does not lower the mass, and
    clipped to the window's rows.
    """
    data = as_array(thresh)
    h, width = data.shape
    lo, hi = window_bounds(center_column, params.window_halfwidth, width)
    if hi < lo:
        raise DegenerateWindowError("window does not intersect the image")
    sub = data[:, lo : hi + 1]
    ys, xs = np.nonzero(sub > 0)
    if len(xs) < 2:
        raise DegenerateWindowError(f"window holds {len(xs)} nonzero pixels, need 2")
    w = sub[ys, xs]
    # Window-local coordinates, shifted back by the integer origin at the end.
    px, py = xs.astype(np.float64), ys.astype(np.float64)
    m = len(px)
    thr = params.ransac_inlier_threshold
    if m <= EXHAUSTIVE_MAX_POINTS:
        ia, ib = np.triu_indices(m, k=1)
    else:
        ia, ib = _draw_pairs(w, params.ransac_iterations, rng)
    masses, _ = _line_masses(px, py, w, px[ia], py[ia], px[ib], py[ib], thr)
    k = int(np.argmax(masses))
    a = np.array([px[ia[k]], py[ia[k]]])
    d = np.array([px[ib[k]] - a[0], py[ib[k]] - a[1]])
    d /= np.hypot(*d)
    best_mass, inl = _mass_of(px, py, w, a, d, thr)
    if np.count_nonzero(inl) >= 2:
        c, dr = _weighted_tls(px[inl], py[inl], w[inl])
        refit_mass, _ = _mass_of(px, py, w, c, dr, thr)
        if refit_mass >= best_mass:
            a, d, best_mass = c, dr, refit_mass
    p0, p1 = _clip_to_rows(a, d, h, hi - lo)
    p0 = (p0[0] + lo, p0[1])
    p1 = (p1[0] + lo, p1[1])
    return Line(p0, p1, IPM_FRAME, best_mass)


def _draw_pairs(w, iterations, rng):
    """``iterations`` index pairs, value-weighted, distinct within a pair.

    Pairs with a repeated pixel are redrawn, which is the same as drawing the
    second pixel without replacement.
    """
    cdf = np.cumsum(w)
    last = len(w) - 1

    def draw(n):
        idx = np.searchsorted(cdf, rng.random((n, 2)) * cdf[-1], side="right")
        return np.minimum(idx, last)

    pairs = draw(iterations)
    for _ in range(_MAX_REDRAWS):
        bad = np.flatnonzero(pairs[:, 0] == pairs[:, 1])
        if not len(bad):
            return pairs[:, 0], pairs[:, 1]
        pairs[bad] = draw(len(bad))
    raise DegenerateWindowError("could not draw two distinct pixels")


def _clip_to_rows(point, direction, height, win_width):
    """Endpoints on the first and last image rows; horizontal lines span the window columns."""
    if abs(direction[1]) > 1e-9:
        def at(y):
            return (point[0] + (y - point[1]) * direction[0] / direction[1], float(y))
        top, bottom = at(0.0), at(float(height - 1))
        return top, bottom
    return (0.0, float(point[1])), (float(win_width), float(point[1]))
