"""Spline localization, extension, geometric checks and back-projection."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import ndimage

from .bezier import (
    Spline,
    derivative,
    evaluate,
    fit_least_squares,
    fit_pinned_ends,
    line_spline,
    polygon_theta,
    raster_length,
    raster_lengths,
    rasterize,
)
from .camera import CameraParams, IpmGrid, ground_to_image, image_to_ground
from .errors import RankDeficientError, ZeroLengthError
from .image import IMAGE_FRAME, IPM_FRAME, ImageBuffer, as_array
from .line_detect import Line, parabola_vertex


@dataclass(frozen=True)
class PostParams:
    localize_samples: int = 10
    normal_half_length: float = 5.0
    extend_step: float = 4.0
    max_orientation_delta_deg: float = 20.0
    peak_floor_ratio: float = 0.25
    min_spline_theta: float = 0.8
    min_spline_length_ratio: float = 0.2
    max_tilt_deg: float = 30.0
    profile_sigma: float = 1.0

    def scaled(self, factor: float) -> PostParams:
        """Same thresholds with pixel lengths multiplied by ``factor``."""
        return replace(
            self,
            normal_half_length=self.normal_half_length * factor,
            extend_step=self.extend_step * factor,
            profile_sigma=self.profile_sigma * factor,
        )


def _unit(v):
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return np.divide(v, n, out=np.zeros_like(v), where=n > 0)


@lru_cache(maxsize=32)
def _smoothing_matrix(k: int, sigma: float) -> np.ndarray:
    """Right-multiplied matrix smoothing rows of length ``2k + 1`` with an edge-replicating Gaussian."""
    n = 2 * k + 1
    eye = np.eye(n)
    if sigma <= 0:
        return eye
    # Column j of the filtered identity is the response to e_j; rows need its transpose.
    return np.ascontiguousarray(ndimage.gaussian_filter1d(eye, sigma, axis=0, mode="nearest").T)


def _profiles(data, centers, normals, half_length, sigma):
    """Smoothed intensity profiles along ``normals`` through ``centers``.

    Returns ``(offsets, profiles)`` with profiles ``(N, K)``, ``K`` odd;
    profiles touching samples outside the image are NaN.
    """
    k = int(math.ceil(half_length))
    offsets = np.arange(-k, k + 1, dtype=np.float64)
    xs = centers[:, None, 0] + offsets[None, :] * normals[:, None, 0]
    ys = centers[:, None, 1] + offsets[None, :] * normals[:, None, 1]
    h, w = data.shape
    inside = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    vals = ndimage.map_coordinates(data, [ys.ravel(), xs.ravel()], order=1, mode="nearest").reshape(xs.shape)
    vals = vals @ _smoothing_matrix(k, float(sigma))
    vals[~inside] = np.nan
    return offsets, vals


def _nearest_peaks(offsets, profs):
    """Vectorized peak search over profile rows ``(N, K)``.

    For each row returns the subpixel offset of the local maximum nearest the
    center and its height above the row median; rows without a peak (or with
    samples outside the image) get NaN.
    """
    n = len(profs)
    off = np.full(n, np.nan)
    strength = np.full(n, np.nan)
    if profs.shape[1] < 3:
        return off, strength
    mid = profs[:, 1:-1]
    # Bumps at rounding level (e.g. on flat profiles) are not peaks.  Rows
    # with NaN samples get a NaN margin, so every comparison fails for them.
    eps = 1e-9 * np.abs(profs).max(axis=1)[:, None]
    is_peak = (mid > profs[:, :-2] + eps) & (mid > profs[:, 2:] + eps)
    rows = np.flatnonzero(is_peak.any(axis=1))
    if not len(rows):
        return off, strength
    dist = np.where(is_peak[rows], np.abs(offsets[1:-1]), np.inf)
    c = np.argmin(dist, axis=1) + 1
    p = profs[rows]
    r = np.arange(len(rows))
    left, center, right = p[r, c - 1], p[r, c], p[r, c + 1]
    off[rows] = offsets[c] + parabola_vertex(left, center, right)
    # Profiles have odd length, so the median is the middle order statistic.
    m = p.shape[1] // 2
    strength[rows] = center - np.partition(p, m, axis=1)[:, m]
    return off, strength


def _nearest_peak(offsets, prof):
    """(subpixel offset, strength) of the local maximum nearest the center, or None.

    Strength is the peak height above the profile median.
    """
    off, strength = _nearest_peaks(offsets, np.asarray(prof)[None])
    if np.isnan(off[0]):
        return None
    return off[0], strength[0]


def _normals(s: Spline, t) -> tuple[np.ndarray, np.ndarray]:
    pts = evaluate(s, t)
    return pts, _unit(derivative(s, t)) @ np.array([[0.0, 1.0], [-1.0, 0.0]])


def localize_spline(s: Spline, gray: ImageBuffer | np.ndarray, params: PostParams) -> Spline:
    """Snap sample points to the nearest ridge across the spline and refit."""
    data = as_array(gray)
    n = params.localize_samples
    pts, normals = _normals(s, np.linspace(0.0, 1.0, n))
    offsets, profs = _profiles(data, pts, normals, params.normal_half_length, params.profile_sigma)
    spacing = np.sum(np.hypot(*np.diff(pts, axis=0).T)) / max(n - 1, 1)
    max_shift = math.tan(math.radians(params.max_orientation_delta_deg)) * spacing
    off, _ = _nearest_peaks(offsets, profs)
    ok = ~np.isnan(off)
    ok[ok] = np.abs(off[ok]) <= max_shift
    if np.count_nonzero(ok) < 4:
        return s
    moved = np.where(ok[:, None], pts + np.where(ok, off, 0.0)[:, None] * normals, pts)
    try:
        return fit_least_squares(moved, s.frame)
    except (RankDeficientError, ZeroLengthError, ValueError):
        return s


def _ridge_strengths(splines, data, params: PostParams) -> np.ndarray:
    if not splines:
        return np.zeros(0)
    t = np.linspace(0.0, 1.0, params.localize_samples)
    pts, normals = zip(*(_normals(s, t) for s in splines))
    offsets, profs = _profiles(data, np.concatenate(pts), np.concatenate(normals), params.normal_half_length,
                               params.profile_sigma)
    profs = profs.reshape(len(splines), len(t), -1)
    good = ~np.isnan(profs).any(axis=2)
    excess = profs[..., len(offsets) // 2] - np.median(profs, axis=2)
    total = np.where(good, excess, 0.0).sum(axis=1)
    count = good.sum(axis=1)
    return np.divide(total, count, out=np.zeros(len(splines)), where=count > 0)


def ridge_strength(s: Spline, gray: ImageBuffer | np.ndarray, params: PostParams) -> float:
    """Mean peak height above the local profile median at the spline's sample points."""
    return float(_ridge_strengths([s], as_array(gray), params)[0])


def _walk_many(data, starts, directions, dominants, floors, params, min_row):
    """Step all walkers in lockstep; returns the accepted points of each walker.

    A walker stops at the image border (or above ``min_row``), when no ridge
    peak above its floor is found, or when its heading turns more than the
    orientation limit away from its dominant direction.
    """
    h, w = data.shape
    m = len(starts)
    cos_limit = math.cos(math.radians(params.max_orientation_delta_deg))
    out: list[list[np.ndarray]] = [[] for _ in range(m)]
    last = np.asarray(starts, dtype=np.float64).reshape(m, 2).copy()
    d = _unit(np.asarray(directions, dtype=np.float64).reshape(m, 2))
    dominants = np.asarray(dominants, dtype=np.float64).reshape(m, 2)
    floors = np.asarray(floors, dtype=np.float64)
    active = np.ones(m, dtype=bool)
    top = max(0.0, min_row)
    max_steps = int((h + w) / params.extend_step) + 1
    for _ in range(max_steps):
        pos = last + params.extend_step * d
        active &= (pos[:, 0] >= 0) & (pos[:, 0] <= w - 1) & (pos[:, 1] >= top) & (pos[:, 1] <= h - 1)
        idx = np.flatnonzero(active)
        if not len(idx):
            break
        normal = np.column_stack([-d[idx, 1], d[idx, 0]])
        offsets, prof = _profiles(data, pos[idx], normal, params.normal_half_length, params.profile_sigma)
        off, strength = _nearest_peaks(offsets, prof)
        ok = ~np.isnan(off)
        ok[ok] = strength[ok] >= floors[idx][ok]
        new = pos[idx] + np.where(ok, off, 0.0)[:, None] * normal
        step = _unit(new - last[idx])
        ok &= np.sum(step * dominants[idx], axis=1) >= cos_limit
        active[idx[~ok]] = False
        good = idx[ok]
        last[good] = new[ok]
        d[good] = step[ok]
        for j, p in zip(good, new[ok]):
            out[j].append(p)
    return out


def extend_splines(splines, gray: ImageBuffer | np.ndarray, params: PostParams, min_row: float = 0.0) -> list[Spline]:
    """Batched :func:`extend_spline`; each result equals the single-spline call."""
    splines = list(splines)
    if not splines:
        return []
    data = as_array(gray)
    floors = params.peak_floor_ratio * _ridge_strengths(splines, data, params)
    live = [i for i, f in enumerate(floors) if f > 0]
    starts, dirs, doms, fl = [], [], [], []
    for i in live:
        s = splines[i]
        dominant = _unit(s.p3 - s.p0)
        starts += [s.p3, s.p0]
        dirs += [derivative(s, 1.0)[0], -derivative(s, 0.0)[0]]
        doms += [dominant, -dominant]
        fl += [floors[i], floors[i]]
    walks = _walk_many(data, np.array(starts).reshape(-1, 2), np.array(dirs).reshape(-1, 2),
                       np.array(doms).reshape(-1, 2), np.array(fl), params, min_row) if live else []
    out = list(splines)
    grown: dict[int, Spline] = {}
    for n, i in enumerate(live):
        fwd, back = walks[2 * n], walks[2 * n + 1]
        if not fwd and not back:
            continue
        s = splines[i]
        body = evaluate(s, np.linspace(0.0, 1.0, params.localize_samples))
        pts = np.concatenate([np.array(back[::-1]).reshape(-1, 2), body, np.array(fwd).reshape(-1, 2)])
        try:
            grown[i] = fit_least_squares(pts, s.frame)
        except (RankDeficientError, ZeroLengthError, ValueError):
            continue
    if grown:
        ids = list(grown)
        lengths = raster_lengths(np.stack([grown[i].points for i in ids] + [splines[i].points for i in ids]))
        for j, i in enumerate(ids):
            if lengths[j] >= lengths[len(ids) + j]:
                out[i] = grown[i]
    return out


def extend_spline(s: Spline, gray: ImageBuffer | np.ndarray, params: PostParams, min_row: float = 0.0) -> Spline:
    """Grow the spline past both ends while a ridge continues, then refit.

    The result is never shorter than the input.  ``min_row`` stops the walk
    above a given row (e.g. near the horizon in the input image).
    """
    return extend_splines([s], gray, params, min_row)[0]


@dataclass(frozen=True)
class GeometryVerdict:
    spline: Spline | None
    status: str  # "pass", "replaced" or "rejected"

    @property
    def rejected(self) -> bool:
        return self.spline is None


def tilt_deg(s: Spline) -> float:
    """Angle between the endpoint chord and the image vertical."""
    dx, dy = s.p3 - s.p0
    return math.degrees(math.atan2(abs(dx), abs(dy)))


def geometry_check(s: Spline, seed_line: Line, params: PostParams, image_height: float,
                   length: float | None = None) -> GeometryVerdict:
    """Replace curvy or short splines by the seed line; reject non-vertical ones.

    ``length`` is the spline's raster length if already known.
    """
    status = "pass"
    theta = float(polygon_theta(s.points))
    if length is None:
        length = raster_length(rasterize(s))
    if theta < params.min_spline_theta or length < params.min_spline_length_ratio * image_height:
        s = line_spline(seed_line.p_start, seed_line.p_end, s.frame)
        status = "replaced"
    if tilt_deg(s) > params.max_tilt_deg:
        return GeometryVerdict(None, "rejected")
    return GeometryVerdict(s, status)


def geometry_check_batch(splines, seed_lines, params: PostParams, image_height: float) -> list[GeometryVerdict]:
    """:func:`geometry_check` for each ``(spline, seed_line)`` pair, rasterizing once."""
    splines = list(splines)
    if not splines:
        return []
    lengths = raster_lengths(np.stack([s.points for s in splines]))
    return [geometry_check(s, ln, params, image_height, float(n)) for s, ln, n in zip(splines, seed_lines, lengths)]


def ipm_points_to_image(pts, cam: CameraParams, grid: IpmGrid) -> np.ndarray:
    return ground_to_image(grid.ipm_to_world(pts), cam)


def image_points_to_ipm(pts, cam: CameraParams, grid: IpmGrid) -> np.ndarray:
    return grid.world_to_ipm(image_to_ground(pts, cam))


def back_project_spline(s: Spline, cam: CameraParams, grid: IpmGrid, samples: int = 24) -> Spline:
    """Map an IPM spline into the input image by refitting projected dense samples.

    The endpoints map exactly; pinning them keeps the far end, where
    perspective compresses the curve most, from drifting.
    """
    pts = evaluate(s, np.linspace(0.0, 1.0, samples))
    img = ipm_points_to_image(pts, cam, grid)
    return fit_pinned_ends(img, IMAGE_FRAME)


def forward_project_spline(s: Spline, cam: CameraParams, grid: IpmGrid, samples: int = 24) -> Spline:
    """Inverse of :func:`back_project_spline`."""
    pts = evaluate(s, np.linspace(0.0, 1.0, samples))
    return fit_pinned_ends(image_points_to_ipm(pts, cam, grid), IPM_FRAME)
