"""Cubic Bezier splines: evaluation, fitting, rasterization and scoring.

Batch variants (``*_batch``) operate on stacks of control polygons of shape
``(B, 4, 2)`` and are what the RANSAC loop uses; the single-spline functions
are thin wrappers over them so both paths give bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, RankDeficientError, ZeroLengthError
from .image import IMAGE_FRAME, IPM_FRAME, ImageBuffer, as_array

# Power-basis to Bernstein-basis matrix: Q(t) = [t^3 t^2 t 1] @ BEZIER_M @ P.
BEZIER_M = np.array(
    [
        [-1.0, 3.0, -3.0, 1.0],
        [3.0, -6.0, 3.0, 0.0],
        [-3.0, 3.0, 0.0, 0.0],
        [1.0, 0.0, 0.0, 0.0],
    ]
)

MAX_CONDITION = 1e12
# Upper bound on the parameter-space speed is 3 * longest control segment;
# sampling at this arc spacing keeps consecutive rounded pixels 8-adjacent.
_RASTER_SPACING = 0.4
# Dropped staircase corners must lie this close to a remaining neighbour.
_CORNER_REACH = 0.75


@dataclass(frozen=True, eq=False)
class Spline:
    """Cubic Bezier with control points ``p0..p3`` stored as a read-only (4, 2) array."""

    points: np.ndarray
    frame: str = IPM_FRAME

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(4, 2)
        if not np.all(np.isfinite(pts)):
            raise ValueError("spline control points must be finite")
        if np.array_equal(pts[0], pts[3]):
            raise ValueError("spline endpoints coincide")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def p0(self):
        return self.points[0]

    @property
    def p1(self):
        return self.points[1]

    @property
    def p2(self):
        return self.points[2]

    @property
    def p3(self):
        return self.points[3]

    def __eq__(self, other):
        if not isinstance(other, Spline):
            return NotImplemented
        return self.frame == other.frame and np.array_equal(self.points, other.points)

    def __hash__(self):
        return hash((self.frame, self.points.tobytes()))

    def with_points(self, points) -> Spline:
        return Spline(points, self.frame)

    def to_text(self) -> str:
        coords = " ".join(f"{v:.6f}" for v in self.points.ravel())
        return f"{self.frame} {coords}"

    @classmethod
    def from_text(cls, line: str) -> Spline:
        parts = line.split()
        if len(parts) < 9:
            raise ValueError(f"spline record needs a frame tag and 8 numbers: {line!r}")
        return cls(np.array([float(v) for v in parts[1:9]]), parts[0])


def line_spline(p_start, p_end, frame: str = IPM_FRAME) -> Spline:
    """Straight segment as a degree-elevated cubic (controls at 0, 1/3, 2/3, 1)."""
    a = np.asarray(p_start, dtype=np.float64)
    b = np.asarray(p_end, dtype=np.float64)
    d = b - a
    return Spline(np.array([a, a + d / 3.0, a + 2.0 * d / 3.0, b]), frame)


def bernstein(t) -> np.ndarray:
    """Cubic Bernstein weights, shape ``t.shape + (4,)``."""
    t = np.asarray(t, dtype=np.float64)
    mt = 1.0 - t
    return np.stack([mt * mt * mt, 3.0 * mt * mt * t, 3.0 * mt * t * t, t * t * t], axis=-1)


def _eval_ctrl(ctrl: np.ndarray, t: np.ndarray) -> np.ndarray:
    # ctrl (..., 4, 2), t (..., N) -> (..., N, 2), elementwise so batching is exact.
    w = bernstein(t)[..., None]
    c = ctrl[..., None, :, :]
    return w[..., 0, :] * c[..., 0, :] + w[..., 1, :] * c[..., 1, :] + w[..., 2, :] * c[..., 2, :] + w[..., 3, :] * c[..., 3, :]


def evaluate(s: Spline, t):
    """Point(s) on the spline at parameter(s) ``t`` in [0, 1]."""
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0) or np.any(t_arr > 1) or np.any(np.isnan(t_arr)):
        raise DomainError("spline parameter must lie in [0, 1]")
    out = _eval_ctrl(s.points, np.atleast_1d(t_arr))
    # Endpoints reproduce the control points exactly.
    out = np.where((np.atleast_1d(t_arr) == 0)[:, None], s.points[0], out)
    out = np.where((np.atleast_1d(t_arr) == 1)[:, None], s.points[3], out)
    return out[0] if t_arr.ndim == 0 else out


def derivative(s: Spline, t) -> np.ndarray:
    """Tangent vector dQ/dt."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    mt = 1.0 - t
    d = np.diff(s.points, axis=0) * 3.0
    w = np.stack([mt * mt, 2.0 * mt * t, t * t], axis=-1)
    return w @ d


def chord_params(points) -> np.ndarray:
    """Cumulative chord-length parameters: t[0] = 0, t[-1] = 1."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 2:
        raise ZeroLengthError("need at least two points")
    steps = np.hypot(*np.diff(pts, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(steps)])
    total = cum[-1]
    if not total > 0:
        raise ZeroLengthError("all points coincide")
    t = cum / total
    t[-1] = 1.0
    return t


def _chord_params_batch(pts: np.ndarray) -> np.ndarray:
    steps = np.sqrt(np.sum(np.diff(pts, axis=1) ** 2, axis=-1))
    cum = np.concatenate([np.zeros((len(pts), 1)), np.cumsum(steps, axis=1)], axis=1)
    total = cum[:, -1:]
    with np.errstate(invalid="ignore", divide="ignore"):
        t = cum / total
    t[:, -1] = 1.0
    return t


def fit_batch(points: np.ndarray, t: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares control polygons for a stack of point sets.

    ``points`` has shape ``(B, n, 2)``.  Returns ``(ctrl, ok)`` where ``ctrl``
    is ``(B, 4, 2)`` and ``ok`` flags systems with at least 4 distinct
    parameters and condition number <= ``MAX_CONDITION``; rows with
    ``ok == False`` hold NaN.
    """
    pts = np.asarray(points, dtype=np.float64)
    if t is None:
        t = _chord_params_batch(pts)
    ok = np.all(np.isfinite(t), axis=1)
    ts = np.sort(np.where(np.isfinite(t), t, 0.0), axis=1)
    ok &= (1 + np.count_nonzero(np.diff(ts, axis=1) > 0, axis=1)) >= 4
    basis = bernstein(np.where(ok[:, None], t, 0.0))
    u, sv, vt = np.linalg.svd(basis, full_matrices=False)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = sv[:, 0] / sv[:, -1]
        ok &= np.isfinite(cond) & (cond <= MAX_CONDITION)
        inv = np.where(ok[:, None], 1.0 / sv, 0.0)
    ctrl = np.einsum("bji,bj,bkj,bkd->bid", vt, inv, u, pts)
    ctrl[~ok] = np.nan
    return ctrl, ok


def fit_least_squares(points, frame: str = IPM_FRAME, t=None) -> Spline:
    """Control points minimizing the squared residual at chord-length parameters."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must have shape (n, 2)")
    if len(pts) < 4:
        raise RankDeficientError(f"need at least 4 points, got {len(pts)}")
    if t is None:
        t = chord_params(pts)
    ctrl, ok = fit_batch(pts[None], np.asarray(t, dtype=np.float64)[None])
    if not ok[0]:
        raise RankDeficientError("fewer than 4 distinct parameters or ill-conditioned system")
    return Spline(ctrl[0], frame)


def fit_pinned_ends(points, frame: str = IPM_FRAME, t=None) -> Spline:
    """Least-squares fit with ``p0`` and ``p3`` fixed to the first and last points.

    Only the two inner control points are free; the interior parameters must
    pin them down (condition number at most ``MAX_CONDITION``).
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must have shape (n, 2)")
    if len(pts) < 4:
        raise RankDeficientError(f"need at least 4 points, got {len(pts)}")
    t = chord_params(pts) if t is None else np.asarray(t, dtype=np.float64)
    basis = bernstein(t)
    rhs = pts - np.outer(basis[:, 0], pts[0]) - np.outer(basis[:, 3], pts[-1])
    inner = basis[:, 1:3]
    sv = np.linalg.svd(inner, compute_uv=False)
    if not sv[-1] > 0 or sv[0] / sv[-1] > MAX_CONDITION:
        raise RankDeficientError("ill-conditioned system for the inner control points")
    mid = np.linalg.lstsq(inner, rhs, rcond=None)[0]
    return Spline(np.vstack([pts[0], mid, pts[-1]]), frame)


# -- rasterization -----------------------------------------------------------


def _sample_counts(ctrl: np.ndarray) -> np.ndarray:
    seg = np.sqrt(np.sum(np.diff(ctrl, axis=-2) ** 2, axis=-1)).max(axis=-1)
    return np.ceil(3.0 * seg / _RASTER_SPACING).astype(np.int64) + 2


@dataclass(frozen=True)
class _Raster:
    """Pixel chains of several splines, stored back to back.

    Row ``r`` occupies ``starts[r]:starts[r+1]`` of ``px``/``py``; ``steps``
    holds the distance from the previous pixel of the same chain (0 at row
    starts).
    """

    starts: np.ndarray
    px: np.ndarray
    py: np.ndarray
    steps: np.ndarray

    def row_sums(self, values: np.ndarray) -> np.ndarray:
        # Each segment is reduced on its own, so results do not depend on the batch.
        return np.add.reduceat(values, self.starts)


def _raster_batch(ctrl: np.ndarray) -> _Raster:
    counts = _sample_counts(ctrl)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    row = np.repeat(np.arange(len(ctrl)), counts)
    j = np.arange(int(counts.sum())) - starts[row]
    t = j / (counts - 1)[row]
    # Bernstein form per coordinate is exact at t = 0 and t = 1.
    mt = 1.0 - t
    mt2 = mt * mt
    t2 = t * t
    b0, b1, b2, b3 = mt2 * mt, 3.0 * mt2 * t, 3.0 * mt * t2, t2 * t
    fx, fy = (
        b0 * c[:, 0] + b1 * c[:, 1] + b2 * c[:, 2] + b3 * c[:, 3]
        for c in (np.repeat(ctrl[:, :, d], counts, axis=0) for d in (0, 1))
    )
    px = np.floor(fx + 0.5).astype(np.int64)
    py = np.floor(fy + 0.5).astype(np.int64)
    locked = np.zeros(len(px), dtype=bool)
    locked[starts] = True
    dx = np.empty_like(px)
    dy = np.empty_like(py)
    dx[1:] = px[1:] - px[:-1]
    dy[1:] = py[1:] - py[:-1]
    dx[starts] = 0
    dy[starts] = 0
    keep = (dx != 0) | (dy != 0)
    keep[starts] = True
    # A chain that is monotone in both x and y cannot return to a pixel it
    # has left, so only the other rows need a global duplicate check.
    mono = ((np.minimum.reduceat(dx, starts) >= 0) | (np.maximum.reduceat(dx, starts) <= 0)) & (
        (np.minimum.reduceat(dy, starts) >= 0) | (np.maximum.reduceat(dy, starts) <= 0)
    )
    if not mono.all():
        sel = np.flatnonzero(~mono[row])
        r = row[sel]
        x = px[sel] - px[sel].min()
        y = py[sel] - py[sel].min()
        span = int(max(x.max(), y.max())) + 1
        _, first, inv = np.unique((r * span + x) * span + y, return_index=True, return_inverse=True)
        k = np.zeros(len(sel), dtype=bool)
        k[first] = True
        keep[sel] = k
        # Pixels of cells the curve comes back to are never pruned.
        owner = sel[np.maximum.accumulate(np.where(k, np.arange(len(sel)), 0))]
        back = (px[sel] != px[owner]) | (py[sel] != py[owner])
        locked[sel[first[np.unique(inv[back])]]] = True
    keep = _prune_corners(fx, fy, px, py, keep, locked)
    kept = np.flatnonzero(keep)
    kx, ky = px[kept], py[kept]
    kstarts = np.cumsum(keep)[starts] - 1
    steps = np.zeros(len(kept))
    steps[1:] = np.sqrt(((kx[1:] - kx[:-1]) ** 2 + (ky[1:] - ky[:-1]) ** 2).astype(np.float64))
    steps[kstarts] = 0.0
    return _Raster(kstarts, kx, ky, steps)


def _prune_corners(fx, fy, px, py, keep, locked) -> np.ndarray:
    """Drop staircase corners so kept chains step diagonally where they can.

    A kept pixel whose kept neighbours touch diagonally is a corner.  It is
    dropped when every sample that rounded to it lies within
    ``_CORNER_REACH`` of one of those neighbours, so the chain still covers
    the curve.  ``locked`` marks pixels that must stay: row starts and cells
    revisited by a self-overlapping curve.  Within a run of droppable pixels
    every other one is dropped, starting with the first, which keeps the
    chain connected.
    """
    k = np.flatnonzero(keep)
    if len(k) < 3:
        return keep
    x, y = px[k], py[k]
    cand = np.zeros(len(k), dtype=bool)
    cand[1:-1] = (np.abs(x[2:] - x[:-2]) == 1) & (np.abs(y[2:] - y[:-2]) == 1)
    # A row's first and last pixels are locked (the next row's start is).
    cand[:-1] &= ~locked[k[1:]]
    cand &= ~locked[k]
    if not cand.any():
        return keep
    # Samples up to the next kept pixel belong to the current one.
    owner = np.cumsum(keep) - 1
    sub = np.flatnonzero(cand[owner])
    o = owner[sub]
    sx, sy = fx[sub], fy[sub]
    reach = np.minimum(np.hypot(sx - x[o - 1], sy - y[o - 1]), np.hypot(sx - x[o + 1], sy - y[o + 1]))
    first = np.flatnonzero(np.concatenate([[True], o[1:] != o[:-1]]))
    far = o[first][np.maximum.reduceat(reach, first) > _CORNER_REACH]
    cand[far] = False
    idx = np.arange(len(k))
    run_starts = cand & ~np.concatenate([[False], cand[:-1]])
    run_start = np.maximum.accumulate(np.where(run_starts, idx, 0))
    drop = cand & ((idx - run_start) % 2 == 0)
    out = keep.copy()
    out[k[drop]] = False
    return out


def rasterize(s: Spline) -> np.ndarray:
    """Duplicate-free pixel chain ``(K, 2)`` of integer ``(x, y)`` from round(p0) to round(p3).

    Consecutive pixels are 8-adjacent except where the curve revisits a pixel
    it already covered (self-intersections), which is dropped.  Pixels may
    lie outside any particular image; callers mask them.
    """
    r = _raster_batch(s.points[None])
    return np.column_stack([r.px, r.py])


def raster_lengths(ctrl: np.ndarray) -> np.ndarray:
    """Batched ``raster_length(rasterize(s))`` for control polygons ``(B, 4, 2)``."""
    ctrl = np.asarray(ctrl, dtype=np.float64)
    if not len(ctrl):
        return np.zeros(0)
    r = _raster_batch(ctrl)
    return 1.0 + r.row_sums(r.steps)


def raster_length(pixels: np.ndarray) -> float:
    """Pixel extent of a chain: 1 plus the summed step lengths."""
    if len(pixels) == 0:
        return 0.0
    steps = np.sqrt(np.sum(np.diff(pixels, axis=0) ** 2, axis=1).astype(np.float64))
    return 1.0 + float(np.cumsum(steps)[-1]) if len(steps) else 1.0


# -- scoring -----------------------------------------------------------------


@dataclass(frozen=True)
class ScoreParams:
    k1: float = 0.2
    k2: float = 0.4
    image_height_v: float = 120.0

    def __post_init__(self):
        if self.k1 < 0 or self.k2 < 0:
            raise ValueError("regularization weights must be non-negative")
        if not self.image_height_v > 0:
            raise ValueError("image height must be positive")


def polygon_theta(ctrl) -> np.ndarray:
    """Mean cosine of the two turning angles of the control polygon(s).

    Zero-length segments count as no turn (cosine 1).
    """
    ctrl = np.asarray(ctrl, dtype=np.float64)
    d = np.diff(ctrl, axis=-2)
    norms = np.sqrt(np.sum(d * d, axis=-1))
    dots = np.sum(d[..., :-1, :] * d[..., 1:, :], axis=-1)
    denom = norms[..., :-1] * norms[..., 1:]
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(denom > 0, dots / denom, 1.0)
    cos = np.clip(cos, -1.0, 1.0)
    return (cos[..., 0] + cos[..., 1]) / 2.0


def combine_score(raw, length, height, theta, k1, k2):
    """``raw * (1 + k1*l' + k2*theta')`` with l' = min(l/v, 1) - 1 and theta' = (theta-1)/2."""
    length_term = np.minimum(np.asarray(length, dtype=np.float64) / height, 1.0) - 1.0
    curve_term = (np.asarray(theta, dtype=np.float64) - 1.0) / 2.0
    return raw * (1.0 + k1 * length_term + k2 * curve_term)


@dataclass(frozen=True)
class ScoreTerms:
    raw: float
    length: float
    theta: float
    score: float


def score_batch(ctrl: np.ndarray, image: ImageBuffer | np.ndarray, params: ScoreParams, max_extent: float | None = None):
    """Scores for a stack of control polygons against one image.

    Splines whose longest control segment exceeds ``max_extent`` (default
    twice the larger image dimension) score ``-inf`` without being
    rasterized.  Returns ``(score, raw, length, theta)`` arrays.
    """
    data = as_array(image)
    h, w = data.shape
    ctrl = np.asarray(ctrl, dtype=np.float64)
    b = len(ctrl)
    score = np.full(b, -np.inf)
    raw = np.zeros(b)
    length = np.zeros(b)
    if not b:
        return score, raw, length, np.zeros(0)
    theta = polygon_theta(ctrl)
    if max_extent is None:
        max_extent = 2.0 * max(h, w)
    seg = np.sqrt(np.sum(np.diff(ctrl, axis=-2) ** 2, axis=-1)).max(axis=-1)
    sel = np.flatnonzero(np.isfinite(seg) & (seg <= max_extent))
    if len(sel):
        raw[sel], length[sel] = _raw_and_length(ctrl[sel], data)
    score[sel] = combine_score(raw[sel], length[sel], params.image_height_v, theta[sel], params.k1, params.k2)
    return score, raw, length, theta


def _raw_and_length(ctrl: np.ndarray, data: np.ndarray):
    h, w = data.shape
    r = _raster_batch(ctrl)
    inside = (r.px >= 0) & (r.px < w) & (r.py >= 0) & (r.py < h)
    vals = np.where(inside, data.ravel()[np.where(inside, r.py * w + r.px, 0)], 0.0)
    return r.row_sums(vals), 1.0 + r.row_sums(r.steps)


def raster_support(ctrl: np.ndarray, image: ImageBuffer | np.ndarray) -> np.ndarray:
    """Share of each chain's in-image pixels that are positive (0 for chains outside the image)."""
    data = as_array(image)
    h, w = data.shape
    ctrl = np.asarray(ctrl, dtype=np.float64)
    if not len(ctrl):
        return np.zeros(0)
    r = _raster_batch(ctrl)
    inside = (r.px >= 0) & (r.px < w) & (r.py >= 0) & (r.py < h)
    hit = inside & (data.ravel()[np.where(inside, r.py * w + r.px, 0)] > 0)
    n_in = r.row_sums(inside.astype(np.int64))
    n_hit = r.row_sums(hit.astype(np.int64))
    return np.divide(n_hit, n_in, out=np.zeros(len(ctrl)), where=n_in > 0)


def score_terms(s: Spline, thresh: ImageBuffer | np.ndarray, params: ScoreParams) -> ScoreTerms:
    score, raw, length, theta = score_batch(s.points[None], thresh, params)
    return ScoreTerms(float(raw[0]), float(length[0]), float(theta[0]), float(score[0]))


def score_spline(s: Spline, thresh: ImageBuffer | np.ndarray, params: ScoreParams) -> float:
    """Raster pixel mass along the spline, scaled by length and straightness terms."""
    return score_terms(s, thresh, params).score


def sample_uniform(s: Spline, n: int) -> np.ndarray:
    return evaluate(s, np.linspace(0.0, 1.0, n))


def spline_length(s: Spline, n: int = 64) -> float:
    """Polyline approximation of arc length."""
    pts = sample_uniform(s, n)
    return float(np.sum(np.hypot(*np.diff(pts, axis=0).T)))


__all__ = [
    "BEZIER_M",
    "IMAGE_FRAME",
    "IPM_FRAME",
    "ScoreParams",
    "ScoreTerms",
    "Spline",
    "bernstein",
    "chord_params",
    "combine_score",
    "derivative",
    "evaluate",
    "fit_batch",
    "fit_least_squares",
    "fit_pinned_ends",
    "line_spline",
    "polygon_theta",
    "raster_support",
    "rasterize",
    "raster_length",
    "sample_uniform",
    "score_batch",
    "score_spline",
    "score_terms",
    "spline_length",
]
