"""Vertical-ridge filtering and quantile thresholding of IPM images."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ImageTooSmallError
from .image import ImageBuffer


@dataclass(frozen=True)
class FilterParams:
    sigma_x: float = 1.0
    sigma_y: float = 4.0
    quantile_q: float = 0.975

    def __post_init__(self):
        if not (self.sigma_x > 0 and self.sigma_y > 0):
            raise ValueError("filter widths must be positive")
        if not 0 < self.quantile_q < 1:
            raise ValueError("quantile must lie in (0, 1)")

    @classmethod
    def from_world(cls, line_width, line_height, dx, dy, quantile_q=0.975) -> FilterParams:
        """Widths in world units converted through the IPM resolution.

        sigma_x is half the painted line's width in pixels, sigma_y the
        segment height in pixels.
        """
        return cls(0.5 * line_width / dx, line_height / dy, quantile_q)


def ridge_profile(x, sigma):
    """Second-derivative-of-Gaussian shape, positive at the center."""
    x = np.asarray(x, dtype=np.float64)
    s2 = sigma * sigma
    return np.exp(-(x * x) / (2 * s2)) * (1 - x * x / s2) / s2


def smoothing_profile(y, sigma):
    y = np.asarray(y, dtype=np.float64)
    return np.exp(-(y * y) / (2 * sigma * sigma))


def _support(sigma: float) -> np.ndarray:
    r = max(1, math.ceil(3 * sigma))
    return np.arange(-r, r + 1, dtype=np.float64)


def build_kernels(params: FilterParams) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal (zero-sum) and vertical (unit-sum) 1-D kernels, both odd length."""
    ku = ridge_profile(_support(params.sigma_x), params.sigma_x)
    ku = ku - ku.mean()
    kv = smoothing_profile(_support(params.sigma_y), params.sigma_y)
    kv = kv / kv.sum()
    return ku, kv


def filter_ipm(ipm: ImageBuffer, params: FilterParams) -> ImageBuffer:
    """Smooth vertically, then apply the horizontal ridge kernel; borders replicate."""
    ku, kv = build_kernels(params)
    data = ipm.data
    if data.shape[0] <= len(kv) // 2 or data.shape[1] <= len(ku) // 2:
        raise ImageTooSmallError(
            f"{data.shape[1]}x{data.shape[0]} image is smaller than the "
            f"{len(ku)}x{len(kv)} kernel"
        )
    tmp = ndimage.correlate1d(data, kv, axis=0, mode="nearest")
    out = ndimage.correlate1d(tmp, ku, axis=1, mode="nearest")
    return ipm.with_data(out)


def dense_filter(ipm: ImageBuffer | np.ndarray, params: FilterParams) -> np.ndarray:
    """Reference non-separable 2-D filtering with the outer-product kernel."""
    data = ipm.data if isinstance(ipm, ImageBuffer) else np.asarray(ipm, dtype=np.float64)
    ku, kv = build_kernels(params)
    return ndimage.correlate(data, np.outer(kv, ku), mode="nearest")


def quantile_threshold(filtered: ImageBuffer, q: float, clamp_negative: bool = True) -> ImageBuffer:
    """Zero every value below the q-quantile, keep the rest unchanged.

    Negative responses are clamped to 0 first, and cells outside the
    validity mask are excluded from the quantile and zeroed.  Ties with the
    threshold survive.  The quantile is the order statistic at 0-based rank
    ``floor(q * n)``, so about ``(1 - q) * n`` values are kept.
    """
    if not 0 < q < 1:
        raise ValueError("quantile must lie in (0, 1)")
    data = filtered.data
    if clamp_negative:
        data = np.maximum(data, 0.0)
    valid = filtered.valid
    values = data[valid] if valid is not None else data.ravel()
    out = np.zeros_like(data)
    if values.size:
        k = min(int(math.floor(q * values.size)), values.size - 1)
        thr = np.partition(values, k)[k]
        keep = data >= thr
        if valid is not None:
            keep &= valid
        out[keep] = data[keep]
    return filtered.with_data(out)
