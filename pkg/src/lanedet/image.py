"""Single-channel float raster tagged with its coordinate frame."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

IMAGE_FRAME = "image_frame"
IPM_FRAME = "ipm_frame"
FRAMES = (IMAGE_FRAME, IPM_FRAME)


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """Row-major float64 raster.

    ``valid`` is an optional boolean mask of the same shape; pixels where it
    is False carry no information (e.g. IPM cells that fall outside the
    input frame) and are ignored by quantile thresholding.
    """

    data: np.ndarray
    frame: str = IMAGE_FRAME
    valid: np.ndarray | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError(f"expected a 2-D raster, got shape {data.shape}")
        if self.frame not in FRAMES:
            raise ValueError(f"unknown frame tag {self.frame!r}")
        if not np.all(np.isfinite(data)):
            raise ValueError("raster contains non-finite values")
        object.__setattr__(self, "data", data)
        if self.valid is not None:
            valid = np.asarray(self.valid, dtype=bool)
            if valid.shape != data.shape:
                raise ValueError("validity mask shape differs from data")
            object.__setattr__(self, "valid", valid)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def with_data(self, data: np.ndarray) -> ImageBuffer:
        """Same frame and mask, new pixel values."""
        return ImageBuffer(data, self.frame, self.valid)


def as_array(img: ImageBuffer | np.ndarray) -> np.ndarray:
    if isinstance(img, ImageBuffer):
        return img.data
    return np.asarray(img, dtype=np.float64)
