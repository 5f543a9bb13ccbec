"""Flat-road camera model and inverse perspective mapping.

World frame: origin at the camera optical center, X to the right, Y forward
along the road, Z up; the road is the plane Z = -h.  Image frame: u to the
right, v down, origin at the top-left pixel center.  Pitch is positive when
the optical axis points below the horizon; yaw rotates the optical axis
toward +X.  There is no roll.

Both transforms are derived from ray casting.  The closed-form 4x4 matrices
(:func:`ground_from_image_matrix`, :func:`image_from_ground_matrix`) are
provided for batch use and cross-checked against the ray-casting routines in
the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import BehindCameraError, GeometryError, HorizonError
from .image import IMAGE_FRAME, IPM_FRAME, ImageBuffer

# Rays whose downward component is below this are treated as parallel to the road.
_HORIZON_EPS = 1e-12


@dataclass(frozen=True)
class CameraParams:
    fu: float
    fv: float
    cu: float
    cv: float
    pitch: float  # radians
    yaw: float = 0.0  # radians
    height: float = 1.0

    def __post_init__(self):
        if not (self.fu > 0 and self.fv > 0):
            raise GeometryError("focal lengths must be positive")
        if not self.height > 0:
            raise GeometryError("camera height must be positive")
        if not 0 < self.pitch < math.pi / 2:
            raise GeometryError("pitch must lie in (0, pi/2) so the optical axis meets the road")
        if not all(math.isfinite(v) for v in (self.cu, self.cv, self.yaw)):
            raise GeometryError("non-finite camera parameter")

    @classmethod
    def from_degrees(cls, fu, fv, cu, cv, pitch_deg, yaw_deg=0.0, height=1.0) -> CameraParams:
        return cls(fu, fv, cu, cv, math.radians(pitch_deg), math.radians(yaw_deg), height)

    @property
    def horizon_row(self) -> float:
        """Image row of the horizon line (independent of u since roll is zero)."""
        return self.cv - self.fv * math.tan(self.pitch)

    def axes(self) -> np.ndarray:
        """Camera axes expressed in the world frame, as rows (x_c, y_c, z_c)."""
        c1, s1 = math.cos(self.pitch), math.sin(self.pitch)
        c2, s2 = math.cos(self.yaw), math.sin(self.yaw)
        return np.array(
            [
                [c2, -s2, 0.0],
                [-s1 * s2, -s1 * c2, -c1],
                [c1 * s2, c1 * c2, -s1],
            ]
        )


def image_to_ground(uv, cam: CameraParams) -> np.ndarray:
    """Intersect the back-projected ray of image point(s) with the road.

    Accepts a single ``(u, v)`` or an ``(N, 2)`` array and returns ground
    ``(x, y)`` of the same shape.  Raises :class:`HorizonError` if any ray
    does not descend toward the road.
    """
    uv = np.asarray(uv, dtype=np.float64)
    pts = np.atleast_2d(uv)
    a = (pts[:, 0] - cam.cu) / cam.fu
    b = (pts[:, 1] - cam.cv) / cam.fv
    xc, yc, zc = cam.axes()
    dirs = a[:, None] * xc + b[:, None] * yc + zc
    down = -dirs[:, 2]
    if not np.all(np.isfinite(down)) or np.any(down <= _HORIZON_EPS):
        raise HorizonError("image point at or above the horizon line")
    scale = cam.height / down
    ground = dirs[:, :2] * scale[:, None]
    if not np.all(np.isfinite(ground)):
        raise HorizonError("ground intersection is not finite")
    return ground.reshape(uv.shape)


def ground_to_image(xy, cam: CameraParams) -> np.ndarray:
    """Project road point(s) ``(x, y)`` (on Z = -h) to subpixel image coordinates."""
    xy = np.asarray(xy, dtype=np.float64)
    pts = np.atleast_2d(xy)
    world = np.column_stack([pts[:, 0], pts[:, 1], np.full(len(pts), -cam.height)])
    cam_pts = world @ cam.axes().T
    depth = cam_pts[:, 2]
    if not np.all(np.isfinite(depth)) or np.any(depth <= 0):
        raise BehindCameraError("ground point is not in front of the camera")
    u = cam.cu + cam.fu * cam_pts[:, 0] / depth
    v = cam.cv + cam.fv * cam_pts[:, 1] / depth
    return np.column_stack([u, v]).reshape(xy.shape)


def ground_from_image_matrix(cam: CameraParams) -> np.ndarray:
    """Homogeneous 4x4 map from ``(u, v, 1, 1)`` to ``(x, y, z, w)``.

    Divide by ``w`` to obtain the ground point; ``z / w`` is always ``-h``.
    """
    fu, fv, cu, cv, h = cam.fu, cam.fv, cam.cu, cam.cv, cam.height
    c1, s1 = math.cos(cam.pitch), math.sin(cam.pitch)
    c2, s2 = math.cos(cam.yaw), math.sin(cam.yaw)
    return h * np.array(
        [
            [-c2 / fu, s1 * s2 / fv, cu * c2 / fu - cv * s1 * s2 / fv - c1 * s2, 0.0],
            [s2 / fu, s1 * c2 / fv, -cu * s2 / fu - cv * s1 * c2 / fv - c1 * c2, 0.0],
            [0.0, c1 / fv, -cv * c1 / fv + s1, 0.0],
            [0.0, -c1 / (h * fv), cv * c1 / (h * fv) - s1 / h, 0.0],
        ]
    )


def image_from_ground_matrix(cam: CameraParams) -> np.ndarray:
    """Homogeneous 4x4 map from ``(x, y, -h, 1)`` to ``(u*w, v*w, w, w)``."""
    fu, fv, cu, cv = cam.fu, cam.fv, cam.cu, cam.cv
    c1, s1 = math.cos(cam.pitch), math.sin(cam.pitch)
    c2, s2 = math.cos(cam.yaw), math.sin(cam.yaw)
    depth_row = [c1 * s2, c1 * c2, -s1, 0.0]
    return np.array(
        [
            [fu * c2 + cu * c1 * s2, cu * c1 * c2 - s2 * fu, -cu * s1, 0.0],
            [s2 * (cv * c1 - fv * s1), c2 * (cv * c1 - fv * s1), -fv * c1 - cv * s1, 0.0],
            depth_row,
            depth_row,
        ]
    )


@dataclass(frozen=True, eq=False)
class IpmGrid:
    """Rectangular window on the road plane rendered as an ``out_height x out_width`` raster.

    Column ``j`` covers lateral position ``x_left + (j + 0.5) * dx``; row 0 is
    the far edge, so lanes ahead of the vehicle run vertically in the IPM.
    ``roi_image`` holds the image-frame quadrilateral the window came from,
    when it was built from one.
    """

    x_left: float
    x_right: float
    y_near: float
    y_far: float
    out_width: int
    out_height: int
    roi_image: tuple | None = None
    _xs: np.ndarray = field(init=False, repr=False)
    _ys: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.x_left < self.x_right:
            raise GeometryError("x_left must be < x_right")
        if not self.y_near < self.y_far:
            raise GeometryError("y_near must be < y_far")
        if self.out_width < 8 or self.out_height < 8:
            raise GeometryError("IPM raster must be at least 8x8")
        xs = self.x_left + (np.arange(self.out_width) + 0.5) * self.dx
        ys = self.y_far - (np.arange(self.out_height) + 0.5) * self.dy
        xs.setflags(write=False)
        ys.setflags(write=False)
        object.__setattr__(self, "_xs", xs)
        object.__setattr__(self, "_ys", ys)

    @property
    def dx(self) -> float:
        """World units per IPM column."""
        return (self.x_right - self.x_left) / self.out_width

    @property
    def dy(self) -> float:
        """World units per IPM row."""
        return (self.y_far - self.y_near) / self.out_height

    @property
    def column_x(self) -> np.ndarray:
        return self._xs

    @property
    def row_y(self) -> np.ndarray:
        return self._ys

    def ipm_to_world(self, pts) -> np.ndarray:
        """IPM pixel coordinates ``(col, row)`` to road ``(x, y)``."""
        pts = np.asarray(pts, dtype=np.float64)
        x = self.x_left + (pts[..., 0] + 0.5) * self.dx
        y = self.y_far - (pts[..., 1] + 0.5) * self.dy
        return np.stack([x, y], axis=-1)

    def world_to_ipm(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=np.float64)
        col = (xy[..., 0] - self.x_left) / self.dx - 0.5
        row = (self.y_far - xy[..., 1]) / self.dy - 0.5
        return np.stack([col, row], axis=-1)

    def world_grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-cell road coordinates as two ``(out_height, out_width)`` arrays."""
        return np.meshgrid(self._xs, self._ys)

    @classmethod
    def from_image_roi(
        cls,
        cam: CameraParams,
        left: float,
        right: float,
        top: float,
        bottom: float,
        out_width: int,
        out_height: int,
    ) -> IpmGrid:
        """Road window bounding the image rectangle ``[left, right] x [top, bottom]``.

        The top edge is pulled below the horizon if needed.  The road extents
        are the bounding box of the four corners projected onto the road.
        """
        if not (left < right and top < bottom):
            raise GeometryError("empty image ROI")
        # Keep a margin below the vanishing line so the far edge stays finite.
        min_top = cam.horizon_row + 0.05 * (bottom - cam.horizon_row)
        if bottom <= cam.horizon_row:
            raise HorizonError("image ROI lies entirely above the horizon")
        top = max(top, min_top)
        corners = np.array([[left, top], [right, top], [left, bottom], [right, bottom]])
        ground = image_to_ground(corners, cam)
        return cls(
            float(ground[:, 0].min()),
            float(ground[:, 0].max()),
            float(ground[:, 1].min()),
            float(ground[:, 1].max()),
            int(out_width),
            int(out_height),
            roi_image=(float(left), float(right), float(top), float(bottom)),
        )

    @classmethod
    def default(cls, cam: CameraParams, unit: float = 1.0, out_width=160, out_height=120) -> IpmGrid:
        """Lateral +-3 m, forward 3-40 m; ``unit`` is world units per meter."""
        return cls(-3 * unit, 3 * unit, 3 * unit, 40 * unit, out_width, out_height)


@dataclass(frozen=True, eq=False)
class IpmMap:
    """Source-image sampling coordinates for every IPM cell, precomputed once."""

    grid: IpmGrid
    src_u: np.ndarray
    src_v: np.ndarray

    @classmethod
    def build(cls, cam: CameraParams, grid: IpmGrid) -> IpmMap:
        gx, gy = grid.world_grid()
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        uv = ground_to_image(pts, cam)
        shape = (grid.out_height, grid.out_width)
        return cls(grid, uv[:, 0].reshape(shape), uv[:, 1].reshape(shape))

    def inside(self, width: int, height: int) -> np.ndarray:
        """Cells whose bilinear footprint lies within a ``width x height`` frame."""
        return (
            (self.src_u >= 0)
            & (self.src_u <= width - 1)
            & (self.src_v >= 0)
            & (self.src_v <= height - 1)
        )

    def warp(self, frame: ImageBuffer | np.ndarray) -> ImageBuffer:
        data = frame.data if isinstance(frame, ImageBuffer) else np.asarray(frame, dtype=np.float64)
        h, w = data.shape
        valid = self.inside(w, h)
        out = ndimage.map_coordinates(
            data, [self.src_v, self.src_u], order=1, mode="constant", cval=0.0, prefilter=False
        )
        out[~valid] = 0.0
        return ImageBuffer(out, IPM_FRAME, valid)


def warp_to_ipm(frame: ImageBuffer, cam: CameraParams, grid: IpmGrid) -> ImageBuffer:
    """Bilinearly resample ``frame`` onto the road window described by ``grid``.

    Cells that fall outside the input frame are 0 and marked invalid in the
    returned buffer's mask.  For repeated calls with one camera, build an
    :class:`IpmMap` once and call its :meth:`~IpmMap.warp`.
    """
    if isinstance(frame, ImageBuffer) and frame.frame != IMAGE_FRAME:
        raise ValueError("warp_to_ipm expects an image-frame raster")
    return IpmMap.build(cam, grid).warp(frame)
