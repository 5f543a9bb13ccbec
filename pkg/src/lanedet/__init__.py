"""Lane boundary detection on road images: IPM, ridge filtering, RANSAC lines and Bezier splines."""

from .bezier import ScoreParams, Spline, evaluate, fit_least_squares, line_spline, rasterize, score_spline
from .camera import CameraParams, IpmGrid, IpmMap, ground_to_image, image_to_ground, warp_to_ipm
from .config import PipelineConfig
from .errors import (
    BehindCameraError,
    ConfigError,
    DegenerateWindowError,
    DomainError,
    FormatError,
    FrameMismatchError,
    GeometryError,
    HorizonError,
    ImageTooSmallError,
    InsufficientSupportError,
    LaneDetError,
    RankDeficientError,
    ZeroLengthError,
)
from .evaluation import MatchParams, curve_match, score_dataset, score_frame
from .image import IMAGE_FRAME, IPM_FRAME, ImageBuffer
from .imageio import load_frame
from .lane_filter import FilterParams, filter_ipm, quantile_threshold
from .line_detect import Line, LineDetectParams, find_line_candidates, ransac_line
from .pipeline import Detection, Detector, FrameResult, detect_frame
from .postprocess import PostParams, back_project_spline, extend_spline, geometry_check, localize_spline
from .ransac_spline import SplineRansacParams, ransac_spline_fit

__all__ = [
    "BehindCameraError",
    "CameraParams",
    "ConfigError",
    "DegenerateWindowError",
    "Detection",
    "Detector",
    "DomainError",
    "FilterParams",
    "FormatError",
    "FrameMismatchError",
    "FrameResult",
    "GeometryError",
    "HorizonError",
    "IMAGE_FRAME",
    "IPM_FRAME",
    "ImageBuffer",
    "ImageTooSmallError",
    "InsufficientSupportError",
    "IpmGrid",
    "IpmMap",
    "LaneDetError",
    "Line",
    "LineDetectParams",
    "MatchParams",
    "PipelineConfig",
    "PostParams",
    "RankDeficientError",
    "ScoreParams",
    "Spline",
    "SplineRansacParams",
    "ZeroLengthError",
    "back_project_spline",
    "curve_match",
    "detect_frame",
    "evaluate",
    "extend_spline",
    "filter_ipm",
    "find_line_candidates",
    "fit_least_squares",
    "geometry_check",
    "ground_to_image",
    "image_to_ground",
    "line_spline",
    "load_frame",
    "localize_spline",
    "quantile_threshold",
    "ransac_line",
    "ransac_spline_fit",
    "rasterize",
    "score_dataset",
    "score_frame",
    "score_spline",
    "warp_to_ipm",
]

__version__ = "0.1.0"
