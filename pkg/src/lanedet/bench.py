"""Per-frame latency benchmark."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .image import ImageBuffer
from .pipeline import STAGES, Detector

MIN_FRAMES = 50


class BenchUsageError(ValueError):
    """Corpus too small for a meaningful benchmark."""


@dataclass(frozen=True)
class BenchReport:
    frames: int
    median_ms: float
    p95_ms: float
    stage_median_ms: dict[str, float]
    stage_mean_ms: dict[str, float]
    mean_ms: float
    stage_sum_mean_ms: float

    def to_text(self) -> str:
        lines = [
            f"frames        {self.frames}",
            f"median        {self.median_ms:8.3f} ms",
            f"p95           {self.p95_ms:8.3f} ms",
            f"mean          {self.mean_ms:8.3f} ms",
            f"stage sum     {self.stage_sum_mean_ms:8.3f} ms (mean)",
            "stage          median      mean",
        ]
        for k in STAGES:
            lines.append(f"  {k:12s}{self.stage_median_ms[k]:8.3f}  {self.stage_mean_ms[k]:8.3f} ms")
        return "\n".join(lines) + "\n"


def run_benchmark(frames, cfg: PipelineConfig, warmup: int = 3, min_frames: int = MIN_FRAMES) -> BenchReport:
    """Time :meth:`Detector.detect` on each frame in this process.

    The first ``warmup`` frames are processed but not counted.  Latency is
    wall-clock time around each call; the per-stage timings reported by the
    detector are kept separately so their sum can be checked against it.
    """
    frames = list(frames)
    if len(frames) < min_frames:
        raise BenchUsageError(f"benchmark needs at least {min_frames} frames, got {len(frames)}")
    det = Detector(cfg)
    for i, f in enumerate(frames[:warmup]):
        det.detect(_frame(f), i)
    totals, sums = [], []
    per_stage = {k: [] for k in STAGES}
    for i, f in enumerate(frames):
        frame = _frame(f)
        t0 = time.perf_counter_ns()
        res = det.detect(frame, i)
        totals.append((time.perf_counter_ns() - t0) / 1e6)
        sums.append(res.total_us / 1e3)
        for k in STAGES:
            per_stage[k].append(res.timings_us.get(k, 0.0) / 1e3)
    totals = np.asarray(totals)
    return BenchReport(
        frames=len(frames),
        median_ms=float(np.median(totals)),
        p95_ms=float(np.percentile(totals, 95)),
        stage_median_ms={k: float(np.median(v)) for k, v in per_stage.items()},
        stage_mean_ms={k: float(np.mean(v)) for k, v in per_stage.items()},
        mean_ms=float(totals.mean()),
        stage_sum_mean_ms=float(np.mean(sums)),
    )


def _frame(f) -> ImageBuffer:
    return f() if callable(f) else f
