"""Detection scoring against hand-labeled lane boundaries.

Two curves are the same lane boundary when, after sampling both, the median
and mean nearest-sample distances satisfy ``min(median) <= t1`` and
``min(mean) <= t2``.  Frames are scored by greedy one-to-one matching and
clips are summarized in the usual ``#total / #detected / correct rate /
false positive rate / fp per frame`` table.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .bezier import Spline, evaluate
from .errors import FormatError, FrameMismatchError


@dataclass(frozen=True)
class MatchParams:
    t1: float = 20.0
    t2: float = 15.0
    samples_per_curve: int = 50

    def __post_init__(self):
        if not (self.t1 > 0 and self.t2 > 0):
            raise ValueError("match thresholds must be positive")
        if self.samples_per_curve < 2:
            raise ValueError("need at least two samples per curve")


def resample_polyline(points, n: int) -> np.ndarray:
    """``n`` points spaced uniformly by arc length along a polyline."""
    pts = np.asarray(points, dtype=np.float64)
    seg = np.hypot(*np.diff(pts, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if cum[-1] == 0:
        return np.repeat(pts[:1], n, axis=0)
    s = np.linspace(0.0, cum[-1], n)
    return np.column_stack([np.interp(s, cum, pts[:, 0]), np.interp(s, cum, pts[:, 1])])


def sample_curve(curve, n: int) -> np.ndarray:
    """Samples of a spline (uniform in t) or a polyline (uniform in arc length)."""
    if isinstance(curve, Spline):
        return evaluate(curve, np.linspace(0.0, 1.0, n))
    return resample_polyline(curve, n)


def nearest_distances(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample nearest distances a->b and b->a."""
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1))
    return d.min(axis=1), d.min(axis=0)


@dataclass(frozen=True)
class MatchResult:
    matched: bool
    median: float  # min of the two directional medians
    mean: float  # min of the two directional means


def curve_distance(a, b, params: MatchParams = MatchParams()) -> MatchResult:
    sa = sample_curve(a, params.samples_per_curve)
    sb = sample_curve(b, params.samples_per_curve)
    d1, d2 = nearest_distances(sa, sb)
    med = min(float(np.median(d1)), float(np.median(d2)))
    mean = min(float(np.mean(d1)), float(np.mean(d2)))
    return MatchResult(med <= params.t1 and mean <= params.t2, med, mean)


def curve_match(a, b, params: MatchParams = MatchParams()) -> bool:
    return curve_distance(a, b, params).matched


@dataclass(frozen=True)
class FrameScore:
    true_pos: int
    false_pos: int
    false_neg: int
    pairs: tuple[tuple[int, int], ...] = ()


def score_frame(detections: Sequence, truths: Sequence, params: MatchParams = MatchParams()) -> FrameScore:
    """Greedy one-to-one matching, best (smallest mean distance) pairs first."""
    candidates = []
    for i, det in enumerate(detections):
        for j, tru in enumerate(truths):
            res = curve_distance(det, tru, params)
            if res.matched:
                candidates.append((res.mean, i, j))
    candidates.sort()
    used_d, used_t, pairs = set(), set(), []
    for _, i, j in candidates:
        if i in used_d or j in used_t:
            continue
        used_d.add(i)
        used_t.add(j)
        pairs.append((i, j))
    tp = len(pairs)
    return FrameScore(tp, len(detections) - tp, len(truths) - tp, tuple(sorted(pairs)))


@dataclass
class ClipStats:
    name: str
    frames: int = 0
    total: int = 0
    detected: int = 0
    true_pos: int = 0
    false_pos: int = 0

    def add(self, fs: FrameScore) -> None:
        self.frames += 1
        self.total += fs.true_pos + fs.false_neg
        self.detected += fs.true_pos + fs.false_pos
        self.true_pos += fs.true_pos
        self.false_pos += fs.false_pos

    @property
    def correct_rate(self) -> float:
        return self.true_pos / self.total if self.total else 0.0

    @property
    def fp_rate(self) -> float:
        return self.false_pos / self.total if self.total else 0.0

    @property
    def fp_per_frame(self) -> float:
        return self.false_pos / self.frames if self.frames else 0.0

    def merged(self, other: ClipStats, name: str) -> ClipStats:
        return ClipStats(
            name,
            self.frames + other.frames,
            self.total + other.total,
            self.detected + other.detected,
            self.true_pos + other.true_pos,
            self.false_pos + other.false_pos,
        )


@dataclass
class DatasetReport:
    clips: list[ClipStats] = field(default_factory=list)

    @property
    def total(self) -> ClipStats:
        out = ClipStats("Total")
        for c in self.clips:
            out = out.merged(c, "Total")
        return out

    def rows(self) -> list[ClipStats]:
        return [*self.clips, self.total]

    def to_text(self) -> str:
        header = f"{'clip':<12}{'#total':>8}{'#detected':>11}{'correct rate':>14}{'false pos. rate':>17}{'fp/frame':>10}"
        lines = [header]
        for r in self.rows():
            lines.append(
                f"{r.name:<12}{r.total:>8}{r.detected:>11}{100 * r.correct_rate:>13.2f}%"
                f"{100 * r.fp_rate:>16.2f}%{r.fp_per_frame:>10.3f}"
            )
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["clip", "total", "detected", "correct_rate", "fp_rate", "fp_per_frame"])
        for r in self.rows():
            w.writerow([r.name, r.total, r.detected, f"{r.correct_rate:.6f}", f"{r.fp_rate:.6f}", f"{r.fp_per_frame:.6f}"])
        return buf.getvalue()


def score_clip(name: str, detections: Mapping[int, Sequence], labels: Mapping[int, Sequence],
               params: MatchParams = MatchParams()) -> ClipStats:
    if set(detections) != set(labels):
        missing = sorted(set(labels) ^ set(detections))
        raise FrameMismatchError(f"clip {name}: frame indices differ ({missing[:5]}...)")
    stats = ClipStats(name)
    for idx in sorted(labels):
        stats.add(score_frame(detections[idx], labels[idx], params))
    return stats


def score_dataset(clips: Iterable[tuple[str, Mapping[int, Sequence], Mapping[int, Sequence]]],
                  params: MatchParams = MatchParams()) -> DatasetReport:
    """Score ``(name, detections, labels)`` clips in the given order."""
    return DatasetReport([score_clip(name, det, lab, params) for name, det, lab in clips])


# -- label files ---------------------------------------------------------------


def format_labels(labels: Mapping[int, Sequence]) -> str:
    """One record per lane: ``frame_idx n x1 y1 ... xn yn``; lane-free frames as ``frame_idx 0``."""
    out = []
    for idx in sorted(labels):
        lanes = labels[idx]
        if not lanes:
            out.append(f"{idx} 0")
        for poly in lanes:
            poly = np.asarray(poly, dtype=np.float64)
            coords = " ".join(f"{v:.3f}" for v in poly.ravel())
            out.append(f"{idx} {len(poly)} {coords}")
    return "\n".join(out) + "\n"


def parse_labels(text: str) -> dict[int, list[np.ndarray]]:
    labels: dict[int, list[np.ndarray]] = {}
    offset = 0
    for lineno, line in enumerate(text.splitlines(keepends=True), 1):
        start = offset
        offset += len(line.encode())
        fields = line.split()
        if not fields:
            continue
        try:
            idx, n = int(fields[0]), int(fields[1])
            coords = [float(v) for v in fields[2:]]
        except (ValueError, IndexError):
            raise FormatError(f"label line {lineno}: malformed record", start) from None
        if len(coords) != 2 * n or n == 1:
            raise FormatError(f"label line {lineno}: expected {n} points", start)
        lanes = labels.setdefault(idx, [])
        if n:
            lanes.append(np.array(coords).reshape(n, 2))
    return labels


def load_labels(path: str | Path) -> dict[int, list[np.ndarray]]:
    return parse_labels(Path(path).read_text())
