"""Command line interface: detect, eval, synth, warp, bench.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .bench import BenchUsageError, run_benchmark
from .bezier import Spline, evaluate
from .config import PipelineConfig, format_config
from .errors import ConfigError, FormatError, FrameMismatchError, LaneDetError
from .evaluation import MatchParams, format_labels, load_labels, score_dataset
from .imageio import draw_polyline, load_frame, write_pgm, write_ppm
from .pipeline import Detector, FrameResult, detect_frame, frame_seed
from .synth import CorpusSpec, synth_camera, synth_config_values, synth_corpus

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
FRAME_SUFFIXES = (".ppm", ".pgm", ".png")
MANIFEST = "manifest.tsv"

log = logging.getLogger("lanedet")


class UsageError(Exception):
    pass


def list_frames(src: Path) -> list[Path]:
    """Frame files of a directory in sorted order, or the single file given."""
    if src.is_file():
        return [src]
    if not src.is_dir():
        raise UsageError(f"no such file or directory: {src}")
    return sorted(p for p in src.iterdir() if p.is_file() and p.suffix.lower() in FRAME_SUFFIXES)


def _load_config(path: str, **kw) -> PipelineConfig:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"config file not found: {p}")
    return PipelineConfig.load(p, **kw)


# -- detect ------------------------------------------------------------------


def format_detections(res: FrameResult) -> str:
    """One line per detection: score, then the serialized image-frame spline."""
    return "".join(f"{d.score:.6f} {d.spline.to_text()}\n" for d in res.detections)


def parse_detections(text: str) -> list[Spline]:
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split(maxsplit=1)
        if len(parts) != 2:
            raise FormatError(f"line {lineno}: expected '<score> <spline>'")
        try:
            out.append(Spline.from_text(parts[1]))
        except ValueError as exc:
            raise FormatError(f"line {lineno}: {exc}") from None
    return out


def _detect_one(job):
    index, path, cfg = job
    try:
        frame = load_frame(path)
    except (LaneDetError, OSError) as exc:
        return index, FrameResult(seed=frame_seed(cfg.seed, index), error=f"{type(exc).__name__}: {exc}")
    res = detect_frame(frame, cfg, index)
    if cfg.debug_images and res.error is None:
        res.debug["overlay"] = _overlay(frame.data, res)
    return index, res


def _overlay(gray: np.ndarray, res: FrameResult) -> np.ndarray:
    rgb = np.repeat(gray[..., None], 3, axis=2)
    for d in res.detections:
        draw_polyline(rgb, evaluate(d.spline, np.linspace(0.0, 1.0, 64)), (1.0, 0.0, 0.0))
    return rgb


def cmd_detect(args) -> int:
    cfg = _load_config(args.config, mode=args.mode, seed=args.seed, debug_images=args.debug_images)
    frames = list_frames(Path(args.input))
    if not frames:
        raise UsageError(f"no frames ({', '.join(FRAME_SUFFIXES)}) found in {args.input}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.debug_images:
        (out / "debug").mkdir(exist_ok=True)
    jobs = [(i, p, cfg) for i, p in enumerate(frames)]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = dict(pool.map(_detect_one, jobs))
    else:
        results = dict(map(_detect_one, jobs))
    rows = ["index\tframe\tseed\tstatus\tdetections\n"]
    failed = 0
    for i, path in enumerate(frames):
        res = results[i]
        name = f"{i:06d}_{path.stem}.txt"
        (out / name).write_text(format_detections(res))
        status = "ok" if res.error is None else "error: " + res.error.replace("\t", " ").replace("\n", " ")
        failed += res.error is not None
        rows.append(f"{i}\t{path.name}\t{res.seed}\t{status}\t{len(res.detections)}\n")
        for key, img in res.debug.items():
            base = out / "debug" / f"{i:06d}_{key}"
            if img.ndim == 3:
                write_ppm(base.with_suffix(".ppm"), img)
            else:
                write_pgm(base.with_suffix(".pgm"), img, None, None)
    (out / MANIFEST).write_text("".join(rows))
    print(f"{len(frames)} frames, {failed} failed, output in {out}")
    return EXIT_DATA if failed else EXIT_OK


def read_detection_dir(path: Path) -> dict[int, list[Spline]]:
    """Detections per frame index from a ``detect`` output directory."""
    manifest = path / MANIFEST
    if not manifest.is_file():
        raise UsageError(f"{path} has no {MANIFEST}")
    out: dict[int, list[Spline]] = {}
    for line in manifest.read_text().splitlines()[1:]:
        if not line.strip():
            continue
        index, frame, *_ = line.split("\t")
        name = f"{int(index):06d}_{Path(frame).stem}.txt"
        out[int(index)] = parse_detections((path / name).read_text())
    return out


# -- eval ----------------------------------------------------------------------


def cmd_eval(args) -> int:
    if len(args.detections) != len(args.labels):
        raise UsageError("give one --labels file per --detections directory")
    params = MatchParams(args.t1, args.t2)
    clips = []
    for det_dir, label_path in zip(args.detections, args.labels):
        det_path = Path(det_dir)
        if not Path(label_path).is_file():
            raise UsageError(f"label file not found: {label_path}")
        dets = read_detection_dir(det_path)
        labels = load_labels(label_path)
        clips.append((det_path.name, dets, labels))
    report = score_dataset(clips, params)
    print(report.to_text(), end="")
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    return EXIT_OK


# -- synth ---------------------------------------------------------------------


def cmd_synth(args) -> int:
    spec = CorpusSpec()
    if args.spec:
        p = Path(args.spec)
        if not p.is_file():
            raise UsageError(f"spec file not found: {p}")
        try:
            spec = CorpusSpec.from_text(p.read_text())
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if args.frames < 1:
        raise UsageError("--frames must be positive")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    values = synth_config_values()
    cfg = PipelineConfig.from_values(values)
    (out / "config.txt").write_text(format_config(values))
    labels = {}
    tags = []
    for i, frame, lanes, scene in synth_corpus(args.frames, args.seed, cfg.grid, synth_camera(), spec):
        write_ppm(out / f"frame_{i:05d}.ppm", np.repeat(frame.data[..., None], 3, axis=2))
        labels[i] = lanes
        tags.append(f"{i}\t{len(scene.lanes)}\t{','.join(scene.tags)}\n")
    (out / "labels.txt").write_text(format_labels(labels))
    (out / "scenes.tsv").write_text("index\tlanes\ttags\n" + "".join(tags))
    print(f"wrote {args.frames} frames, labels and config to {out}")
    return EXIT_OK


# -- warp / bench --------------------------------------------------------------


def cmd_warp(args) -> int:
    cfg = _load_config(args.config)
    path = Path(args.input)
    if not path.is_file():
        raise UsageError(f"no such file: {path}")
    ipm = Detector(cfg).ipm_map.warp(load_frame(path))
    write_pgm(args.out, ipm.data)
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _load_config(args.config)
    paths = list_frames(Path(args.input))
    try:
        frames = [load_frame(p) for p in paths]
        report = run_benchmark(frames, cfg, warmup=args.warmup, min_frames=args.min_frames)
    except BenchUsageError as exc:
        raise UsageError(str(exc)) from None
    print(report.to_text(), end="")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lanedet", description="Lane boundary detection in road images.")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="detect lanes in a frame or directory of frames")
    p.add_argument("input", help="image file or directory of .ppm/.pgm/.png frames")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--mode", choices=("all", "two"), default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--debug-images", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="score detections against labels")
    p.add_argument("--detections", required=True, action="append", help="detect output directory (repeatable)")
    p.add_argument("--labels", required=True, action="append", help="label file (repeatable, one per --detections)")
    p.add_argument("--t1", type=float, default=20.0, help="median distance threshold (px)")
    p.add_argument("--t2", type=float, default=15.0, help="mean distance threshold (px)")
    p.add_argument("--csv", help="also write the table as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="render a labeled synthetic corpus")
    p.add_argument("--spec", help="scene distribution file (minLanes, maxLanes, curvedFraction)")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("warp", help="write the IPM of one frame as PGM")
    p.add_argument("input")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("bench", help="per-frame latency on a directory of frames")
    p.add_argument("input")
    p.add_argument("--config", required=True)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--min-frames", type=int, default=50)
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, FormatError, FrameMismatchError, LaneDetError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
