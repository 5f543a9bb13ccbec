"""Frame loading (binary PPM/PGM, PNG) and debug raster output."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatError
from .image import IMAGE_FRAME, ImageBuffer

_WHITESPACE = b" \t\r\n"


def _read_header(buf: bytes) -> tuple[bytes, int, int, int, int]:
    """Parse a netpbm header; returns (magic, width, height, maxval, data offset)."""
    if len(buf) < 2:
        raise FormatError("file too short for a netpbm header", 0)
    magic = buf[:2]
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(buf) and (buf[pos] in _WHITESPACE or buf[pos] == ord("#")):
            if buf[pos] == ord("#"):
                end = buf.find(b"\n", pos)
                pos = len(buf) if end < 0 else end + 1
            else:
                pos += 1
        start = pos
        while pos < len(buf) and buf[pos] not in _WHITESPACE and buf[pos] != ord("#"):
            pos += 1
        token = buf[start:pos]
        if not token:
            raise FormatError("truncated header", start)
        if not token.isdigit():
            raise FormatError(f"bad header field {token!r}", start)
        fields.append(int(token))
    if pos >= len(buf) or buf[pos] not in _WHITESPACE:
        raise FormatError("missing whitespace after header", pos)
    width, height, maxval = fields
    if width <= 0 or height <= 0:
        raise FormatError("non-positive image size", 2)
    if not 0 < maxval < 65536:
        raise FormatError(f"unsupported maxval {maxval}", pos)
    return magic, width, height, maxval, pos + 1


def decode_netpbm(buf: bytes) -> np.ndarray:
    """Decode P5/P6 bytes to float [0, 1]; P6 yields the red channel."""
    magic, width, height, maxval, offset = _read_header(buf)
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported magic {magic!r}", 0)
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * channels * dtype.itemsize
    if len(buf) - offset < need:
        raise FormatError(f"pixel data truncated: need {need} bytes, have {len(buf) - offset}", len(buf))
    data = np.frombuffer(buf, dtype=dtype, count=width * height * channels, offset=offset)
    data = data.reshape(height, width, channels)[..., 0]
    return data.astype(np.float64) / maxval


def load_frame(path: str | Path) -> ImageBuffer:
    """Red channel (or gray) of a PPM/PGM/PNG file scaled to [0, 1]."""
    path = Path(path)
    buf = path.read_bytes()
    if buf[:2] in (b"P5", b"P6"):
        return ImageBuffer(decode_netpbm(buf), IMAGE_FRAME)
    if buf[:8] == b"\x89PNG\r\n\x1a\n":
        from PIL import Image

        try:
            with Image.open(path) as im:
                im.load()
                arr = np.asarray(im)
                mode = im.mode
        except Exception as exc:  # Pillow raises a variety of types on corrupt data
            raise FormatError(f"cannot decode PNG: {exc}", None) from exc
        scale = 65535.0 if arr.dtype == np.uint16 or mode.startswith("I;16") else 255.0
        if arr.ndim == 3:
            arr = arr[..., 0]
        return ImageBuffer(arr.astype(np.float64) / scale, IMAGE_FRAME)
    raise FormatError("unrecognized image format", 0)


def _to_bytes(data: np.ndarray, lo: float | None, hi: float | None) -> np.ndarray:
    data = np.asarray(data, dtype=np.float64)
    lo = data.min() if lo is None else lo
    hi = data.max() if hi is None else hi
    span = hi - lo if hi > lo else 1.0
    return np.clip(np.round((data - lo) / span * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path: str | Path, data: np.ndarray, lo: float | None = 0.0, hi: float | None = 1.0) -> None:
    """Binary PGM; ``lo``/``hi`` map to 0/255 (None = data range)."""
    px = _to_bytes(data, lo, hi)
    h, w = px.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + px.tobytes())


def write_ppm(path: str | Path, rgb: np.ndarray) -> None:
    """Binary PPM from an ``(H, W, 3)`` float array in [0, 1]."""
    px = _to_bytes(rgb, 0.0, 1.0)
    h, w, _ = px.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + px.tobytes())


def draw_polyline(rgb: np.ndarray, pts: np.ndarray, color) -> None:
    """Paint sampled points (densified to 1 px spacing) into ``rgb`` in place."""
    pts = np.asarray(pts, dtype=np.float64)
    if len(pts) < 2:
        return
    seg = np.hypot(*np.diff(pts, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    s = np.linspace(0, cum[-1], max(2, int(cum[-1] * 2)))
    xs = np.round(np.interp(s, cum, pts[:, 0])).astype(int)
    ys = np.round(np.interp(s, cum, pts[:, 1])).astype(int)
    h, w = rgb.shape[:2]
    ok = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    rgb[ys[ok], xs[ok]] = color
