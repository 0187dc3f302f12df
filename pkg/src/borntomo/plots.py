"""Minimal raster output: PNG writing, heatmaps, and log-log curves.

Self-contained encoder (stdlib zlib only) so plot emission carries no
plotting dependency.  Curves get a framed log-log box with decade
gridlines; arrays are rendered through a small blue-to-yellow lookup
ramp and integer upscaling.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

__all__ = ["write_png", "save_heatmap_png", "save_lcurve_png"]


def _chunk(tag, payload):
    return (
        struct.pack(">I", len(payload))
        + tag
        + payload
        + struct.pack(">I", zlib.crc32(tag + payload) & 0xFFFFFFFF)
    )


def write_png(path, image):
    """Write an (H, W, 3) uint8 array as an RGB PNG."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise ValueError("write_png expects an (H, W, 3) uint8 array")
    h, w = img.shape[:2]
    header = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    raw = b"".join(b"\x00" + img[row].tobytes() for row in range(h))
    data = (
        b"\x89PNG\r\n\x1a\n"
        + _chunk(b"IHDR", header)
        + _chunk(b"IDAT", zlib.compress(raw, 9))
        + _chunk(b"IEND", b"")
    )
    with open(path, "wb") as fh:
        fh.write(data)


# compact blue-to-yellow ramp (dark blue, blue, teal, green, yellow)
_RAMP = np.array(
    [
        (53, 42, 135),
        (15, 92, 221),
        (18, 125, 216),
        (21, 177, 180),
        (89, 189, 140),
        (165, 190, 107),
        (225, 185, 82),
        (249, 251, 14),
    ],
    dtype=float,
)


def _colorize(values):
    x = np.clip(values, 0.0, 1.0) * (len(_RAMP) - 1)
    lo = np.floor(x).astype(int)
    hi = np.minimum(lo + 1, len(_RAMP) - 1)
    frac = (x - lo)[..., None]
    rgb = _RAMP[lo] * (1 - frac) + _RAMP[hi] * frac
    return rgb.astype(np.uint8)


def save_heatmap_png(path, array, vmin=None, vmax=None, upscale=4):
    """Render a 2D array as a colormapped PNG (row 0 at the top)."""
    arr = np.asarray(array, dtype=float)
    if arr.ndim != 2:
        raise ValueError("save_heatmap_png expects a 2D array")
    lo = float(np.min(arr)) if vmin is None else vmin
    hi = float(np.max(arr)) if vmax is None else vmax
    span = hi - lo if hi > lo else 1.0
    img = _colorize((arr - lo) / span)
    img = np.kron(img, np.ones((upscale, upscale, 1), dtype=np.uint8))
    write_png(path, img)


def _draw_line(img, x0, y0, x1, y1, color):
    n = int(max(abs(x1 - x0), abs(y1 - y0)) * 2) + 2
    xs = np.linspace(x0, x1, n).round().astype(int)
    ys = np.linspace(y0, y1, n).round().astype(int)
    h, w = img.shape[:2]
    keep = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    img[ys[keep], xs[keep]] = color


def _draw_marker(img, x, y, color, half=2):
    h, w = img.shape[:2]
    x0, x1 = max(x - half, 0), min(x + half + 1, w)
    y0, y1 = max(y - half, 0), min(y + half + 1, h)
    img[y0:y1, x0:x1] = color


def save_lcurve_png(path, xs, ys, width=540, height=420, margin=40):
    """Log-log curve plot with decade gridlines, markers, and a frame.

    ``xs``/``ys`` must be positive (residual and regularization axes).
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    good = (xs > 0) & (ys > 0)
    if not good.any():
        raise ValueError("log-log plot needs positive values")
    xs, ys = xs[good], ys[good]
    lx, ly = np.log10(xs), np.log10(ys)

    def pad_range(v):
        lo, hi = float(v.min()), float(v.max())
        if hi - lo < 1e-9:
            lo, hi = lo - 0.5, hi + 0.5
        span = hi - lo
        return lo - 0.07 * span, hi + 0.07 * span

    xlo, xhi = pad_range(lx)
    ylo, yhi = pad_range(ly)

    img = np.full((height, width, 3), 255, dtype=np.uint8)
    box_w = width - 2 * margin
    box_h = height - 2 * margin

    def to_px(vx, vy):
        px = margin + (vx - xlo) / (xhi - xlo) * box_w
        py = height - margin - (vy - ylo) / (yhi - ylo) * box_h
        return int(round(px)), int(round(py))

    grid_color = np.array([225, 225, 225], dtype=np.uint8)
    for dec in range(int(np.floor(xlo)), int(np.ceil(xhi)) + 1):
        if xlo <= dec <= xhi:
            px, _ = to_px(dec, ylo)
            _draw_line(img, px, margin, px, height - margin, grid_color)
    for dec in range(int(np.floor(ylo)), int(np.ceil(yhi)) + 1):
        if ylo <= dec <= yhi:
            _, py = to_px(xlo, dec)
            _draw_line(img, margin, py, width - margin, py, grid_color)

    frame = np.array([0, 0, 0], dtype=np.uint8)
    _draw_line(img, margin, margin, width - margin, margin, frame)
    _draw_line(img, margin, height - margin, width - margin, height - margin, frame)
    _draw_line(img, margin, margin, margin, height - margin, frame)
    _draw_line(img, width - margin, margin, width - margin, height - margin, frame)

    line_color = np.array([60, 100, 200], dtype=np.uint8)
    mark_color = np.array([180, 60, 40], dtype=np.uint8)
    pts = [to_px(vx, vy) for vx, vy in zip(lx, ly)]
    for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
        _draw_line(img, x0, y0, x1, y1, line_color)
    for x, y in pts:
        _draw_marker(img, x, y, mark_color)
    write_png(path, img)
