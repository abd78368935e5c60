"""Static raster exports: slice images and line plots, written as PNG.

Replaces interactive inspection with reproducible files: the same inputs
always render byte-identical images.
"""

from __future__ import annotations

import numpy as np
from PIL import Image


def _to_u8(plane: np.ndarray) -> np.ndarray:
    lo, hi = float(plane.min()), float(plane.max())
    if hi <= lo:
        return np.full(plane.shape, 128, dtype=np.uint8)
    return np.clip((plane - lo) / (hi - lo) * 255.0, 0, 255).astype(np.uint8)


def render_slice(plane: np.ndarray, path, signed: bool = False,
                 overlay: np.ndarray | None = None):
    """Write a 2D slice as PNG.

    Grayscale with min-max scaling by default; ``signed`` renders a
    diverging palette (blue negative, red positive, white zero).  With an
    ``overlay`` mask, color appears only where the mask is true and the
    rest stays grayscale.
    """
    plane = np.asarray(plane, dtype=np.float64)
    if plane.ndim != 2:
        raise ValueError(f"expected a 2D slice, got {plane.ndim}D")

    if signed:
        peak = float(np.max(np.abs(plane)))
        if peak == 0.0:
            rgb = np.full(plane.shape + (3,), 255, dtype=np.uint8)
        else:
            frac = np.abs(plane) / peak
            fade = (255.0 * (1.0 - frac)).astype(np.uint8)
            rgb = np.full(plane.shape + (3,), 255, dtype=np.uint8)
            pos = plane > 0
            neg = plane < 0
            rgb[pos, 1] = fade[pos]
            rgb[pos, 2] = fade[pos]
            rgb[neg, 0] = fade[neg]
            rgb[neg, 1] = fade[neg]
    else:
        gray = _to_u8(plane)
        rgb = np.stack([gray, gray, gray], axis=-1)

    if overlay is not None:
        overlay = np.asarray(overlay, dtype=bool)
        if overlay.shape != plane.shape:
            raise ValueError("overlay shape does not match the slice")
        gray = _to_u8(plane)
        base = np.stack([gray, gray, gray], axis=-1)
        base[overlay] = rgb[overlay] if signed else (255, 64, 64)
        rgb = base

    # image rows run top to bottom; volume y runs bottom to top
    Image.fromarray(np.transpose(rgb, (1, 0, 2))[::-1], "RGB").save(path)


def render_timecourse(series, path, size: tuple[int, int] = (800, 240)):
    """Write a simple line plot of a 1D series as PNG (black on white)."""
    series = np.asarray(series, dtype=np.float64)
    if series.size < 2:
        raise ValueError("need at least 2 samples to plot")
    width, height = size
    margin = 8
    canvas = np.full((height, width), 255, dtype=np.uint8)

    lo, hi = float(series.min()), float(series.max())
    span = hi - lo if hi > lo else 1.0
    xs = margin + (np.arange(series.size) / (series.size - 1)) * (width - 1 - 2 * margin)
    ys = (height - 1 - margin) - (series - lo) / span * (height - 1 - 2 * margin)

    for i in range(series.size - 1):
        x0, y0, x1, y1 = xs[i], ys[i], xs[i + 1], ys[i + 1]
        steps = int(max(abs(x1 - x0), abs(y1 - y0))) + 1
        xi = np.rint(np.linspace(x0, x1, steps)).astype(int)
        yi = np.rint(np.linspace(y0, y1, steps)).astype(int)
        canvas[np.clip(yi, 0, height - 1), np.clip(xi, 0, width - 1)] = 0

    Image.fromarray(canvas, "L").save(path)
