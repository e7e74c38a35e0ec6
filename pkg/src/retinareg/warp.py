"""Resample a source image into the target frame and render vessel overlays.

Warping is inverse-mapped: each output pixel (x, y) samples the source
at ``inverse_t(x, y)`` with bilinear interpolation; samples outside the
source raster yield 0, matching vessel-absence semantics. Overlays put
the warped source vessels in the red channel and the target vessels in
green, so aligned vasculature reads as yellow.
"""

from __future__ import annotations

import numpy as np

from .fitting import Homography, Transform, _W_EPSILON
from .raster import as_image


def bilinear_sample(img: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample ``img`` at float (x, y) positions; out-of-bounds gives 0.

    At integer coordinates this reduces exactly to the pixel value.
    """
    h, w = img.shape
    valid = (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)
    xc = np.clip(x, 0, w - 1)
    yc = np.clip(y, 0, h - 1)
    x0 = np.floor(xc).astype(int)
    y0 = np.floor(yc).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bottom = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return np.where(valid, top * (1.0 - fy) + bottom * fy, 0.0)


def _map_output_grid(inverse_t: Transform, out_w: int, out_h: int):
    """Source-frame sample positions for every output pixel, plus a
    degeneracy mask for homographies whose denominator vanishes."""
    xs, ys = np.meshgrid(np.arange(out_w, dtype=np.float64),
                         np.arange(out_h, dtype=np.float64))
    pts = np.stack([xs.ravel(), ys.ravel()], axis=1)
    model = inverse_t.model
    if isinstance(model, Homography):
        projected = pts @ model.h[:, :2].T + model.h[:, 2]
        w_coord = projected[:, 2]
        degenerate = np.abs(w_coord) < _W_EPSILON
        w_safe = np.where(degenerate, 1.0, w_coord)
        mapped = projected[:, :2] / w_safe[:, None]
    else:
        mapped = model.apply(pts)
        degenerate = np.zeros(len(pts), dtype=bool)
    mapped = mapped + np.asarray(inverse_t.offset)
    shape = (out_h, out_w)
    return (mapped[:, 0].reshape(shape), mapped[:, 1].reshape(shape),
            degenerate.reshape(shape))


def warp(source: np.ndarray, inverse_t: Transform, out_w: int, out_h: int,
         stats: dict | None = None) -> np.ndarray:
    """Warp ``source`` onto an ``out_h`` x ``out_w`` canvas.

    ``inverse_t`` maps target coordinates to source coordinates. Pixels
    whose homography denominator degenerates are written as 0; their
    count is reported in ``stats['degenerate_pixels']`` when a dict is
    passed.
    """
    source = as_image(source)
    if out_w < 1 or out_h < 1:
        raise ValueError(f"output size must be positive, got {out_w}x{out_h}")
    sx, sy, degenerate = _map_output_grid(inverse_t, out_w, out_h)
    out = bilinear_sample(source, sx, sy)
    out[degenerate] = 0.0
    if stats is not None:
        stats["degenerate_pixels"] = int(degenerate.sum())
    return out


def render_overlay(warped_source_vessels: np.ndarray,
                   target_vessels: np.ndarray) -> np.ndarray:
    """(H, W, 3) composite: red = warped source, green = target, blue = 0."""
    warped = as_image(warped_source_vessels)
    target = as_image(target_vessels)
    if warped.shape != target.shape:
        raise ValueError(f"shape mismatch: {warped.shape} vs {target.shape}")
    return np.stack([warped, target, np.zeros_like(target)], axis=-1)
