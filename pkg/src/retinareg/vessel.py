"""Unified vessel maps: probability grids, a classical vesselness fallback,
and skeletonization of binarized maps into 1-px centerlines.

A vessel map is normally produced by an external segmentation model and
loaded from file; ``enhance_vesselness`` is a self-contained multi-scale
Hessian ridge filter for running the toolkit on raw grayscale images
when no such model output is available.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .raster import as_image, require_binary

MODALITIES = ("octa", "cfp", "wfcfp", "fa", "unknown")

_EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass
class VesselMap:
    """Per-pixel vessel probability grid plus the imaging modality it came from."""

    grid: np.ndarray
    modality: str = "unknown"

    def __post_init__(self):
        self.grid = as_image(self.grid)
        if self.modality not in MODALITIES:
            raise ValueError(f"modality must be one of {MODALITIES}, got {self.modality!r}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape


@dataclass
class Skeleton:
    """Binary grid of 1-px-wide vessel centerlines."""

    grid: np.ndarray = field()

    def __post_init__(self):
        self.grid = require_binary(self.grid)


def enhance_vesselness(raw, scales, beta: float = 0.5, gamma: float = 15.0,
                       modality: str = "unknown") -> VesselMap:
    """Multi-scale Hessian ridge filter for bright tubular structures.

    Parameters
    ----------
    raw : array
        Grayscale image in [0, 1].
    scales : sequence of float
        Gaussian sigmas (pixels); the response at each pixel is the
        maximum tubularity score over scales.
    beta, gamma : float
        Blob-suppression and structure-sensitivity constants of the
        tubularity score, on [0, 1] intensities.

    Returns
    -------
    VesselMap with the response rescaled to [0, 1].
    """
    raw = as_image(raw)
    scales = [float(s) for s in scales]
    if not scales:
        raise ValueError("scales must be non-empty")
    if any(s <= 0 for s in scales):
        raise ValueError(f"scales must all be > 0, got {scales}")

    response = np.zeros_like(raw)
    for sigma in scales:
        # Hessian of the Gaussian-smoothed image via difference stencils,
        # which annihilate constant images exactly (scipy's derivative
        # kernels carry a small truncation bias), then scale-normalized.
        smooth = ndimage.gaussian_filter(raw, sigma, mode="nearest")
        dx = ndimage.correlate1d(smooth, [0.5, 0.0, -0.5], axis=1, mode="nearest")
        hxx = ndimage.correlate1d(smooth, [1.0, -2.0, 1.0], axis=1, mode="nearest") * sigma ** 2
        hyy = ndimage.correlate1d(smooth, [1.0, -2.0, 1.0], axis=0, mode="nearest") * sigma ** 2
        hxy = ndimage.correlate1d(dx, [0.5, 0.0, -0.5], axis=0, mode="nearest") * sigma ** 2

        root = np.sqrt(((hxx - hyy) * 0.5) ** 2 + hxy ** 2)
        mean = (hxx + hyy) * 0.5
        lo, hi = mean - root, mean + root
        # Order eigenvalues by magnitude: |lam1| <= |lam2|.
        swap = np.abs(lo) > np.abs(hi)
        lam1 = np.where(swap, hi, lo)
        lam2 = np.where(swap, lo, hi)

        lam2_safe = np.where(lam2 == 0.0, 1.0, lam2)
        blobness = (lam1 / lam2_safe) ** 2
        structure = lam1 ** 2 + lam2 ** 2
        score = np.exp(-blobness / (2.0 * beta ** 2)) * \
            (1.0 - np.exp(-structure / (2.0 * gamma ** 2)))
        # Bright ridges only: principal curvature must be negative.
        score = np.where(lam2 < 0.0, score, 0.0)
        response = np.maximum(response, score)

    peak = response.max()
    if peak > 1e-12:  # below that it's float noise on a structure-free image
        response /= peak
    else:
        response[:] = 0.0
    return VesselMap(response, modality)


# ---------------------------------------------------------------------------
# Zhang-Suen thinning
# ---------------------------------------------------------------------------

def _deletion_mask(fg: np.ndarray, step: int) -> np.ndarray:
    """Pixels removable in one Zhang-Suen sub-iteration (step 0 or 1)."""
    p = np.pad(fg, 1)
    # Neighbors clockwise from north: P2..P9.
    p2 = p[:-2, 1:-1]
    p3 = p[:-2, 2:]
    p4 = p[1:-1, 2:]
    p5 = p[2:, 2:]
    p6 = p[2:, 1:-1]
    p7 = p[2:, :-2]
    p8 = p[1:-1, :-2]
    p9 = p[:-2, :-2]
    ring = (p2, p3, p4, p5, p6, p7, p8, p9)

    count = np.zeros(fg.shape, dtype=np.uint8)
    for n in ring:
        count += n
    transitions = np.zeros(fg.shape, dtype=np.uint8)
    for a, b in zip(ring, ring[1:] + ring[:1]):
        transitions += ~a & b

    if step == 0:
        keep_ns = ~(p2 & p4 & p6)
        keep_ew = ~(p4 & p6 & p8)
    else:
        keep_ns = ~(p2 & p4 & p8)
        keep_ew = ~(p2 & p6 & p8)
    return fg & (count >= 2) & (count <= 6) & (transitions == 1) & keep_ns & keep_ew


def skeletonize(binary_map) -> Skeleton:
    """Thin a binary map to 1-px-wide 8-connected centerlines.

    Iterative Zhang-Suen thinning run to a fixed point. Zhang-Suen can
    annihilate compact blobs outright (an isolated 2x2 square vanishes),
    which would change the component count; any original 8-connected
    component left without a surviving pixel gets its lexicographically
    first pixel restored, so the component census is preserved exactly.
    """
    binary = require_binary(binary_map)
    fg = binary.astype(bool)
    labels, n_components = ndimage.label(fg, structure=_EIGHT_CONNECTED)

    while True:
        changed = False
        for step in (0, 1):
            kill = _deletion_mask(fg, step)
            if kill.any():
                fg = fg & ~kill
                changed = True
        if not changed:
            break

    if n_components:
        surviving = np.zeros(n_components + 1, dtype=bool)
        surviving[labels[fg]] = True
        for missing in np.nonzero(~surviving[1:])[0] + 1:
            ys, xs = np.nonzero(labels == missing)
            fg[ys[0], xs[0]] = True

    return Skeleton(fg.astype(np.float64))
