"""Junction keypoints on vessel skeletons, local patch descriptors, and
brute-force descriptor matching into a source-to-target correspondence set.

A skeleton pixel is a junction candidate when its crossing number (the
count of 0-to-1 transitions walking the 8-neighborhood in a circle) is at
least 3: exactly 3 means a bifurcation, 4 or more a crossover. Candidates
within the non-max-suppression radius merge to their centroid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .vessel import Skeleton, VesselMap

DESCRIPTOR_GRID = 4       # spatial cells per patch side
DESCRIPTOR_ORIENTATIONS = 8
DESCRIPTOR_SIZE = DESCRIPTOR_GRID * DESCRIPTOR_GRID * DESCRIPTOR_ORIENTATIONS


@dataclass
class Keypoint:
    """Sub-pixel junction location on the vascular tree."""

    x: float
    y: float
    kind: str = "bifurcation"
    strength: float = 0.0

    def __post_init__(self):
        if self.kind not in ("bifurcation", "crossover"):
            raise ValueError(f"kind must be 'bifurcation' or 'crossover', got {self.kind!r}")
        if self.strength < 0:
            raise ValueError("strength must be >= 0")


@dataclass
class CorrespondenceSet:
    """Matched point pairs, source frame -> target frame, as (m, 2) arrays of (x, y)."""

    src: np.ndarray
    tgt: np.ndarray

    def __post_init__(self):
        self.src = np.atleast_2d(np.asarray(self.src, dtype=np.float64))
        self.tgt = np.atleast_2d(np.asarray(self.tgt, dtype=np.float64))
        if self.src.size == 0:
            self.src = self.src.reshape(0, 2)
        if self.tgt.size == 0:
            self.tgt = self.tgt.reshape(0, 2)
        if self.src.shape != self.tgt.shape or self.src.shape[1:] != (2,):
            raise ValueError(f"src/tgt must both be (m, 2), got {self.src.shape} and {self.tgt.shape}")
        if not (np.isfinite(self.src).all() and np.isfinite(self.tgt).all()):
            raise ValueError("correspondence coordinates must be finite")

    @property
    def m(self) -> int:
        return self.src.shape[0]

    def subset(self, mask) -> "CorrespondenceSet":
        mask = np.asarray(mask)
        return CorrespondenceSet(self.src[mask], self.tgt[mask])

    def to_json_dict(self) -> dict:
        return {"pairs": [{"src": [float(u), float(v)], "tgt": [float(x), float(y)]}
                          for (u, v), (x, y) in zip(self.src, self.tgt)]}

    @classmethod
    def from_json_dict(cls, doc: dict) -> "CorrespondenceSet":
        pairs = doc.get("pairs", [])
        src = [p["src"] for p in pairs]
        tgt = [p["tgt"] for p in pairs]
        return cls(np.asarray(src, dtype=np.float64).reshape(len(pairs), 2),
                   np.asarray(tgt, dtype=np.float64).reshape(len(pairs), 2))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path) -> "CorrespondenceSet":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Junction detection
# ---------------------------------------------------------------------------

def _crossing_numbers(fg: np.ndarray) -> np.ndarray:
    """0-to-1 transition count around each pixel's circular 8-neighborhood."""
    p = np.pad(fg, 1)
    ring = (p[:-2, 1:-1], p[:-2, 2:], p[1:-1, 2:], p[2:, 2:],
            p[2:, 1:-1], p[2:, :-2], p[1:-1, :-2], p[:-2, :-2])
    crossings = np.zeros(fg.shape, dtype=np.uint8)
    for a, b in zip(ring, ring[1:] + ring[:1]):
        crossings += ~a & b
    return crossings


def detect_junctions(sk: Skeleton, nms_radius: float = 5.0) -> list[Keypoint]:
    """Find bifurcations and crossovers on a skeleton, with NMS merging.

    Candidates closer than ``nms_radius`` merge to the centroid of the
    cluster around the strongest one (ties broken by row, then column);
    the merged keypoint keeps the cluster's maximum crossing number as
    its strength.
    """
    fg = sk.grid.astype(bool)
    crossings = _crossing_numbers(fg)
    cand_y, cand_x = np.nonzero(fg & (crossings >= 3))
    if cand_y.size == 0:
        return []
    strength = crossings[cand_y, cand_x].astype(np.float64)

    order = np.lexsort((cand_x, cand_y, -strength))
    xs, ys, ss = cand_x[order].astype(np.float64), cand_y[order].astype(np.float64), strength[order]

    keypoints: list[Keypoint] = []
    alive = np.ones(len(xs), dtype=bool)
    for i in range(len(xs)):
        if not alive[i]:
            continue
        near = alive & (np.hypot(xs - xs[i], ys - ys[i]) < nms_radius)
        cx, cy, s = xs[near].mean(), ys[near].mean(), ss[near].max()
        kind = "crossover" if s >= 4 else "bifurcation"
        keypoints.append(Keypoint(float(cx), float(cy), kind, float(s)))
        alive &= ~near
    return keypoints


# ---------------------------------------------------------------------------
# Patch descriptors
# ---------------------------------------------------------------------------

def describe(img, kp: Keypoint, patch_radius: int = 16) -> np.ndarray:
    """Gradient-orientation histogram descriptor of the patch around ``kp``.

    A (2r+1)^2 patch (zero-padded at image borders) is split into a 4x4
    spatial grid; each cell accumulates gradient magnitude into 8
    orientation bins, giving a 128-vector that is L2-normalized. A patch
    with no gradient structure maps to the uniform unit vector.
    Deliberately not rotation invariant.
    """
    grid = img.grid if isinstance(img, VesselMap) else np.asarray(img, dtype=np.float64)
    r = int(patch_radius)
    size = 2 * r + 1
    cy, cx = int(round(kp.y)), int(round(kp.x))

    padded = np.pad(grid, r, mode="constant")
    patch = padded[cy:cy + size, cx:cx + size]
    if patch.shape != (size, size):
        raise ValueError(f"keypoint ({kp.x}, {kp.y}) outside image of shape {grid.shape}")

    gy, gx = np.gradient(patch)
    magnitude = np.hypot(gx, gy)
    theta = np.mod(np.arctan2(gy, gx), 2.0 * np.pi)
    orientation_bin = np.minimum(
        (theta * (DESCRIPTOR_ORIENTATIONS / (2.0 * np.pi))).astype(int),
        DESCRIPTOR_ORIENTATIONS - 1)

    cell = np.arange(size) * DESCRIPTOR_GRID // size
    cell_flat = (cell[:, None] * DESCRIPTOR_GRID + cell[None, :])
    index = cell_flat * DESCRIPTOR_ORIENTATIONS + orientation_bin

    hist = np.zeros(DESCRIPTOR_SIZE)
    np.add.at(hist, index.ravel(), magnitude.ravel())

    norm = np.linalg.norm(hist)
    if norm < 1e-12:
        return np.full(DESCRIPTOR_SIZE, 1.0 / np.sqrt(DESCRIPTOR_SIZE))
    return hist / norm


def describe_all(img, kps: list[Keypoint], patch_radius: int = 16) -> list[tuple[Keypoint, np.ndarray]]:
    return [(kp, describe(img, kp, patch_radius)) for kp in kps]


# ---------------------------------------------------------------------------
# Brute-force matching
# ---------------------------------------------------------------------------

def _ratio_pass(dist_row: np.ndarray, best: int, ratio: float) -> bool:
    # Lowe test as d1 <= ratio * d2 to stay meaningful when d2 == 0;
    # a single candidate passes by convention (nothing to be ambiguous with).
    if dist_row.size < 2:
        return True
    d1 = dist_row[best]
    d2 = np.min(np.delete(dist_row, best))
    return bool(d1 <= ratio * d2)


def match_bruteforce(src: list[tuple[Keypoint, np.ndarray]],
                     tgt: list[tuple[Keypoint, np.ndarray]],
                     ratio: float = 0.8,
                     cross_check: bool = True) -> CorrespondenceSet:
    """Match descriptors by exhaustive L2 nearest neighbors.

    Each source descriptor is matched to its nearest target descriptor
    if the nearest/second-nearest distance ratio passes the Lowe test.
    With ``cross_check`` the match must also be the mutual nearest
    neighbor and pass the ratio test in the reverse direction, which
    makes the pair set symmetric under swapping the two sides.
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    if not src or not tgt:
        return CorrespondenceSet(np.zeros((0, 2)), np.zeros((0, 2)))

    s = np.vstack([d for _, d in src]).astype(np.float64)
    t = np.vstack([d for _, d in tgt]).astype(np.float64)
    if s.shape[1] != t.shape[1]:
        raise ValueError(f"descriptor lengths differ: {s.shape[1]} vs {t.shape[1]}")

    sq = np.sum(s * s, axis=1)[:, None] + np.sum(t * t, axis=1)[None, :] - 2.0 * (s @ t.T)
    dist = np.sqrt(np.clip(sq, 0.0, None))

    src_pts, tgt_pts = [], []
    for i in range(len(src)):
        j = int(np.argmin(dist[i]))
        if not _ratio_pass(dist[i], j, ratio):
            continue
        if cross_check:
            if int(np.argmin(dist[:, j])) != i:
                continue
            if not _ratio_pass(dist[:, j], i, ratio):
                continue
        src_pts.append((src[i][0].x, src[i][0].y))
        tgt_pts.append((tgt[j][0].x, tgt[j][0].y))

    if not src_pts:
        return CorrespondenceSet(np.zeros((0, 2)), np.zeros((0, 2)))
    return CorrespondenceSet(np.asarray(src_pts), np.asarray(tgt_pts))
