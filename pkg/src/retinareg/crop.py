"""Macula-centered cropping of the wide-field target image.

The crop is a square centered on the macula whose side is twice the
distance from the macular center to the outer edge of the optic-disc
region; it trims the target to a field of view comparable to the
small-FoV source before keypoint matching. Detection of the two
landmark boxes is an upstream concern: they arrive as JSON sidecars.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .raster import as_image

ROI_LABELS = ("macula", "optic_disc")


@dataclass(frozen=True)
class RoiBox:
    """Axis-aligned landmark box in full target-image pixel coordinates."""

    label: str
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if self.label not in ROI_LABELS:
            raise ValueError(f"label must be one of {ROI_LABELS}, got {self.label!r}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box [{self.x_min},{self.y_min},{self.x_max},{self.y_max}]")

    @property
    def center(self) -> tuple[float, float]:
        return (self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0

    @property
    def corners(self) -> np.ndarray:
        return np.array([(self.x_min, self.y_min), (self.x_max, self.y_min),
                         (self.x_max, self.y_max), (self.x_min, self.y_max)])


@dataclass(frozen=True)
class CropFrame:
    """Square sub-window of the full target frame."""

    center: tuple[float, float]
    side: int
    origin: tuple[int, int]

    def __post_init__(self):
        if self.side < 1:
            raise ValueError(f"side must be >= 1, got {self.side}")


def load_rois(path) -> tuple[RoiBox, RoiBox]:
    """Read the {"macula": [...], "optic_disc": [...]} sidecar JSON."""
    doc = json.loads(Path(path).read_text())
    try:
        macula = RoiBox("macula", *(float(v) for v in doc["macula"]))
        od = RoiBox("optic_disc", *(float(v) for v in doc["optic_disc"]))
    except KeyError as exc:
        raise ValueError(f"{path}: missing ROI entry {exc}") from exc
    return macula, od


def save_rois(path, macula: RoiBox, od: RoiBox) -> None:
    doc = {"macula": [macula.x_min, macula.y_min, macula.x_max, macula.y_max],
           "optic_disc": [od.x_min, od.y_min, od.x_max, od.y_max]}
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True))


def compute_crop(macula: RoiBox, od: RoiBox, image_w: int, image_h: int,
                 radius_mode: str = "farthest_corner") -> CropFrame:
    """Square crop centered on the macula, sized from the optic-disc box.

    ``radius_mode`` selects how "distance to the outer edge of the
    optic-disc region" is read: ``farthest_corner`` takes the OD box
    corner farthest from the macular center (default), ``along_axis``
    the farthest corner projection onto the macula-to-OD-center axis.
    The square (side = round(2 * distance)) is translated to fit the
    image and only shrunk when it exceeds an image dimension.
    """
    if macula.label != "macula" or od.label != "optic_disc":
        raise ValueError(f"box labels are ({macula.label!r}, {od.label!r}), expected (macula, optic_disc)")
    if radius_mode not in ("farthest_corner", "along_axis"):
        raise ValueError(f"unknown radius_mode {radius_mode!r}")
    cx, cy = macula.center
    if not (0 <= cx < image_w and 0 <= cy < image_h):
        raise ValueError(f"macula center ({cx}, {cy}) outside {image_w}x{image_h} image")

    deltas = od.corners - np.array([cx, cy])
    if radius_mode == "farthest_corner":
        distance = float(np.max(np.hypot(deltas[:, 0], deltas[:, 1])))
    else:
        ox, oy = od.center
        axis = np.array([ox - cx, oy - cy])
        norm = np.hypot(*axis)
        if norm == 0:
            raise ValueError("macula and optic-disc centers coincide")
        distance = float(np.max(deltas @ (axis / norm)))

    side = int(np.floor(2.0 * distance + 0.5))
    if side < 1:
        raise ValueError("optic-disc region degenerates onto the macular center")
    side = min(side, int(image_w), int(image_h))

    def clamp_origin(c: float, dim: int) -> int:
        ideal = int(np.floor(c - side / 2.0 + 0.5))
        return min(max(ideal, 0), dim - side)

    return CropFrame(center=(cx, cy), side=side,
                     origin=(clamp_origin(cx, int(image_w)), clamp_origin(cy, int(image_h))))


def extract(img: np.ndarray, frame: CropFrame) -> np.ndarray:
    """Copy out the ``side`` x ``side`` window at the frame origin."""
    img = as_image(img)
    x0, y0 = frame.origin
    if x0 < 0 or y0 < 0 or y0 + frame.side > img.shape[0] or x0 + frame.side > img.shape[1]:
        raise ValueError(f"crop frame {frame} exceeds image of shape {img.shape}")
    return img[y0:y0 + frame.side, x0:x0 + frame.side].copy()


def lift_to_full(pt, frame: CropFrame):
    """Crop-frame (x, y) -> full-frame coordinates. Works on (N, 2) arrays too."""
    offset = np.asarray(frame.origin, dtype=np.float64)
    return np.asarray(pt, dtype=np.float64) + offset


def lower_to_crop(pt, frame: CropFrame):
    """Full-frame (x, y) -> crop-frame coordinates; inverse of lift_to_full."""
    offset = np.asarray(frame.origin, dtype=np.float64)
    return np.asarray(pt, dtype=np.float64) - offset
