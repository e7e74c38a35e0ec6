"""Grayscale raster images and binary morphology.

Images are 2-D float64 numpy arrays with values in [0, 1], indexed
``img[row, col]`` (y first). Point coordinates everywhere else in the
package are ``(x, y)`` = ``(col, row)``. Binary images are ordinary
images whose values are exactly 0.0 or 1.0.

Morphology uses a zero-padded plane: out-of-bounds pixels count as 0
for both erosion's all-quantifier and dilation's any-quantifier, so
erosion shrinks foreground at the raster border.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from PIL import Image

# ITU-R BT.601 luma weights, used when a color file is loaded.
_LUMA = np.array([0.299, 0.587, 0.114])


class ImageFormatError(ValueError):
    """Raised for files in an unsupported or malformed raster format."""


def as_image(values) -> np.ndarray:
    """Validate and return ``values`` as a float64 image in [0, 1]."""
    img = np.asarray(values, dtype=np.float64)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    if not np.isfinite(img).all():
        raise ValueError("image contains non-finite values")
    if img.min() < 0.0 or img.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return img


def require_binary(img: np.ndarray) -> np.ndarray:
    """Return ``img`` as float64, raising unless every value is 0 or 1."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {img.shape}")
    if not ((img == 0.0) | (img == 1.0)).all():
        raise ValueError("expected a binary image with values in {0, 1}")
    return img


# ---------------------------------------------------------------------------
# File IO: grayscale PNG and binary PGM (P5), 8/16-bit read, 8-bit write.
# ---------------------------------------------------------------------------

def _read_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    # Header: magic, width, height, maxval as whitespace-separated tokens,
    # '#' comments allowed, then a single whitespace byte before the raster.
    tokens: list[bytes] = []
    i = 0
    while len(tokens) < 4:
        if i >= len(data):
            raise ImageFormatError(f"{path}: truncated PGM header")
        c = data[i:i + 1]
        if c == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace():
                j += 1
            tokens.append(data[i:j])
            i = j
    i += 1  # single whitespace after maxval
    if tokens[0] != b"P5":
        raise ImageFormatError(f"{path}: not a binary PGM (P5) file")
    width, height, maxval = (int(t) for t in tokens[1:4])
    if maxval <= 0 or maxval > 65535:
        raise ImageFormatError(f"{path}: bad PGM maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.uint8
    count = width * height
    raster = np.frombuffer(data, dtype=dtype, count=count, offset=i)
    if raster.size != count:
        raise ImageFormatError(f"{path}: truncated PGM raster")
    return raster.reshape(height, width).astype(np.float64) / maxval


def _write_pgm(path: Path, img: np.ndarray) -> None:
    quantized = np.rint(img * 255.0).astype(np.uint8)
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    path.write_bytes(header + quantized.tobytes())


def load_image(path) -> np.ndarray:
    """Load a grayscale raster, linearly rescaled to [0, 1].

    PNG and binary PGM (P5) are accepted, 8- or 16-bit. Color PNGs are
    converted to luminance. Raises ``FileNotFoundError`` for a missing
    file and ``ImageFormatError`` for anything unreadable as PNG/PGM.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        return _read_pgm(path)
    if suffix == ".png":
        try:
            with Image.open(path) as im:
                im.load()
                arr = np.asarray(im)
        except Exception as exc:
            raise ImageFormatError(f"{path}: unreadable PNG ({exc})") from exc
        if arr.ndim == 3:
            arr = arr[..., :3].astype(np.float64) @ _LUMA
            return np.clip(arr / 255.0, 0.0, 1.0)
        scale = 65535.0 if arr.dtype == np.uint16 else 255.0
        return arr.astype(np.float64) / scale
    raise ImageFormatError(f"{path}: unsupported format {suffix!r}")


def save_image(path, img: np.ndarray) -> None:
    """Write an image as 8-bit grayscale PNG or PGM, chosen by extension."""
    path = Path(path)
    img = as_image(img)
    suffix = path.suffix.lower()
    if suffix == ".pgm":
        _write_pgm(path, img)
    elif suffix == ".png":
        Image.fromarray(np.rint(img * 255.0).astype(np.uint8), "L").save(path)
    else:
        raise ImageFormatError(f"{path}: unsupported format {suffix!r}")


def save_rgb(path, rgb: np.ndarray) -> None:
    """Write an (H, W, 3) float array in [0, 1] as an 8-bit RGB PNG."""
    path = Path(path)
    if path.suffix.lower() != ".png":
        raise ImageFormatError(f"{path}: RGB output must be .png")
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) array, got shape {rgb.shape}")
    Image.fromarray(np.rint(np.clip(rgb, 0, 1) * 255.0).astype(np.uint8), "RGB").save(path)


# ---------------------------------------------------------------------------
# Thresholding and binary morphology.
# ---------------------------------------------------------------------------

def binarize(img: np.ndarray, threshold: float) -> np.ndarray:
    """Return a {0, 1} image: 1 where ``img >= threshold``."""
    img = as_image(img)
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    return (img >= threshold).astype(np.float64)


@dataclass(frozen=True)
class StructuringElement:
    """Symmetric morphology footprint: a square or cross of given radius."""

    radius: int = 1
    shape: str = "square"

    def __post_init__(self):
        if self.radius < 1 or int(self.radius) != self.radius:
            raise ValueError(f"radius must be an integer >= 1, got {self.radius}")
        if self.shape not in ("square", "cross"):
            raise ValueError(f"shape must be 'square' or 'cross', got {self.shape!r}")

    def footprint(self) -> np.ndarray:
        k = 2 * self.radius + 1
        if self.shape == "square":
            return np.ones((k, k), dtype=bool)
        fp = np.zeros((k, k), dtype=bool)
        fp[self.radius, :] = True
        fp[:, self.radius] = True
        return fp


def _windows(binary: np.ndarray, se: StructuringElement) -> np.ndarray:
    """(H, W, n_footprint) view of each pixel's zero-padded neighborhood."""
    r = se.radius
    padded = np.pad(binary.astype(bool), r, mode="constant", constant_values=False)
    view = sliding_window_view(padded, (2 * r + 1, 2 * r + 1))
    return view[:, :, se.footprint()]


def erode(img: np.ndarray, se: StructuringElement = StructuringElement()) -> np.ndarray:
    """Binary erosion: 1 iff every footprint pixel is 1 (out of bounds = 0)."""
    binary = require_binary(img)
    return _windows(binary, se).all(axis=-1).astype(np.float64)


def dilate(img: np.ndarray, se: StructuringElement = StructuringElement()) -> np.ndarray:
    """Binary dilation: 1 iff any footprint pixel is 1 (out of bounds = 0)."""
    binary = require_binary(img)
    return _windows(binary, se).any(axis=-1).astype(np.float64)


def opening(img: np.ndarray, se: StructuringElement = StructuringElement()) -> np.ndarray:
    """Erosion followed by dilation; removes detail thinner than the footprint."""
    return dilate(erode(img, se), se)
