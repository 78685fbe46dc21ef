"""Core raster types and pure image operations.

An :class:`ImageTensor` is an RGB raster stored row-major as 8-bit samples.
All operations here are pure functions; none mutate their inputs.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..errors import BoundsError, FormatError
from . import kernels


@dataclass(frozen=True)
class ImageTensor:
    """RGB image: ``pixels`` is an (height, width, 3) C-contiguous uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3 or p.dtype != np.uint8:
            raise ValueError(f"expected (h, w, 3) uint8 array, got {p.shape} {p.dtype}")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if not p.flags["C_CONTIGUOUS"]:
            object.__setattr__(self, "pixels", np.ascontiguousarray(p))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @staticmethod
    def full(width: int, height: int, value: int = 0) -> "ImageTensor":
        return ImageTensor(np.full((height, width, 3), value, dtype=np.uint8))


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned detection box in pixel coordinates."""

    x: int
    y: int
    w: int
    h: int
    label: str = ""
    confidence: float = 1.0

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"box sides must be >= 1, got {self.w}x{self.h}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


def load_image(source: str | Path | bytes) -> ImageTensor:
    """Decode a PNG or JPEG file (path or raw bytes) into an ImageTensor."""
    try:
        if isinstance(source, bytes):
            img = Image.open(io.BytesIO(source))
        else:
            img = Image.open(source)
        rgb = img.convert("RGB")
    except (UnidentifiedImageError, OSError) as exc:
        raise FormatError(f"cannot decode image: {exc}") from exc
    return ImageTensor(np.asarray(rgb, dtype=np.uint8))


def save_png(img: ImageTensor, path: str | Path) -> None:
    Image.fromarray(img.pixels, mode="RGB").save(path, format="PNG")


def encode_png(img: ImageTensor) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(img.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def crop(img: ImageTensor, box: BoundingBox) -> ImageTensor:
    """Copy the pixels under ``box``; the box must lie fully inside the image."""
    if box.x < 0 or box.y < 0 or box.x + box.w > img.width or box.y + box.h > img.height:
        raise BoundsError(
            f"box {box.x},{box.y},{box.w}x{box.h} exceeds image {img.width}x{img.height}"
        )
    return ImageTensor(img.pixels[box.y : box.y + box.h, box.x : box.x + box.w].copy())


def fit_square(img: ImageTensor, side: int) -> ImageTensor:
    """Scale onto a side x side black canvas, preserving aspect ratio.

    The longest source side maps exactly to ``side`` (bilinear resampling);
    the result is centered and the leftover canvas stays black. When padding
    is odd, the extra pixel goes to the bottom/right.
    """
    if side < 1:
        raise ValueError(f"side must be >= 1, got {side}")
    w, h = img.width, img.height
    if w >= h:
        new_w = side
        new_h = max(1, round(h * side / w))
    else:
        new_h = side
        new_w = max(1, round(w * side / h))

    if (new_w, new_h) == (w, h):
        content = img.pixels
    else:
        content = kernels.resize_bilinear(img.pixels, new_h, new_w)

    if (new_w, new_h) == (side, side):
        return ImageTensor(content.copy() if content is img.pixels else content)

    canvas = np.zeros((side, side, 3), dtype=np.uint8)
    x0 = (side - new_w) // 2
    y0 = (side - new_h) // 2
    canvas[y0 : y0 + new_h, x0 : x0 + new_w] = content
    return ImageTensor(canvas)


def to_model_input(img: ImageTensor, dtype=np.float32) -> np.ndarray:
    """Scale a square image to an (side, side, 3) float tensor in [0, 1].

    No mean/std standardization is applied; the model consumes raw [0, 1].
    """
    if img.width != img.height:
        raise ValueError(f"model input must be square, got {img.width}x{img.height}")
    arr = img.pixels.astype(dtype)
    return arr / arr.dtype.type(255)
