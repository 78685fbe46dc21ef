"""Implementations of the augmentation image operations.

Magnitude levels 0-9 map linearly onto per-kind physical ranges via
``MAGNITUDE_RANGES`` (value = level / 9 * max), mirroring the standard
auto-augmentation reference ranges:

=============  =========================================  =======
kind           physical meaning                           level 9
=============  =========================================  =======
ShearX/Y       shear factor                               0.3
TranslateX/Y   fraction of width/height                   150/331
Rotate         degrees                                    30
Color          saturation blend delta (factor = 1 +/- v)  0.9
Brightness     brightness blend delta                     0.9
Sharpness      sharpness blend delta                      0.9
Contrast       contrast blend delta                       0.9
Posterize      bits removed (8 - round(level * 4 / 9))    4 bits
Solarize       invert threshold 255 * (1 - level / 9)     0
=============  =========================================  =======

AutoContrast, Equalize, and Invert take no magnitude. Geometric kinds fill
exposed area with black and never change image dimensions.
"""

from __future__ import annotations

import math

import numpy as np

from ..rng import SplitMix64
from . import kernels
from .raster import ImageTensor

SHEAR_MAX = 0.3
TRANSLATE_MAX_FRAC = 150.0 / 331.0
ROTATE_MAX_DEG = 30.0
ENHANCE_MAX = 0.9

GEOMETRIC_KINDS = frozenset({"ShearX", "ShearY", "TranslateX", "TranslateY", "Rotate"})
SIGNED_KINDS = GEOMETRIC_KINDS | {"Color", "Brightness", "Sharpness", "Contrast"}
OP_KINDS = SIGNED_KINDS | {"Posterize", "Solarize", "AutoContrast", "Equalize", "Invert"}


def _level_value(level: int, maximum: float) -> float:
    return maximum * level / 9.0


def _to_u8(vals: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(vals + 0.5), 0.0, 255.0).astype(np.uint8)


def _blend(degenerate: np.ndarray, pixels: np.ndarray, factor: float) -> np.ndarray:
    """factor 0 -> degenerate, 1 -> original; computed in float64, rounded."""
    base = degenerate.astype(np.float64)
    val = base + factor * (pixels.astype(np.float64) - base)
    return _to_u8(val)


def _luminance(pixels: np.ndarray) -> np.ndarray:
    p = pixels.astype(np.float64)
    return (299.0 * p[:, :, 0] + 587.0 * p[:, :, 1] + 114.0 * p[:, :, 2]) / 1000.0


def invert(img: ImageTensor) -> ImageTensor:
    return ImageTensor(255 - img.pixels)


def solarize(img: ImageTensor, threshold: float) -> ImageTensor:
    p = img.pixels
    return ImageTensor(np.where(p >= threshold, 255 - p, p))


def posterize(img: ImageTensor, bits: int) -> ImageTensor:
    mask = np.uint8((0xFF << (8 - bits)) & 0xFF)
    return ImageTensor(img.pixels & mask)


def autocontrast(img: ImageTensor) -> ImageTensor:
    """Stretch each channel's occupied range to [0, 255]; flat channels pass through."""
    out = img.pixels.copy()
    for c in range(3):
        ch = img.pixels[:, :, c]
        lo = int(ch.min())
        hi = int(ch.max())
        if hi <= lo:
            continue
        scale = 255.0 / (hi - lo)
        lut = _to_u8((np.arange(256, dtype=np.float64) - lo) * scale)
        out[:, :, c] = lut[ch]
    return ImageTensor(out)


def equalize(img: ImageTensor) -> ImageTensor:
    """Classic integer histogram equalization, applied per channel.

    A channel whose histogram occupies a single level, or whose step size
    floors to zero, is returned unchanged.
    """
    out = img.pixels.copy()
    for c in range(3):
        ch = img.pixels[:, :, c]
        hist = np.bincount(ch.reshape(-1), minlength=256).astype(np.int64)
        nonzero = hist[hist > 0]
        if len(nonzero) <= 1:
            continue
        step = (int(hist.sum()) - int(nonzero[-1])) // 255
        if step == 0:
            continue
        cumulative = np.concatenate(([0], np.cumsum(hist)[:-1]))
        lut = np.minimum((step // 2 + cumulative) // step, 255).astype(np.uint8)
        out[:, :, c] = lut[ch]
    return ImageTensor(out)


def adjust_color(img: ImageTensor, factor: float) -> ImageTensor:
    gray = _luminance(img.pixels)[:, :, None].repeat(3, axis=2)
    return ImageTensor(_blend(gray, img.pixels, factor))


def adjust_brightness(img: ImageTensor, factor: float) -> ImageTensor:
    return ImageTensor(_blend(np.zeros_like(img.pixels, dtype=np.float64), img.pixels, factor))


def adjust_contrast(img: ImageTensor, factor: float) -> ImageTensor:
    mean = float(_luminance(img.pixels).mean())
    degenerate = np.full(img.pixels.shape, mean, dtype=np.float64)
    return ImageTensor(_blend(degenerate, img.pixels, factor))


def adjust_sharpness(img: ImageTensor, factor: float) -> ImageTensor:
    """Blend against a 3x3 smoothed copy; the 1-pixel border stays original."""
    p = img.pixels.astype(np.float64)
    smoothed = p.copy()
    if img.height >= 3 and img.width >= 3:
        smoothed[1:-1, 1:-1] = (
            p[:-2, :-2] + p[:-2, 1:-1] + p[:-2, 2:]
            + p[1:-1, :-2] + 5.0 * p[1:-1, 1:-1] + p[1:-1, 2:]
            + p[2:, :-2] + p[2:, 1:-1] + p[2:, 2:]
        ) / 13.0
    return ImageTensor(_blend(smoothed, img.pixels, factor))


def shear_x(img: ImageTensor, factor: float) -> ImageTensor:
    return ImageTensor(kernels.affine_bilinear(img.pixels, 1.0, factor, 0.0, 0.0, 1.0, 0.0))


def shear_y(img: ImageTensor, factor: float) -> ImageTensor:
    return ImageTensor(kernels.affine_bilinear(img.pixels, 1.0, 0.0, 0.0, factor, 1.0, 0.0))


def translate_x(img: ImageTensor, pixels: float) -> ImageTensor:
    return ImageTensor(kernels.affine_bilinear(img.pixels, 1.0, 0.0, pixels, 0.0, 1.0, 0.0))


def translate_y(img: ImageTensor, pixels: float) -> ImageTensor:
    return ImageTensor(kernels.affine_bilinear(img.pixels, 1.0, 0.0, 0.0, 0.0, 1.0, pixels))


def rotate(img: ImageTensor, degrees: float) -> ImageTensor:
    """Rotate content about the image center, exposing black corners."""
    a = math.radians(degrees)
    cos_a, sin_a = math.cos(a), math.sin(a)
    cx, cy = img.width / 2.0, img.height / 2.0
    m02 = cx - cos_a * cx + sin_a * cy
    m12 = cy - sin_a * cx - cos_a * cy
    return ImageTensor(
        kernels.affine_bilinear(img.pixels, cos_a, -sin_a, m02, sin_a, cos_a, m12)
    )


def apply_op(img: ImageTensor, kind: str, magnitude: int, rng: SplitMix64) -> ImageTensor:
    """Apply one operation at the given magnitude level.

    Signed kinds draw one sign bit from ``rng``; unsigned kinds draw nothing.
    """
    if kind not in OP_KINDS:
        raise ValueError(f"unknown op kind {kind!r}")
    if not 0 <= magnitude <= 9:
        raise ValueError(f"magnitude level must be in 0..9, got {magnitude}")

    sign = 1.0
    if kind in SIGNED_KINDS:
        sign = -1.0 if rng.below(2) == 1 else 1.0

    if kind == "ShearX":
        return shear_x(img, sign * _level_value(magnitude, SHEAR_MAX))
    if kind == "ShearY":
        return shear_y(img, sign * _level_value(magnitude, SHEAR_MAX))
    if kind == "TranslateX":
        return translate_x(img, sign * _level_value(magnitude, TRANSLATE_MAX_FRAC) * img.width)
    if kind == "TranslateY":
        return translate_y(img, sign * _level_value(magnitude, TRANSLATE_MAX_FRAC) * img.height)
    if kind == "Rotate":
        return rotate(img, sign * _level_value(magnitude, ROTATE_MAX_DEG))
    if kind == "Color":
        return adjust_color(img, 1.0 + sign * _level_value(magnitude, ENHANCE_MAX))
    if kind == "Brightness":
        return adjust_brightness(img, 1.0 + sign * _level_value(magnitude, ENHANCE_MAX))
    if kind == "Sharpness":
        return adjust_sharpness(img, 1.0 + sign * _level_value(magnitude, ENHANCE_MAX))
    if kind == "Contrast":
        return adjust_contrast(img, 1.0 + sign * _level_value(magnitude, ENHANCE_MAX))
    if kind == "Posterize":
        return posterize(img, 8 - int(magnitude * 4.0 / 9.0 + 0.5))
    if kind == "Solarize":
        return solarize(img, 255.0 * (1.0 - magnitude / 9.0))
    if kind == "AutoContrast":
        return autocontrast(img)
    if kind == "Equalize":
        return equalize(img)
    return invert(img)
