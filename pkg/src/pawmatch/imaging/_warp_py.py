"""Vectorized numpy implementations of the raster warp kernels.

This is the fallback used when the compiled extension is unavailable.
Both backends evaluate the same IEEE-754 double expressions in the same
order, so their outputs are byte-identical; tests assert this parity.

Sampling convention (shared with the compiled kernels): pixel centers sit
at integer coordinates ``i + 0.5`` in continuous space, bilinear weights
come from the fractional part of the source coordinate, and the result is
rounded half-up to uint8.
"""

from __future__ import annotations

import numpy as np

BACKEND = "numpy"


def resize_bilinear(src: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize an (h, w, 3) uint8 image with edge-clamped bilinear sampling."""
    h, w = src.shape[0], src.shape[1]
    scale_y = h / out_h
    scale_x = w / out_w

    sy = (np.arange(out_h, dtype=np.float64) + 0.5) * scale_y - 0.5
    sx = (np.arange(out_w, dtype=np.float64) + 0.5) * scale_x - 0.5
    y0 = np.floor(sy)
    x0 = np.floor(sx)
    fy = sy - y0
    fx = sx - x0

    y0i = np.clip(y0.astype(np.intp), 0, h - 1)
    y1i = np.clip(y0.astype(np.intp) + 1, 0, h - 1)
    x0i = np.clip(x0.astype(np.intp), 0, w - 1)
    x1i = np.clip(x0.astype(np.intp) + 1, 0, w - 1)

    pix = src.astype(np.float64)
    p00 = pix[y0i[:, None], x0i[None, :]]
    p01 = pix[y0i[:, None], x1i[None, :]]
    p10 = pix[y1i[:, None], x0i[None, :]]
    p11 = pix[y1i[:, None], x1i[None, :]]

    wy0 = 1.0 - fy
    wy1 = fy
    wx0 = 1.0 - fx
    wx1 = fx
    w00 = (wy0[:, None] * wx0[None, :])[:, :, None]
    w01 = (wy0[:, None] * wx1[None, :])[:, :, None]
    w10 = (wy1[:, None] * wx0[None, :])[:, :, None]
    w11 = (wy1[:, None] * wx1[None, :])[:, :, None]

    val = w00 * p00 + w01 * p01 + w10 * p10 + w11 * p11
    out = np.floor(val + 0.5)
    return np.clip(out, 0.0, 255.0).astype(np.uint8)


def affine_bilinear(
    src: np.ndarray,
    m00: float,
    m01: float,
    m02: float,
    m10: float,
    m11: float,
    m12: float,
) -> np.ndarray:
    """Warp an (h, w, 3) uint8 image by an output-to-input affine map.

    The matrix maps output pixel centers to input continuous coordinates:
    ``u = m00*(x+0.5) + m01*(y+0.5) + m02`` (and v likewise). Samples that
    fall outside the source contribute black, so exposed area is filled
    with black. Output dimensions equal input dimensions.
    """
    h, w = src.shape[0], src.shape[1]
    xc = np.arange(w, dtype=np.float64) + 0.5
    yc = np.arange(h, dtype=np.float64) + 0.5

    u = m00 * xc[None, :] + m01 * yc[:, None] + m02
    v = m10 * xc[None, :] + m11 * yc[:, None] + m12
    sx = u - 0.5
    sy = v - 0.5

    x0 = np.floor(sx)
    y0 = np.floor(sy)
    fx = sx - x0
    fy = sy - y0
    x0i = x0.astype(np.intp)
    y0i = y0.astype(np.intp)
    x1i = x0i + 1
    y1i = y0i + 1

    pix = src.astype(np.float64)

    def gather(yi: np.ndarray, xi: np.ndarray) -> np.ndarray:
        inside = (yi >= 0) & (yi < h) & (xi >= 0) & (xi < w)
        yic = np.clip(yi, 0, h - 1)
        xic = np.clip(xi, 0, w - 1)
        return np.where(inside[:, :, None], pix[yic, xic], 0.0)

    p00 = gather(y0i, x0i)
    p01 = gather(y0i, x1i)
    p10 = gather(y1i, x0i)
    p11 = gather(y1i, x1i)

    wy0 = 1.0 - fy
    wx0 = 1.0 - fx
    w00 = (wy0 * wx0)[:, :, None]
    w01 = (wy0 * fx)[:, :, None]
    w10 = (fy * wx0)[:, :, None]
    w11 = (fy * fx)[:, :, None]

    val = w00 * p00 + w01 * p01 + w10 * p10 + w11 * p11
    out = np.floor(val + 0.5)
    return np.clip(out, 0.0, 255.0).astype(np.uint8)
