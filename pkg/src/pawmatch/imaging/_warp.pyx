# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled raster warp kernels.

Mirrors pawmatch.imaging._warp_py expression for expression; the two
backends must stay byte-identical (see tests/test_kernels.py).
"""

from libc.math cimport floor

import numpy as np

BACKEND = "cython"


cdef inline unsigned char _round_u8(double val) nogil:
    cdef double r = floor(val + 0.5)
    if r < 0.0:
        r = 0.0
    elif r > 255.0:
        r = 255.0
    return <unsigned char> r


def resize_bilinear(const unsigned char[:, :, ::1] src, int out_h, int out_w):
    """Resize an (h, w, 3) uint8 image with edge-clamped bilinear sampling."""
    cdef int h = src.shape[0]
    cdef int w = src.shape[1]
    cdef double scale_y = h / <double> out_h
    cdef double scale_x = w / <double> out_w

    out_arr = np.empty((out_h, out_w, 3), dtype=np.uint8)
    cdef unsigned char[:, :, ::1] out = out_arr

    cdef int x, y, c, y0i, y1i, x0i, x1i
    cdef double sy, sx, y0, x0, fy, fx
    cdef double wy0, wy1, wx0, wx1, w00, w01, w10, w11, val

    with nogil:
        for y in range(out_h):
            sy = (y + 0.5) * scale_y - 0.5
            y0 = floor(sy)
            fy = sy - y0
            y0i = <int> y0
            y1i = y0i + 1
            if y0i < 0:
                y0i = 0
            elif y0i > h - 1:
                y0i = h - 1
            if y1i < 0:
                y1i = 0
            elif y1i > h - 1:
                y1i = h - 1
            wy0 = 1.0 - fy
            wy1 = fy
            for x in range(out_w):
                sx = (x + 0.5) * scale_x - 0.5
                x0 = floor(sx)
                fx = sx - x0
                x0i = <int> x0
                x1i = x0i + 1
                if x0i < 0:
                    x0i = 0
                elif x0i > w - 1:
                    x0i = w - 1
                if x1i < 0:
                    x1i = 0
                elif x1i > w - 1:
                    x1i = w - 1
                wx0 = 1.0 - fx
                wx1 = fx
                w00 = wy0 * wx0
                w01 = wy0 * wx1
                w10 = wy1 * wx0
                w11 = wy1 * wx1
                for c in range(3):
                    val = (w00 * <double> src[y0i, x0i, c]
                           + w01 * <double> src[y0i, x1i, c]
                           + w10 * <double> src[y1i, x0i, c]
                           + w11 * <double> src[y1i, x1i, c])
                    out[y, x, c] = _round_u8(val)
    return out_arr


def affine_bilinear(const unsigned char[:, :, ::1] src,
                    double m00, double m01, double m02,
                    double m10, double m11, double m12):
    """Warp by an output-to-input affine map; out-of-bounds samples are black."""
    cdef int h = src.shape[0]
    cdef int w = src.shape[1]

    out_arr = np.empty((h, w, 3), dtype=np.uint8)
    cdef unsigned char[:, :, ::1] out = out_arr

    cdef int x, y, c, x0i, y0i, x1i, y1i
    cdef double xc, yc, u, v, sx, sy, x0, y0, fx, fy
    cdef double wy0, wx0, w00, w01, w10, w11, val
    cdef double p00, p01, p10, p11
    cdef bint in00, in01, in10, in11

    with nogil:
        for y in range(h):
            yc = y + 0.5
            for x in range(w):
                xc = x + 0.5
                u = m00 * xc + m01 * yc + m02
                v = m10 * xc + m11 * yc + m12
                sx = u - 0.5
                sy = v - 0.5
                x0 = floor(sx)
                y0 = floor(sy)
                fx = sx - x0
                fy = sy - y0
                x0i = <int> x0
                y0i = <int> y0
                x1i = x0i + 1
                y1i = y0i + 1
                in00 = 0 <= y0i < h and 0 <= x0i < w
                in01 = 0 <= y0i < h and 0 <= x1i < w
                in10 = 0 <= y1i < h and 0 <= x0i < w
                in11 = 0 <= y1i < h and 0 <= x1i < w
                wy0 = 1.0 - fy
                wx0 = 1.0 - fx
                w00 = wy0 * wx0
                w01 = wy0 * fx
                w10 = fy * wx0
                w11 = fy * fx
                for c in range(3):
                    p00 = <double> src[y0i, x0i, c] if in00 else 0.0
                    p01 = <double> src[y0i, x1i, c] if in01 else 0.0
                    p10 = <double> src[y1i, x0i, c] if in10 else 0.0
                    p11 = <double> src[y1i, x1i, c] if in11 else 0.0
                    val = w00 * p00 + w01 * p01 + w10 * p10 + w11 * p11
                    out[y, x, c] = _round_u8(val)
    return out_arr
