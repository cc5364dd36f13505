# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels (see pure.py for the reference)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor, round

cnp.import_array()

cdef double SNAP_EPS = 1e-9


def affine_sample(images, mats):
    """Bilinear resample a batch through per-image affine maps (see pure.py)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=4] img = np.ascontiguousarray(images, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] m = np.ascontiguousarray(mats, dtype=np.float64)
    cdef Py_ssize_t n = img.shape[0], h = img.shape[1], w = img.shape[2], c = img.shape[3]
    cdef cnp.ndarray[cnp.float64_t, ndim=4] out = np.zeros((n, h, w, c), dtype=np.float64)

    cdef Py_ssize_t k, i, j, ch, x0, y0, x1, y1
    cdef double a00, a01, a02, a10, a11, a12
    cdef double sx, sy, rx, ry, fx, fy, w00, w01, w10, w11
    cdef double v00, v01, v10, v11

    for k in range(n):
        a00 = m[k, 0, 0]; a01 = m[k, 0, 1]; a02 = m[k, 0, 2]
        a10 = m[k, 1, 0]; a11 = m[k, 1, 1]; a12 = m[k, 1, 2]
        for i in range(h):
            for j in range(w):
                sx = a00 * j + a01 * i + a02
                sy = a10 * j + a11 * i + a12
                rx = round(sx)
                ry = round(sy)
                if sx - rx < SNAP_EPS and rx - sx < SNAP_EPS:
                    sx = rx
                if sy - ry < SNAP_EPS and ry - sy < SNAP_EPS:
                    sy = ry
                x0 = <Py_ssize_t>floor(sx)
                y0 = <Py_ssize_t>floor(sy)
                fx = sx - x0
                fy = sy - y0
                x1 = x0 + 1
                y1 = y0 + 1
                w00 = (1.0 - fy) * (1.0 - fx)
                w01 = (1.0 - fy) * fx
                w10 = fy * (1.0 - fx)
                w11 = fy * fx
                for ch in range(c):
                    v00 = img[k, y0, x0, ch] if (0 <= x0 < w and 0 <= y0 < h) else 0.0
                    v01 = img[k, y0, x1, ch] if (0 <= x1 < w and 0 <= y0 < h) else 0.0
                    v10 = img[k, y1, x0, ch] if (0 <= x0 < w and 0 <= y1 < h) else 0.0
                    v11 = img[k, y1, x1, ch] if (0 <= x1 < w and 0 <= y1 < h) else 0.0
                    out[k, i, j, ch] = w00 * v00 + w01 * v01 + w10 * v10 + w11 * v11
    return out


def im2col(x, Py_ssize_t kh, Py_ssize_t kw):
    """Unfold (N, C, H, W) into (N*oh*ow, C*kh*kw) patch rows."""
    cdef cnp.ndarray[cnp.float64_t, ndim=4] xx = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xx.shape[0], c = xx.shape[1], h = xx.shape[2], w = xx.shape[3]
    cdef Py_ssize_t oh = h - kh + 1, ow = w - kw + 1
    cdef cnp.ndarray[cnp.float64_t, ndim=2] cols = np.empty((n * oh * ow, c * kh * kw), dtype=np.float64)

    cdef Py_ssize_t k, i, j, ch, di, dj, row, col
    for k in range(n):
        for i in range(oh):
            for j in range(ow):
                row = (k * oh + i) * ow + j
                col = 0
                for ch in range(c):
                    for di in range(kh):
                        for dj in range(kw):
                            cols[row, col] = xx[k, ch, i + di, j + dj]
                            col += 1
    return cols


def col2im(cols, Py_ssize_t n, Py_ssize_t c, Py_ssize_t h, Py_ssize_t w,
           Py_ssize_t kh, Py_ssize_t kw):
    """Fold patch-row gradients back onto the input grid (adjoint of im2col)."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] cc = np.ascontiguousarray(cols, dtype=np.float64)
    cdef Py_ssize_t oh = h - kh + 1, ow = w - kw + 1
    cdef cnp.ndarray[cnp.float64_t, ndim=4] out = np.zeros((n, c, h, w), dtype=np.float64)

    cdef Py_ssize_t k, i, j, ch, di, dj, row, col
    for k in range(n):
        for i in range(oh):
            for j in range(ow):
                row = (k * oh + i) * ow + j
                col = 0
                for ch in range(c):
                    for di in range(kh):
                        for dj in range(kw):
                            out[k, ch, i + di, j + dj] += cc[row, col]
                            col += 1
    return out
