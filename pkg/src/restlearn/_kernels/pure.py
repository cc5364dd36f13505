"""Numpy fallback implementations of the hot kernels.

The compiled module in ``_native.pyx`` implements the same three functions
with identical numerics (same interpolation weight order, same coordinate
snapping), so either backend can serve the rest of the package.
"""

import numpy as np

# Source coordinates within this distance of an integer are snapped to it so
# that exact-identity and integer-translation warps gather pixels bit-exactly
# instead of blending across a ~1e-16 rounding residue.
SNAP_EPS = 1e-9


def affine_sample(images, mats):
    """Bilinear resample a batch of images through per-image affine maps.

    images: (N, H, W, C) float64.
    mats:   (N, 2, 3) float64; output pixel (x=col, y=row) maps to the source
            location (m00*x + m01*y + m02, m10*x + m11*y + m12).
    Returns (N, H, W, C); source locations outside the grid contribute zero.
    """
    images = np.ascontiguousarray(images, dtype=np.float64)
    n, h, w, c = images.shape
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)  # (H, W) each

    m = np.asarray(mats, dtype=np.float64)
    # (N, H, W) source coordinates
    sx = m[:, 0, 0, None, None] * gx + m[:, 0, 1, None, None] * gy + m[:, 0, 2, None, None]
    sy = m[:, 1, 0, None, None] * gx + m[:, 1, 1, None, None] * gy + m[:, 1, 2, None, None]

    rx = np.round(sx)
    ry = np.round(sy)
    sx = np.where(np.abs(sx - rx) < SNAP_EPS, rx, sx)
    sy = np.where(np.abs(sy - ry) < SNAP_EPS, ry, sy)

    x0 = np.floor(sx)
    y0 = np.floor(sy)
    fx = sx - x0
    fy = sy - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    x1 = x0 + 1
    y1 = y0 + 1

    w00 = (1.0 - fy) * (1.0 - fx)
    w01 = (1.0 - fy) * fx
    w10 = fy * (1.0 - fx)
    w11 = fy * fx

    def gather(yy, xx):
        inside = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
        xc = np.clip(xx, 0, w - 1)
        yc = np.clip(yy, 0, h - 1)
        ni = np.arange(n)[:, None, None]
        vals = images[ni, yc, xc, :]  # (N, H, W, C)
        return vals * inside[..., None]

    out = (
        w00[..., None] * gather(y0, x0)
        + w01[..., None] * gather(y0, x1)
        + w10[..., None] * gather(y1, x0)
        + w11[..., None] * gather(y1, x1)
    )
    return out


def im2col(x, kh, kw):
    """Unfold (N, C, H, W) into patch rows for stride-1 valid convolution.

    Returns (N*oh*ow, C*kh*kw) with oh = H-kh+1, ow = W-kw+1; row r holds the
    receptive field of output position (r // (oh*ow) picks the image).
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    n, c, h, w = x.shape
    oh = h - kh + 1
    ow = w - kw + 1
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    # (N, C, oh, ow, kh, kw) -> (N, oh, ow, C, kh, kw)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    return np.ascontiguousarray(cols)


def col2im(cols, n, c, h, w, kh, kw):
    """Fold patch-row gradients back onto the (N, C, H, W) input grid.

    Adjoint of :func:`im2col`: overlapping patch contributions accumulate.
    """
    oh = h - kh + 1
    ow = w - kw + 1
    cols = np.asarray(cols, dtype=np.float64).reshape(n, oh, ow, c, kh, kw)
    out = np.zeros((n, c, h, w), dtype=np.float64)
    for di in range(kh):
        for dj in range(kw):
            out[:, :, di : di + oh, dj : dj + ow] += cols[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
    return out
