"""Kernel-level tests: bilinear sampling and convolution patch folding.

Each kernel is checked against a naive per-pixel Python reference written
independently of the vectorized/compiled implementations, plus structural
properties (adjointness, padding, snapping).
"""

import numpy as np
import pytest

from restlearn._kernels import pure

BACKENDS = [pytest.param(pure, id="pure")]
try:
    from restlearn._kernels import _native

    BACKENDS.append(pytest.param(_native, id="native"))
except ImportError:
    _native = None


def naive_affine_sample(images, mats):
    """Per-pixel reference for affine_sample, same conventions, loop form."""
    images = np.asarray(images, dtype=np.float64)
    mats = np.asarray(mats, dtype=np.float64)
    n, h, w, c = images.shape
    out = np.zeros((n, h, w, c))
    for i in range(n):
        m = mats[i]
        for r in range(h):
            for col in range(w):
                sx = m[0, 0] * col + m[0, 1] * r + m[0, 2]
                sy = m[1, 0] * col + m[1, 1] * r + m[1, 2]
                if abs(sx - round(sx)) < pure.SNAP_EPS:
                    sx = round(sx)
                if abs(sy - round(sy)) < pure.SNAP_EPS:
                    sy = round(sy)
                x0, y0 = int(np.floor(sx)), int(np.floor(sy))
                fx, fy = sx - x0, sy - y0
                acc = np.zeros(c)
                for dy, dx, wgt in (
                    (0, 0, (1.0 - fy) * (1.0 - fx)),
                    (0, 1, (1.0 - fy) * fx),
                    (1, 0, fy * (1.0 - fx)),
                    (1, 1, fy * fx),
                ):
                    yy, xx = y0 + dy, x0 + dx
                    if 0 <= yy < h and 0 <= xx < w:
                        acc = acc + wgt * images[i, yy, xx]
                out[i, r, col] = acc
    return out


def naive_im2col(x, kh, kw):
    n, c, h, w = x.shape
    oh, ow = h - kh + 1, w - kw + 1
    rows = []
    for i in range(n):
        for r in range(oh):
            for col in range(ow):
                rows.append(x[i, :, r : r + kh, col : col + kw].ravel())
    return np.array(rows)


@pytest.mark.parametrize("backend", BACKENDS)
def test_affine_sample_matches_naive_reference(backend):
    rng = np.random.default_rng(101)
    images = rng.random((3, 9, 8, 2))
    mats = rng.normal(scale=0.8, size=(3, 2, 3))
    mats[:, 0, 0] += 1.0
    mats[:, 1, 1] += 1.0
    got = backend.affine_sample(images, mats)
    want = naive_affine_sample(images, mats)
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-14)


@pytest.mark.parametrize("backend", BACKENDS)
def test_affine_sample_identity_is_bit_exact(backend):
    rng = np.random.default_rng(7)
    images = rng.random((2, 11, 13, 1))
    eye = np.tile(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]), (2, 1, 1))
    assert np.array_equal(backend.affine_sample(images, eye), images)


@pytest.mark.parametrize("backend", BACKENDS)
def test_affine_sample_integer_shift_gathers_exactly(backend):
    rng = np.random.default_rng(8)
    images = rng.random((1, 10, 10, 1))
    mat = np.array([[[1.0, 0.0, 2.0], [0.0, 1.0, 3.0]]])
    out = backend.affine_sample(images, mat)
    # out[r, c] reads source (c+2, r+3); rows 7.. and cols 8.. fall outside
    assert np.array_equal(out[0, :7, :8], images[0, 3:, 2:])
    assert np.all(out[0, 7:, :] == 0.0)
    assert np.all(out[0, :, 8:] == 0.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_affine_sample_snaps_near_integer_coordinates(backend):
    rng = np.random.default_rng(9)
    images = rng.random((1, 6, 6, 1))
    # shift of 1 +/- 1e-12 must behave exactly like a shift of 1
    mat = np.array([[[1.0, 0.0, 1.0 + 1e-12], [0.0, 1.0, 1.0 - 1e-12]]])
    out = backend.affine_sample(images, mat)
    assert np.array_equal(out[0, :5, :5], images[0, 1:, 1:])


@pytest.mark.parametrize("backend", BACKENDS)
def test_affine_sample_outside_sources_contribute_zero(backend):
    images = np.ones((1, 5, 5, 1))
    mat = np.array([[[1.0, 0.0, 100.0], [0.0, 1.0, 0.0]]])
    assert np.all(backend.affine_sample(images, mat) == 0.0)
    # half-pixel overlap at the border blends with the zero exterior
    mat = np.array([[[1.0, 0.0, -0.5], [0.0, 1.0, 0.0]]])
    out = backend.affine_sample(images, mat)
    assert np.allclose(out[0, :, 0], 0.5)
    assert np.allclose(out[0, :, 1:], 1.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_im2col_matches_naive_reference(backend):
    rng = np.random.default_rng(11)
    x = rng.random((2, 3, 7, 6))
    got = backend.im2col(x, 3, 2)
    assert got.shape == (2 * 5 * 5, 3 * 3 * 2)
    assert np.array_equal(got, naive_im2col(x, 3, 2))


@pytest.mark.parametrize("backend", BACKENDS)
def test_col2im_is_adjoint_of_im2col(backend):
    # <im2col(x), g> == <x, col2im(g)> for all x, g defines the adjoint
    rng = np.random.default_rng(12)
    n, c, h, w, kh, kw = 2, 2, 8, 7, 3, 3
    x = rng.random((n, c, h, w))
    g = rng.random(((h - kh + 1) * (w - kw + 1) * n, c * kh * kw))
    lhs = float(np.sum(backend.im2col(x, kh, kw) * g))
    rhs = float(np.sum(x * backend.col2im(g, n, c, h, w, kh, kw)))
    assert lhs == pytest.approx(rhs, rel=1e-12)


@pytest.mark.parametrize("backend", BACKENDS)
def test_col2im_counts_overlapping_patches(backend):
    # folding all-ones gradients counts how many patches cover each pixel
    n, c, h, w, kh, kw = 1, 1, 5, 5, 3, 3
    g = np.ones(((h - kh + 1) * (w - kw + 1), kh * kw))
    out = backend.col2im(g, n, c, h, w, kh, kw)
    want = np.array(
        [
            [1, 2, 3, 2, 1],
            [2, 4, 6, 4, 2],
            [3, 6, 9, 6, 3],
            [2, 4, 6, 4, 2],
            [1, 2, 3, 2, 1],
        ],
        dtype=np.float64,
    )
    assert np.array_equal(out[0, 0], want)


@pytest.mark.skipif(_native is None, reason="compiled backend not built")
def test_backends_agree():
    rng = np.random.default_rng(13)
    images = rng.random((4, 12, 11, 2))
    mats = rng.normal(scale=0.7, size=(4, 2, 3))
    mats[:, 0, 0] += 1.0
    mats[:, 1, 1] += 1.0
    assert np.array_equal(
        pure.affine_sample(images, mats), _native.affine_sample(images, mats)
    )
    x = rng.random((3, 2, 9, 8))
    assert np.array_equal(pure.im2col(x, 3, 3), _native.im2col(x, 3, 3))
    g = rng.random((3 * 7 * 6, 2 * 3 * 3))
    np.testing.assert_allclose(
        pure.col2im(g, 3, 2, 9, 8, 3, 3),
        _native.col2im(g, 3, 2, 9, 8, 3, 3),
        rtol=0,
        atol=1e-12,
    )


def test_backend_selection_env_override():
    import restlearn._kernels as k

    assert k.BACKEND in ("pure", "native")
    assert callable(k.affine_sample)
