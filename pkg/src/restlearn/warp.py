"""Factorized affine warps over [0,1]-intensity images.

A warp is parameterized by seven numbers: rotation angle in degrees, two
scale factors, two shear coefficients, and two translations in pixels. The
3x3 matrix is the product rotation @ scale @ shear @ translation, applied in
normalized coordinates (both axes span [-1, 1], x rightward, y upward) to
each output pixel to locate the source sample, which is then read with
bilinear interpolation and zero padding outside the grid.

Sign conventions, since the inverse-sampling direction makes them easy to
get backwards: a positive rotation angle turns image content clockwise on
screen; positive theta_t1 shifts content left; positive theta_t2 shifts
content down.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels


class InvalidParameterError(ValueError):
    """A warp parameter is non-finite or violates the action bounds."""


class InvalidInputError(ValueError):
    """An image is empty or too small to define the sampling grid."""


# Per-parameter (lower, upper) action bounds; rows follow the parameter
# order (rotation, scale1, scale2, shear1, shear2, translate1, translate2).
ACTION_BOUNDS = np.array(
    [
        [-30.0, 30.0],
        [0.9, 1.1],
        [0.9, 1.1],
        [-0.2, 0.2],
        [-0.2, 0.2],
        [-4.0, 4.0],
        [-4.0, 4.0],
    ]
)

_BOUNDS_MID = (ACTION_BOUNDS[:, 0] + ACTION_BOUNDS[:, 1]) / 2.0
_BOUNDS_HALF = (ACTION_BOUNDS[:, 1] - ACTION_BOUNDS[:, 0]) / 2.0

PARAM_NAMES = ("theta_r", "theta_sc1", "theta_sc2", "theta_sh1", "theta_sh2", "theta_t1", "theta_t2")


@dataclass(frozen=True)
class AffineParams:
    """The 7-parameter action: rotation (deg), scales, shears, translations (px)."""

    theta_r: float = 0.0
    theta_sc1: float = 1.0
    theta_sc2: float = 1.0
    theta_sh1: float = 0.0
    theta_sh2: float = 0.0
    theta_t1: float = 0.0
    theta_t2: float = 0.0

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_array(cls, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (7,):
            raise InvalidParameterError(f"expected 7 parameters, got shape {values.shape}")
        return cls(*(float(v) for v in values))

    def as_array(self):
        return np.array(
            [self.theta_r, self.theta_sc1, self.theta_sc2, self.theta_sh1,
             self.theta_sh2, self.theta_t1, self.theta_t2]
        )


def _validate_params(arr, check_bounds):
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError("affine parameters must be finite")
    if check_bounds:
        bad = (arr < ACTION_BOUNDS[:, 0]) | (arr > ACTION_BOUNDS[:, 1])
        if np.any(bad):
            names = [PARAM_NAMES[i] for i in np.nonzero(bad)[0]]
            raise InvalidParameterError(f"parameters outside action bounds: {', '.join(names)}")


def _factor_product(r_deg, sc1, sc2, sh1, sh2, t1, t2):
    a = np.deg2rad(r_deg)
    rot = np.array([[np.cos(a), -np.sin(a), 0.0], [np.sin(a), np.cos(a), 0.0], [0.0, 0.0, 1.0]])
    scale = np.array([[sc1, 0.0, 0.0], [0.0, sc2, 0.0], [0.0, 0.0, 1.0]])
    shear = np.array([[1.0, sh1, 0.0], [sh2, 1.0, 0.0], [0.0, 0.0, 1.0]])
    trans = np.array([[1.0, 0.0, t1], [0.0, 1.0, t2], [0.0, 0.0, 1.0]])
    return rot @ scale @ shear @ trans


def compose_affine(params, check_bounds=True):
    """Build the 3x3 homogeneous matrix rotation @ scale @ shear @ translation.

    Translations enter the matrix in whatever units ``params`` carries; the
    sampler converts pixels to normalized units before composing. Bounds
    checking can be disabled for deliberately out-of-bounds warps (dataset
    distortion uses wider ranges than the action space).
    """
    arr = params.as_array() if isinstance(params, AffineParams) else AffineParams.from_array(params).as_array()
    _validate_params(arr, check_bounds)
    return _factor_product(*arr)


def params_from_unit(unit):
    """Rescale a 7-vector from (-1, 1) onto the action bounds.

    Component u maps to mid + u*halfwidth of its bound interval, so the zero
    vector lands exactly on the identity parameters.
    """
    u = np.asarray(unit, dtype=np.float64)
    if u.shape != (7,):
        raise InvalidParameterError(f"expected a 7-vector, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise InvalidParameterError("unit action must be finite")
    if np.any(np.abs(u) > 1.0):
        raise InvalidParameterError("unit action components must lie in [-1, 1]")
    return AffineParams.from_array(_BOUNDS_MID + u * _BOUNDS_HALF)


def params_from_unit_batch(units):
    """Vectorized params_from_unit: (N, 7) unit rows to (N, 7) parameters."""
    u = np.asarray(units, dtype=np.float64)
    if u.ndim != 2 or u.shape[1] != 7:
        raise InvalidParameterError(f"expected (N, 7) unit actions, got shape {u.shape}")
    if not np.all(np.isfinite(u)):
        raise InvalidParameterError("unit actions must be finite")
    if np.any(np.abs(u) > 1.0):
        raise InvalidParameterError("unit action components must lie in [-1, 1]")
    return _BOUNDS_MID + u * _BOUNDS_HALF


def _pixel_matrices(params_arr, h, w):
    """Fold normalized-coordinate matrices into pixel-space (N, 2, 3) maps.

    Output pixel (x=col, y=row) maps to source pixel (P @ [x, y, 1]). The
    algebra keeps the identity map exactly the identity in floating point.
    """
    n = params_arr.shape[0]
    mats = np.empty((n, 2, 3))
    sx = (w - 1) / 2.0
    sy = (h - 1) / 2.0
    for i in range(n):
        r, sc1, sc2, sh1, sh2, t1, t2 = params_arr[i]
        m = _factor_product(r, sc1, sc2, sh1, sh2, 2.0 * t1 / (w - 1), 2.0 * t2 / (h - 1))
        # Normalized frame: x = j/sx - 1 (rightward), y = 1 - i/sy (upward).
        mats[i, 0, 0] = m[0, 0]
        mats[i, 0, 1] = -m[0, 1] * sx / sy
        mats[i, 0, 2] = sx * (1.0 - m[0, 0] + m[0, 1] + m[0, 2])
        mats[i, 1, 0] = -m[1, 0] * sy / sx
        mats[i, 1, 1] = m[1, 1]
        mats[i, 1, 2] = sy * (1.0 + m[1, 0] - m[1, 1] - m[1, 2])
    return mats


def _check_image_batch(images):
    if images.ndim != 4:
        raise InvalidInputError(f"expected (N, H, W, C) images, got shape {images.shape}")
    n, h, w, c = images.shape
    if h == 0 or w == 0 or c == 0:
        raise InvalidInputError(f"zero-sized image: shape {images.shape}")
    if h < 2 or w < 2:
        raise InvalidInputError("images must be at least 2x2 to define the sampling grid")


def warp_batch(images, params_batch, check_bounds=True):
    """Warp a batch: images (N, H, W, C), params_batch (N, 7) -> (N, H, W, C)."""
    images = np.asarray(images, dtype=np.float64)
    _check_image_batch(images)
    arr = np.asarray(params_batch, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 7 or arr.shape[0] != images.shape[0]:
        raise InvalidParameterError(f"expected ({images.shape[0]}, 7) parameters, got {arr.shape}")
    for row in arr:
        _validate_params(row, check_bounds)
    mats = _pixel_matrices(arr, images.shape[1], images.shape[2])
    out = _kernels.affine_sample(images, mats)
    np.clip(out, 0.0, 1.0, out=out)
    return out


def warp_image(image, params, check_bounds=True):
    """Warp one (H, W, C) image through the matrix built from ``params``.

    Each output pixel's normalized coordinate is mapped through the affine
    matrix (translations converted to normalized units as 2*t/(size-1)) to a
    source location, bilinearly interpolated with zero padding. Output shape
    and the [0, 1] intensity range are preserved.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, None]
        squeeze = True
    elif image.ndim == 3:
        squeeze = False
    else:
        raise InvalidInputError(f"expected (H, W, C) image, got shape {image.shape}")
    arr = params.as_array() if isinstance(params, AffineParams) else AffineParams.from_array(params).as_array()
    out = warp_batch(image[None], arr[None], check_bounds=check_bounds)[0]
    return out[:, :, 0] if squeeze else out
