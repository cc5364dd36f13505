"""Synthetic handwritten-style digit images.

Each digit class has a stroke skeleton (polylines and arcs in a unit box,
y pointing up). Samples render the skeleton with a Gaussian stroke profile
after a small random jitter (rotation, scale, shear, shift, stroke width),
giving an MNIST-like canonical dataset: upright, centered, white on black.
"""

from __future__ import annotations

import numpy as np

from ..data import LabeledImages


def _arc(cx, cy, r, a0_deg, a1_deg, n=28):
    angles = np.deg2rad(np.linspace(a0_deg, a1_deg, n))
    return np.stack([cx + r * np.cos(angles), cy + r * np.sin(angles)], axis=1)


def _line(x0, y0, x1, y1):
    return np.array([[x0, y0], [x1, y1]], dtype=float)


def _digit_strokes():
    """Unit-box polylines per digit; x right, y up, roughly centered."""
    strokes = {
        0: [np.stack([0.5 + 0.30 * np.cos(t), 0.5 + 0.40 * np.sin(t)], axis=1)
            for t in [np.linspace(0, 2 * np.pi, 48)]],
        1: [_line(0.38, 0.72, 0.52, 0.88), _line(0.52, 0.88, 0.52, 0.12)],
        2: [_arc(0.5, 0.64, 0.24, 160, -20), _line(0.725, 0.56, 0.28, 0.14),
            _line(0.28, 0.14, 0.74, 0.14)],
        3: [_arc(0.48, 0.66, 0.21, 140, -80), _arc(0.48, 0.30, 0.24, 80, -140)],
        4: [_line(0.64, 0.88, 0.26, 0.40), _line(0.26, 0.40, 0.80, 0.40),
            _line(0.64, 0.72, 0.64, 0.10)],
        5: [_line(0.72, 0.86, 0.34, 0.86), _line(0.34, 0.86, 0.31, 0.52),
            _arc(0.49, 0.33, 0.235, 105, -150)],
        6: [_line(0.63, 0.88, 0.38, 0.52), _arc(0.50, 0.30, 0.21, 90, -270)],
        7: [_line(0.26, 0.86, 0.76, 0.86), _line(0.76, 0.86, 0.42, 0.10)],
        8: [np.stack([0.5 + 0.17 * np.cos(t), 0.655 + 0.165 * np.sin(t)], axis=1)
            for t in [np.linspace(0, 2 * np.pi, 40)]]
           + [np.stack([0.5 + 0.215 * np.cos(t), 0.30 + 0.20 * np.sin(t)], axis=1)
              for t in [np.linspace(0, 2 * np.pi, 44)]],
        9: [_arc(0.50, 0.64, 0.20, 90, 450), _line(0.70, 0.60, 0.58, 0.10)],
    }
    return strokes


_STROKES = _digit_strokes()


def _segments_for(points_list):
    segs = []
    for pts in points_list:
        segs.append(np.stack([pts[:-1], pts[1:]], axis=1))
    return np.concatenate(segs, axis=0)  # (M, 2, 2)


_SEGMENTS = {d: _segments_for(s) for d, s in _STROKES.items()}


def _jitter_segments(segs, rng, rotation_deg=8.0, scale_span=0.08, shear_span=0.06,
                     shift_px_frac=0.05):
    """Random small affine on skeleton coordinates around the box center."""
    theta = np.deg2rad(rng.uniform(-rotation_deg, rotation_deg))
    sx = 1.0 + rng.uniform(-scale_span, scale_span)
    sy = 1.0 + rng.uniform(-scale_span, scale_span)
    hx = rng.uniform(-shear_span, shear_span)
    hy = rng.uniform(-shear_span, shear_span)
    shift = rng.uniform(-shift_px_frac, shift_px_frac, size=2)
    c, s = np.cos(theta), np.sin(theta)
    lin = np.array([[c, -s], [s, c]]) @ np.array([[sx, 0], [0, sy]]) @ np.array([[1, hx], [hy, 1]])
    flat = segs.reshape(-1, 2) - 0.5
    return (flat @ lin.T + 0.5 + shift).reshape(segs.shape)


def _render(segs, size, margin, sigma):
    """Gaussian-profile distance field of the stroke set on a size x size grid."""
    # unit box -> pixel box, y flipped so larger y draws higher on screen
    span = size - 1 - 2 * margin
    a = segs[:, 0] * span
    b = segs[:, 1] * span
    a[:, 1] = span - a[:, 1]
    b[:, 1] = span - b[:, 1]
    a += margin
    b += margin
    cols, rows = np.meshgrid(np.arange(size, dtype=float), np.arange(size, dtype=float))
    p = np.stack([cols.ravel(), rows.ravel()], axis=1)  # (P, 2) as (x, y)
    ab = b - a  # (M, 2)
    denom = np.maximum(np.sum(ab * ab, axis=1), 1e-12)
    ap = p[:, None, :] - a[None, :, :]  # (P, M, 2)
    t = np.clip(np.sum(ap * ab[None], axis=2) / denom[None], 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    d = np.sqrt(np.sum((p[:, None, :] - closest) ** 2, axis=2)).min(axis=1)
    img = np.exp(-0.5 * (d / sigma) ** 2)
    img[d > 4.0 * sigma] = 0.0
    return img.reshape(size, size)


def render_digit(digit, rng, size=28, margin=4.0):
    """One jittered sample of a digit; float64 image in [0, 1]."""
    digit = int(digit)
    if not 0 <= digit <= 9:
        raise ValueError(f"digit must be in 0..9, got {digit}")
    segs = _jitter_segments(_SEGMENTS[digit], rng)
    sigma = rng.uniform(0.55, 0.80)
    gain = rng.uniform(0.9, 1.0)
    return np.clip(_render(segs, size, margin, sigma) * gain, 0.0, 1.0)


def synthesize_digits(n, seed, size=28) -> LabeledImages:
    """n stroke-rendered digit images with balanced random labels."""
    if n < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    labels = rng.integers(0, 10, size=n)
    images = np.empty((n, size, size, 1))
    for i in range(n):
        images[i, ..., 0] = render_digit(labels[i], rng, size=size)
    return LabeledImages(images, labels, n_classes=10)
