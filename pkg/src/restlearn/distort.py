"""Distorted-dataset generation via exclusive-interval affine sampling.

Each distortion family samples a subset of the seven affine parameters from
a union of two bands (the intermediate range is excluded so distortions are
never near-identity), applies them with the shared warp module, and records
everything needed to regenerate the set bit-identically from its seed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import idx
from .data import LabeledImages
from .warp import AffineParams, warp_batch

PARAM_NAMES = ("r", "sc1", "sc2", "sh1", "sh2", "t1", "t2")
IDENTITY_VALUES = {"r": 0.0, "sc1": 1.0, "sc2": 1.0, "sh1": 0.0, "sh2": 0.0, "t1": 0.0, "t2": 0.0}


class InvalidFamilyError(ValueError):
    pass


class InvalidIntervalError(ValueError):
    pass


@dataclass(frozen=True)
class ExclusiveInterval:
    """Two ordered bands [a, b] and [c, d]; values in (b, c) are never drawn."""

    low_band: tuple
    high_band: tuple

    def __post_init__(self):
        a, b = self.low_band
        c, d = self.high_band
        if not (a <= b <= c <= d):
            raise InvalidIntervalError(f"bands must be ordered: [{a},{b}] then [{c},{d}]")

    @classmethod
    def symmetric(cls, lo, hi):
        """Bands [-hi, -lo] and [lo, hi]; draws satisfy lo <= |x| <= hi."""
        if not 0 <= lo <= hi:
            raise InvalidIntervalError("symmetric interval needs 0 <= lo <= hi")
        return cls((-hi, -lo), (lo, hi))

    @classmethod
    def single(cls, lo, hi):
        """One band only: the second band is a zero-length point of weight 0."""
        return cls((lo, hi), (hi, hi))


def sample_exclusive(interval: ExclusiveInterval, rng: np.random.Generator) -> float:
    a, b = interval.low_band
    c, d = interval.high_band
    len_low, len_high = b - a, d - c
    total = len_low + len_high
    if total == 0.0:  # two point masses; pick one band fairly
        return a if rng.random() < 0.5 else c
    u = rng.random() * total
    return a + u if u < len_low else c + (u - len_low)


# Standard parameter ranges: the recovery families exclude values close to
# the identity, the generalization family uses farther, harder bands.
RECOVERY_RANGES = {
    "r": ExclusiveInterval.symmetric(20.0, 50.0),
    "sc1": ExclusiveInterval((0.8, 0.9), (1.1, 1.2)),
    "sc2": ExclusiveInterval((0.8, 0.9), (1.1, 1.2)),
    "sh1": ExclusiveInterval.symmetric(0.2, 0.5),
    "sh2": ExclusiveInterval.symmetric(0.2, 0.5),
    "t1": ExclusiveInterval.symmetric(3.0, 6.0),
    "t2": ExclusiveInterval.symmetric(3.0, 6.0),
}
GENERALIZATION_RANGES = {
    "r": ExclusiveInterval.symmetric(50.0, 60.0),
    "sc1": ExclusiveInterval((0.75, 0.8), (1.2, 1.25)),
    "sc2": ExclusiveInterval((0.75, 0.8), (1.2, 1.25)),
    "t1": ExclusiveInterval.symmetric(6.0, 7.0),
    "t2": ExclusiveInterval.symmetric(6.0, 7.0),
}

# family name -> which affine parameters are sampled (others stay identity);
# "identity" is a no-op family used as a pipeline sanity control
FAMILY_PARAMS = {
    "R": ("r",),
    "RSc": ("r", "sc1", "sc2"),
    "RSh": ("r", "sh1", "sh2"),
    "RSS": ("r", "sc1", "sc2", "sh1", "sh2"),
    "RSST": ("r", "sc1", "sc2", "sh1", "sh2", "t1", "t2"),
    "RST": ("r", "sc1", "sc2", "t1", "t2"),
    "identity": (),
}


@dataclass(frozen=True)
class DistortionSpec:
    family: str
    intervals: dict  # param name -> ExclusiveInterval, for sampled params only
    seed: int

    def __post_init__(self):
        if self.family not in FAMILY_PARAMS:
            raise InvalidFamilyError(
                f"unknown family {self.family!r}; expected one of {sorted(FAMILY_PARAMS)}"
            )
        missing = [p for p in FAMILY_PARAMS[self.family] if p not in self.intervals]
        if missing:
            raise InvalidIntervalError(f"family {self.family} needs intervals for {missing}")


def make_family_spec(family: str, seed: int, ranges=None) -> DistortionSpec:
    """Standard spec for a family; RST defaults to the generalization ranges."""
    if family not in FAMILY_PARAMS:
        raise InvalidFamilyError(
            f"unknown family {family!r}; expected one of {sorted(FAMILY_PARAMS)}"
        )
    if ranges is None:
        ranges = GENERALIZATION_RANGES if family == "RST" else RECOVERY_RANGES
    intervals = {p: ranges[p] for p in FAMILY_PARAMS[family]}
    return DistortionSpec(family=family, intervals=intervals, seed=seed)


def sample_spec_params(spec: DistortionSpec, index: int) -> AffineParams:
    """Distortion parameters for image `index`, deterministic in (seed, index)."""
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(index,)))
    values = dict(IDENTITY_VALUES)
    for name in PARAM_NAMES:  # fixed draw order keeps streams stable
        if name in spec.intervals and name in FAMILY_PARAMS[spec.family]:
            values[name] = sample_exclusive(spec.intervals[name], rng)
    return AffineParams(
        values["r"], values["sc1"], values["sc2"], values["sh1"], values["sh2"],
        values["t1"], values["t2"],
    )


def spec_params_batch(spec: DistortionSpec, n: int) -> np.ndarray:
    return np.array([sample_spec_params(spec, i).as_array() for i in range(n)])


def make_distorted_dataset(canonical: LabeledImages, spec: DistortionSpec, chunk=512):
    """Warp every image with its own sampled distortion; labels are kept.

    Distortion magnitudes intentionally exceed the recovery action bounds,
    so the warp runs with bounds checking off.
    """
    params = spec_params_batch(spec, len(canonical))
    out = np.empty_like(canonical.images)
    for start in range(0, len(canonical), chunk):
        stop = start + chunk
        out[start:stop] = warp_batch(
            canonical.images[start:stop], params[start:stop], check_bounds=False
        )
    return LabeledImages(out, canonical.labels.copy(), canonical.n_classes)


@dataclass(frozen=True)
class RstCombo:
    rotation: str  # right | left
    scale: str  # up | down
    translation: str  # right | left | up | down

    def name(self):
        return f"r-{self.rotation}_s-{self.scale}_t-{self.translation}"


def enumerate_rst_combos():
    """All 16 direction triples, in a stable deterministic order."""
    return [
        RstCombo(r, s, t)
        for r, s, t in itertools.product(
            ("right", "left"), ("up", "down"), ("right", "left", "up", "down")
        )
    ]


def split_disjoint(combos, train_count: int, seed: int):
    """Random disjoint (train, test) partition of the combo list."""
    combos = list(combos)
    if not 0 < train_count < len(combos):
        raise ValueError(f"train_count must be in (0, {len(combos)}), got {train_count}")
    order = np.random.default_rng(seed).permutation(len(combos))
    train = [combos[i] for i in order[:train_count]]
    test = [combos[i] for i in order[train_count:]]
    return train, test


def _band_for_direction(interval: ExclusiveInterval, positive: bool) -> ExclusiveInterval:
    band = interval.high_band if positive else interval.low_band
    return ExclusiveInterval.single(*band)


def combo_to_spec(combo: RstCombo, seed: int, ranges=None) -> DistortionSpec:
    """Restrict each RST parameter to the band matching the combo direction.

    Screen-direction mapping (positive rotation is clockwise, positive t1
    moves content left, positive t2 moves content down): rotation right =
    clockwise = positive band; translation right/up need the negative band,
    left/down the positive one. Scale up/down couples both axes to the
    upper/lower band.
    """
    if ranges is None:
        ranges = GENERALIZATION_RANGES
    rot = _band_for_direction(ranges["r"], positive=combo.rotation == "right")
    scale = _band_for_direction(ranges["sc1"], positive=combo.scale == "up")
    intervals = {"r": rot, "sc1": scale, "sc2": scale}
    point_zero = ExclusiveInterval.single(0.0, 0.0)
    if combo.translation in ("right", "left"):
        intervals["t1"] = _band_for_direction(ranges["t1"], positive=combo.translation == "left")
        intervals["t2"] = point_zero
    else:
        intervals["t1"] = point_zero
        intervals["t2"] = _band_for_direction(ranges["t2"], positive=combo.translation == "down")
    return DistortionSpec(family="RST", intervals=intervals, seed=seed)


def export_distorted(dataset: LabeledImages, spec: DistortionSpec, out_dir, prefix):
    """Write IDX images/labels (uint8) plus a key=value sidecar manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    images_path = out_dir / f"{prefix}-images.idx"
    labels_path = out_dir / f"{prefix}-labels.idx"
    quantized = np.round(dataset.images[..., 0] * 255.0).astype(np.uint8)
    idx.write_idx_images(images_path, quantized)
    idx.write_idx_labels(labels_path, dataset.labels.astype(np.uint8))
    lines = [
        f"family={spec.family}",
        f"seed={spec.seed}",
        f"count={len(dataset)}",
        f"n_classes={dataset.n_classes}",
    ]
    for name in PARAM_NAMES:
        if name in spec.intervals:
            iv = spec.intervals[name]
            lines.append(
                f"interval_{name}={iv.low_band[0]},{iv.low_band[1]},"
                f"{iv.high_band[0]},{iv.high_band[1]}"
            )
    (out_dir / f"{prefix}-manifest.txt").write_text("\n".join(lines) + "\n")
    return images_path, labels_path
