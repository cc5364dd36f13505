"""Labeled image set container shared by training, distortion, and evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledImages:
    """Images as (N, H, W, C) float64 in [0, 1] with integer labels (N,)."""

    images: np.ndarray
    labels: np.ndarray
    n_classes: int = field(default=10)

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if images.ndim == 3:
            images = images[..., None]
        if images.ndim != 4:
            raise DatasetError(f"expected (N, H, W, C) images, got shape {images.shape}")
        if labels.ndim != 1 or labels.shape[0] != images.shape[0]:
            raise DatasetError(
                f"labels shape {labels.shape} does not match {images.shape[0]} images"
            )
        if images.shape[0] == 0:
            raise DatasetError("empty dataset")
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise DatasetError("labels outside [0, n_classes)")
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.images.shape[0]

    @property
    def image_shape(self):
        return self.images.shape[1:]

    def subset(self, indices) -> "LabeledImages":
        idx = np.asarray(indices)
        return LabeledImages(self.images[idx], self.labels[idx], self.n_classes)

    def shuffled(self, rng: np.random.Generator) -> "LabeledImages":
        return self.subset(rng.permutation(len(self)))

    def split(self, holdout_fraction: float, rng: np.random.Generator):
        """Random (train, holdout) split; holdout gets ceil(frac * N) items."""
        if not 0.0 < holdout_fraction < 1.0:
            raise DatasetError("holdout fraction must be in (0, 1)")
        n = len(self)
        n_hold = max(1, int(np.ceil(holdout_fraction * n)))
        if n_hold >= n:
            raise DatasetError("holdout fraction leaves no training data")
        perm = rng.permutation(n)
        return self.subset(perm[n_hold:]), self.subset(perm[:n_hold])
