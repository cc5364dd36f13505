"""Frozen black-box image classifier with probability and MI confidence.

The classifier is a small CNN trained here once and then used strictly
through its outputs: callers get (probabilities, label, confidence) and MC
dropout samples, never parameters or gradients. Inputs are (H, W, C) or
(N, H, W, C) float64 images in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import modelio
from .data import DatasetError, LabeledImages
from .nn import (
    Adam,
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    MaxPool2,
    ReLU,
    Sequential,
    softmax,
    softmax_cross_entropy,
)


@dataclass(frozen=True)
class Prediction:
    probs: np.ndarray
    label: int
    confidence: float


@dataclass
class ClassifierModel:
    net: Sequential
    input_shape: tuple
    n_classes: int
    meta: dict = field(default_factory=dict)


@dataclass
class TrainConfig:
    epochs: int = 5
    lr: float = 1e-4
    batch_size: int = 128
    holdout_fraction: float = 0.1
    dropout: float = 0.5
    seed: int = 0
    log: object = None  # callable taking one string, or None


def _plan_architecture(h, w):
    """Choose kernel size and pooling so the feature map never vanishes."""
    k = 5 if min(h, w) >= 16 else 3
    if min(h, w) < k + 1:
        raise DatasetError(f"images of shape {(h, w)} are too small to classify")
    plan = []
    for _ in range(2):
        plan.append(("conv", k))
        h, w = h - k + 1, w - k + 1
        if min(h, w) >= 2:
            plan.append(("pool",))
            h, w = h // 2, w // 2
        if min(h, w) < k:
            k = min(h, w)  # shrink the second kernel for tiny inputs
        if k < 1:
            raise DatasetError("input too small for two convolution stages")
    return plan, h, w


def build_network(input_shape, n_classes, rng, dropout=0.5):
    h, w, c = input_shape
    plan, fh, fw = _plan_architecture(h, w)
    layers = []
    channels = c
    widths = [16, 32]
    for step in plan:
        if step[0] == "conv":
            out_ch = widths[0 if channels == c else 1]
            layers += [Conv2d(channels, out_ch, step[1], rng), ReLU()]
            channels = out_ch
        else:
            layers.append(MaxPool2())
    layers += [
        Flatten(),
        Dense(channels * fh * fw, 128, rng),
        ReLU(),
        Dropout(dropout),
        Dense(128, n_classes, rng, init="zero"),
    ]
    return Sequential(layers)


def _as_batch(model, images):
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 2:  # (H, W) single grayscale
        x = x[None, :, :, None]
        single = True
    elif x.ndim == 3:
        if x.shape == model.input_shape:  # (H, W, C) single
            x = x[None]
            single = True
        else:  # (N, H, W) grayscale batch
            x = x[..., None]
            single = False
    elif x.ndim == 4:
        single = False
    else:
        raise DatasetError(f"expected image or image batch, got shape {x.shape}")
    if x.shape[1:] != model.input_shape:
        raise DatasetError(
            f"image shape {x.shape[1:]} does not match model input {model.input_shape}"
        )
    return x.transpose(0, 3, 1, 2), single


def _forward_probs(model, images, train=False, rng=None):
    x, single = _as_batch(model, images)
    probs = softmax(model.net.forward(x, train=train, rng=rng))
    return probs[0] if single else probs


def predict_probs(model, images) -> np.ndarray:
    """Deterministic class probabilities for one image or a batch."""
    return _forward_probs(model, images)


def predict(model, image) -> Prediction:
    probs = predict_probs(model, image)
    if probs.ndim != 1:
        raise DatasetError("predict takes a single image; use predict_probs for batches")
    label = int(np.argmax(probs))  # argmax takes the lowest index on ties
    return Prediction(probs=probs, label=label, confidence=float(probs[label]))


def confidence_target(model, image, target_label: int) -> float:
    probs = predict_probs(model, image)
    return float(probs[target_label])


def confidence_max(model, image) -> float:
    return float(np.max(predict_probs(model, image)))


def mc_dropout_predict(model, image, t: int, seed) -> np.ndarray:
    """T stochastic forward passes with dropout active; (T, K) probabilities."""
    if t < 1:
        raise ValueError("sample count must be at least 1")
    rng = np.random.default_rng(seed)
    return np.stack([_forward_probs(model, image, train=True, rng=rng) for _ in range(t)])


def mc_dropout_predict_batch(model, images, t: int, seed) -> np.ndarray:
    """Batched MC dropout: (T, N, K) probabilities, one dropout mask per pass."""
    if t < 1:
        raise ValueError("sample count must be at least 1")
    rng = np.random.default_rng(seed)
    return np.stack([_forward_probs(model, images, train=True, rng=rng) for _ in range(t)])


def _entropy(p):
    # 0 * log 0 := 0
    return float(-np.sum(np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0), axis=-1))


def mutual_information(samples):
    """(mi, predictive_entropy, aleatoric) from MC dropout probability rows."""
    s = np.asarray(samples, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] < 1:
        raise ValueError("need at least one probability vector")
    if np.all(s == s[0]):  # no disagreement: MI is 0 by definition, exactly
        e = _entropy(s[0])
        return 0.0, e, e
    predictive = _entropy(s.mean(axis=0))
    aleatoric = float(np.mean([_entropy(row) for row in s]))
    mi = max(0.0, predictive - aleatoric)  # clamp float residue; MI >= 0 by Jensen
    return mi, predictive, aleatoric


def mutual_information_batch(samples):
    """Vectorized MI over (T, N, K) sample stacks; returns (N,) MI values."""
    s = np.asarray(samples, dtype=np.float64)
    mean = s.mean(axis=0)
    ent = lambda p: -np.sum(np.where(p > 0.0, p * np.log(np.where(p > 0.0, p, 1.0)), 0.0), axis=-1)
    mi = np.maximum(ent(mean) - ent(s).mean(axis=0), 0.0)
    mi[np.all(s == s[:1], axis=(0, 2))] = 0.0  # exact zero when samples agree
    return mi


def train_classifier(dataset: LabeledImages, config: TrainConfig) -> ClassifierModel:
    """Train the CNN with Adam + cross-entropy; reports held-out accuracy."""
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    train_set, holdout = dataset.split(config.holdout_fraction, rng)
    model = ClassifierModel(
        net=build_network(dataset.image_shape, dataset.n_classes, rng, config.dropout),
        input_shape=dataset.image_shape,
        n_classes=dataset.n_classes,
    )
    optimizer = Adam(model.net.params, lr=config.lr)
    x_all = train_set.images.transpose(0, 3, 1, 2)
    for epoch in range(config.epochs):
        order = rng.permutation(len(train_set))
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            logits = model.net.forward(x_all[idx], train=True, rng=rng)
            _, dlogits, _ = softmax_cross_entropy(logits, train_set.labels[idx])
            model.net.backward(dlogits)
            optimizer.step(model.net.grads)
        acc = evaluate_accuracy(model, holdout)
        if config.log is not None:
            config.log(f"epoch {epoch + 1}/{config.epochs} holdout accuracy {acc:.4f}")
    model.meta = {
        "holdout_accuracy": evaluate_accuracy(model, holdout),
        "epochs": config.epochs,
        "train_size": len(train_set),
    }
    return model


def evaluate_accuracy(model, dataset: LabeledImages, batch_size=256) -> float:
    hits = 0
    for start in range(0, len(dataset), batch_size):
        probs = predict_probs(model, dataset.images[start : start + batch_size])
        hits += int(np.sum(probs.argmax(axis=1) == dataset.labels[start : start + batch_size]))
    return hits / len(dataset)


def save_model(model: ClassifierModel, path):
    meta = {
        "input_shape": list(model.input_shape),
        "n_classes": model.n_classes,
        "dropout": _dropout_rate(model.net),
        "extra": model.meta,
    }
    modelio.save_arrays(path, "classifier", meta, model.net.params)


def load_model(path) -> ClassifierModel:
    meta, arrays = modelio.load_arrays(path, "classifier")
    input_shape = tuple(meta["input_shape"])
    rng = np.random.default_rng(0)  # placeholder init, overwritten below
    net = build_network(input_shape, meta["n_classes"], rng, meta["dropout"])
    params = net.params
    if len(params) != len(arrays):
        raise modelio.ModelFormatError("parameter count does not match architecture")
    for p, a in zip(params, arrays):
        if p.shape != a.shape:
            raise modelio.ModelFormatError("parameter shape does not match architecture")
        p[...] = a
    return ClassifierModel(net=net, input_shape=input_shape, n_classes=meta["n_classes"], meta=meta["extra"])


def _dropout_rate(net):
    for layer in net.layers:
        if isinstance(layer, Dropout):
            return layer.p
    return 0.0
