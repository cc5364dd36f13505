"""Experiment orchestration: cached datasets and models, paper-style runs.

Every runner takes an ExperimentConfig and returns MetricsRow lists. The
canonical dataset and the frozen classifier are cached on disk per scale,
so seeds and experiments share them. Distortion seeds are fixed per family
and split; only the agent seed varies across repetitions.
"""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np

from ..agent import (
    PPOConfig,
    RewardConfig,
    TrainRestConfig,
    build_actor_critic,
    evaluate_policy,
    train_rest,
)
from ..blackbox import (
    TrainConfig,
    evaluate_accuracy,
    load_model,
    save_model,
    train_classifier,
)
from ..data import DatasetError, LabeledImages
from ..distort import (
    combo_to_spec,
    enumerate_rst_combos,
    make_distorted_dataset,
    make_family_spec,
    split_disjoint,
)
from ..idx import read_idx_images, read_idx_labels, write_idx_images, write_idx_labels
from .config import ConfigError, ExperimentConfig
from .metrics import MetricsRow, emit_csv, emit_summary
from .synth import synthesize_digits

# Synthesis seeds for the cached canonical corpus; fixed so every run of a
# given scale sees the same data.
_CANONICAL_SEEDS = {"train": 11, "test": 12}

# Distortion specs must not depend on the agent seed, so REST arms across
# seeds face identical distorted sets.
_FAMILY_ORDER = ("R", "RSc", "RSh", "RSS", "RSST", "RST", "identity")

_VARIANT_ALIAS = {"log_ratio": "eq1", "shaped": "eq2", "mi": "mi", "mi_tuned": "mi_tuned"}


def _family_seed(family: str, split: str) -> int:
    return 9000 + 2 * _FAMILY_ORDER.index(family) + {"train": 0, "test": 1}[split]


def ingest_idx(images_path, labels_path) -> LabeledImages:
    """Load an IDX image/label pair; intensities normalized to [0, 1]."""
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise DatasetError(
            f"count mismatch: {len(images)} images vs {len(labels)} labels"
        )
    return LabeledImages(images.astype(np.float64) / 255.0, labels.astype(np.int64))


def _dataset_paths(data_dir, split: str, n: int):
    stem = f"canonical-{split}-{n}"
    base = Path(data_dir)
    return base / f"{stem}-images.idx.gz", base / f"{stem}-labels.idx.gz"


def ensure_canonical_data(cfg: ExperimentConfig, log=None):
    """Return (train, test) canonical digits, synthesizing and caching IDX files.

    The synthesized floats round-trip through uint8 IDX storage, so cache
    hits and misses yield bit-identical datasets.
    """
    out = []
    Path(cfg.data_dir).mkdir(parents=True, exist_ok=True)
    for split, n in (("train", cfg.n_train), ("test", cfg.n_test)):
        ipath, lpath = _dataset_paths(cfg.data_dir, split, n)
        if not (ipath.exists() and lpath.exists()):
            if log:
                log(f"synthesizing {n} canonical {split} images")
            ds = synthesize_digits(n, seed=_CANONICAL_SEEDS[split])
            write_idx_images(ipath, np.round(ds.images[..., 0] * 255.0).astype(np.uint8))
            write_idx_labels(lpath, ds.labels.astype(np.uint8))
        out.append(ingest_idx(ipath, lpath))
    return out[0], out[1]


def get_blackbox(cfg: ExperimentConfig, train_data: LabeledImages, log=None):
    """Train the frozen classifier once per scale; later calls load the cache.

    Returns (model, seconds spent obtaining it).
    """
    path = Path(cfg.data_dir) / f"blackbox-{len(train_data)}.rstm"
    t0 = time.perf_counter()
    if path.exists():
        model = load_model(path)
    else:
        tc = TrainConfig(
            epochs=cfg.bb_epochs,
            lr=cfg.bb_lr,
            batch_size=cfg.bb_batch_size,
            dropout=cfg.bb_dropout,
            seed=0,
            log=log,
        )
        model = train_classifier(train_data, tc)
        save_model(model, path)
    return model, time.perf_counter() - t0


def _train_eval_rest(cfg, model, dtrain, dtest, variant, seed, experiment,
                     family_label, log=None):
    """Train one REST agent and evaluate it; returns (MetricsRow, agent)."""
    reward = RewardConfig(
        variant=variant,
        threshold=cfg.threshold,
        mi_threshold=cfg.mi_threshold,
        max_steps=cfg.max_steps,
        mc_samples=cfg.mc_samples,
    )
    tcfg = TrainRestConfig(
        epochs=cfg.rest_epochs,
        episodes_per_update=cfg.episodes_per_update,
        seed=seed,
        reward=reward,
        ppo=PPOConfig(lr=cfg.ppo_lr),
        max_episodes_per_epoch=cfg.max_episodes_per_epoch,
        log=log,
    )
    agent = build_actor_critic(dtrain.image_shape, seed=seed)
    t0 = time.perf_counter()
    train_rest(agent, model, dtrain, tcfg)
    train_seconds = time.perf_counter() - t0
    t0 = time.perf_counter()
    result = evaluate_policy(agent, model, dtest, reward, seed=seed)
    test_seconds = time.perf_counter() - t0
    if log:
        log(
            f"{experiment} {family_label} seed {seed}: "
            f"acc {100 * result['accuracy']:.2f} len {result['mean_length']:.2f}"
        )
    row = MetricsRow(
        experiment=experiment,
        family=family_label,
        method="REST+BB",
        accuracy=100.0 * result["accuracy"],
        mean_length=result["mean_length"],
        train_seconds=train_seconds,
        test_seconds=test_seconds,
        seed=seed,
    )
    return row, agent


def _recovery_core(cfg, families, variants, experiment, log=None, train_limit=None):
    train, test = ensure_canonical_data(cfg, log)
    model, bb_seconds = get_blackbox(cfg, train, log)
    if train_limit is not None:
        if train_limit > len(train):
            raise ConfigError(
                f"sample budget {train_limit} exceeds pool of {len(train)}"
            )
        train = train.subset(np.arange(train_limit))
    rows = []
    for family in families:
        dtrain = make_distorted_dataset(
            train, make_family_spec(family, seed=_family_seed(family, "train"))
        )
        dtest = make_distorted_dataset(
            test, make_family_spec(family, seed=_family_seed(family, "test"))
        )
        t0 = time.perf_counter()
        bb_acc = evaluate_accuracy(model, dtest)
        bb_eval_seconds = time.perf_counter() - t0
        if log:
            log(f"{experiment} {family}: BB acc {100 * bb_acc:.2f}")
        rows.append(
            MetricsRow(
                experiment=experiment,
                family=family,
                method="BB",
                accuracy=100.0 * bb_acc,
                mean_length=None,
                train_seconds=bb_seconds,
                test_seconds=bb_eval_seconds,
                seed=cfg.seeds[0],
            )
        )
        for variant in variants:
            label = family if len(variants) == 1 else f"{family}:{_VARIANT_ALIAS[variant]}"
            for seed in cfg.seeds:
                row, _ = _train_eval_rest(
                    cfg, model, dtrain, dtest, variant, seed, experiment, label, log
                )
                rows.append(row)
    return rows


def run_recovery(cfg: ExperimentConfig, log=None):
    """BB vs REST+BB accuracy per distortion family."""
    return _recovery_core(cfg, cfg.families, (cfg.reward,), "recovery", log)


def run_sample_efficiency(cfg: ExperimentConfig, log=None):
    """Recovery with the REST training pool capped at cfg.sample_budget images."""
    return _recovery_core(
        cfg,
        cfg.families,
        (cfg.reward,),
        "sample_efficiency",
        log,
        train_limit=cfg.sample_budget,
    )


def run_reward_ablation(cfg: ExperimentConfig, log=None):
    """Terminal-only vs shaped reward, shared seeds, all metric columns."""
    return _recovery_core(
        cfg, cfg.families, ("log_ratio", "shaped"), "reward_ablation", log
    )


def run_mi_confidence(cfg: ExperimentConfig, log=None):
    """Recovery driven by MC-dropout mutual information instead of softmax."""
    return _recovery_core(cfg, cfg.families, ("mi", "mi_tuned"), "mi_confidence", log)


def distort_by_combos(dataset: LabeledImages, combos, seed: int) -> LabeledImages:
    """Distort each image with one combo, assigned by a seeded permutation.

    Labels and image order are preserved; only pixel content changes.
    """
    if not combos:
        raise ValueError("need at least one combo")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    perm = rng.permutation(len(dataset))
    images = np.empty_like(dataset.images)
    for k, combo in enumerate(combos):
        idx = perm[k :: len(combos)]
        if idx.size == 0:
            continue
        spec = combo_to_spec(combo, seed=seed * 100 + k + 1)
        images[idx] = make_distorted_dataset(dataset.subset(idx), spec).images
    return LabeledImages(images, dataset.labels.copy(), dataset.n_classes)


def run_generalization(cfg: ExperimentConfig, log=None):
    """Train on a subset of the 16 RST combos, test on the disjoint rest."""
    train, test = ensure_canonical_data(cfg, log)
    model, bb_seconds = get_blackbox(cfg, train, log)
    combos = enumerate_rst_combos()
    rows = []
    for count in cfg.train_counts:
        train_combos, test_combos = split_disjoint(combos, count, seed=777 + count)
        overlap = set(train_combos) & set(test_combos)
        if overlap:
            raise RuntimeError(f"combo split leaked {sorted(c.name() for c in overlap)}")
        dtrain = distort_by_combos(train, train_combos, seed=880 + count)
        dtest = distort_by_combos(test, test_combos, seed=881 + count)
        label = f"RST-{count}"
        t0 = time.perf_counter()
        bb_acc = evaluate_accuracy(model, dtest)
        bb_eval_seconds = time.perf_counter() - t0
        if log:
            log(f"generalization {label}: BB acc {100 * bb_acc:.2f}")
        rows.append(
            MetricsRow(
                experiment="generalization",
                family=label,
                method="BB",
                accuracy=100.0 * bb_acc,
                mean_length=None,
                train_seconds=bb_seconds,
                test_seconds=bb_eval_seconds,
                seed=cfg.seeds[0],
            )
        )
        for seed in cfg.seeds:
            row, _ = _train_eval_rest(
                cfg, model, dtrain, dtest, cfg.reward, seed, "generalization", label, log
            )
            rows.append(row)
    return rows


EXPERIMENTS = {
    "recovery": run_recovery,
    "generalization": run_generalization,
    "sample_efficiency": run_sample_efficiency,
    "reward_ablation": run_reward_ablation,
    "mi_confidence": run_mi_confidence,
}


def run_experiment(cfg: ExperimentConfig, log=None):
    """Dispatch by cfg.experiment; write CSV and summary into cfg.out_dir."""
    rows = EXPERIMENTS[cfg.experiment](cfg, log=log)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    emit_csv(rows, out / f"{cfg.experiment}.csv")
    summary = emit_summary(rows)
    (out / f"{cfg.experiment}-summary.txt").write_text(summary, encoding="utf-8")
    if log:
        for line in summary.rstrip().splitlines():
            log(line)
    return rows
