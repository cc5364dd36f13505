"""Experiment configuration: INI files, environment, and CLI overrides.

Precedence, lowest to highest: built-in defaults, the ``REST_DATA_DIR``
environment variable, values from a config file, explicit CLI flags.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

EXPERIMENT_NAMES = (
    "recovery",
    "generalization",
    "sample_efficiency",
    "reward_ablation",
    "mi_confidence",
)

REWARD_ALIASES = {
    "eq1": "log_ratio",
    "eq2": "shaped",
    "log_ratio": "log_ratio",
    "shaped": "shaped",
    "mi": "mi",
    "mi-tuned": "mi_tuned",
    "mi_tuned": "mi_tuned",
}

# Full-scale corpus sizes; desk scale multiplies these by `scale`.
FULL_TRAIN = 55_000
FULL_TEST = 10_000


class ConfigError(ValueError):
    """Raised for malformed config files or invalid settings."""


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "recovery"
    data_dir: Path = field(default_factory=lambda: Path("data"))
    out_dir: Path = field(default_factory=lambda: Path("results"))
    scale: float = 0.1
    families: tuple[str, ...] = ("R", "RSc", "RSh", "RSS", "RSST")
    reward: str = "shaped"
    threshold: float = 0.9
    mi_threshold: float = 0.05
    mc_samples: int = 30
    max_steps: int = 10
    seeds: tuple[int, ...] = (0, 1, 2)
    # Black-box training.
    bb_epochs: int = 4
    bb_lr: float = 1e-3
    bb_batch_size: int = 128
    bb_dropout: float = 0.5
    # REST training.
    rest_epochs: int = 5
    episodes_per_update: int = 256
    max_episodes_per_epoch: int | None = None
    ppo_lr: float = 1e-4
    train_counts: tuple[int, ...] = (12, 8, 4)
    sample_budget: int = 1000

    def __post_init__(self):
        if self.experiment not in EXPERIMENT_NAMES:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if not 0.0 < self.scale <= 1.0:
            raise ConfigError(f"scale must be in (0, 1], got {self.scale}")
        if self.reward not in REWARD_ALIASES.values():
            raise ConfigError(f"unknown reward variant {self.reward!r}")
        if not self.seeds:
            raise ConfigError("need at least one seed")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"threshold must be in (0, 1), got {self.threshold}")

    @property
    def n_train(self) -> int:
        return max(1, round(FULL_TRAIN * self.scale))

    @property
    def n_test(self) -> int:
        return max(1, round(FULL_TEST * self.scale))


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.replace(",", " ").split())


def _parse_names(text: str) -> tuple[str, ...]:
    return tuple(tok for tok in text.replace(",", " ").split())


# Config-file key -> (dataclass field, parser). Sections group related keys
# but key names are globally unique, so lookup ignores the section.
_KEYS = {
    "experiment": ("experiment", str),
    "data_dir": ("data_dir", Path),
    "out_dir": ("out_dir", Path),
    "scale": ("scale", float),
    "families": ("families", _parse_names),
    "reward": ("reward", lambda s: REWARD_ALIASES.get(s, s)),
    "threshold": ("threshold", float),
    "mi_threshold": ("mi_threshold", float),
    "mc_samples": ("mc_samples", int),
    "max_steps": ("max_steps", int),
    "seeds": ("seeds", _parse_ints),
    "bb_epochs": ("bb_epochs", int),
    "bb_lr": ("bb_lr", float),
    "bb_batch_size": ("bb_batch_size", int),
    "bb_dropout": ("bb_dropout", float),
    "rest_epochs": ("rest_epochs", int),
    "episodes_per_update": ("episodes_per_update", int),
    "max_episodes_per_epoch": ("max_episodes_per_epoch", int),
    "ppo_lr": ("ppo_lr", float),
    "train_counts": ("train_counts", _parse_ints),
    "sample_budget": ("sample_budget", int),
}


def load_config_file(path) -> dict:
    """Parse an INI-style config file into a field->value dict."""
    parser = configparser.ConfigParser()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in _KEYS:
                raise ConfigError(f"unknown config key {key!r} in [{section}]")
            name, parse = _KEYS[key]
            try:
                values[name] = parse(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
    return values


def build_config(config_path=None, env=None, **overrides) -> ExperimentConfig:
    """Assemble a config from file, environment, and keyword overrides.

    `overrides` entries that are None are ignored, so CLI flags can be
    passed through unconditionally.
    """
    env = os.environ if env is None else env
    values: dict = {}
    if "REST_DATA_DIR" in env:
        values["data_dir"] = Path(env["REST_DATA_DIR"])
    if config_path is not None:
        values.update(load_config_file(config_path))
    for key, val in overrides.items():
        if val is None:
            continue
        if key not in {f.name for f in fields(ExperimentConfig)}:
            raise ConfigError(f"unknown override {key!r}")
        values[key] = val
    return ExperimentConfig(**values)


def with_updates(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    return replace(cfg, **changes)
