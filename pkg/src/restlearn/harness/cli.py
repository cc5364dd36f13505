"""Command-line interface for training, distortion, evaluation, experiments."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ..agent import (
    RewardConfig,
    build_actor_critic,
    infer_transform,
    load_agent,
    save_agent,
    trajectory_records,
)
from ..blackbox import evaluate_accuracy, predict
from ..distort import make_distorted_dataset, make_family_spec, export_distorted
from .config import REWARD_ALIASES, ConfigError, build_config, with_updates
from .experiments import (
    EXPERIMENTS,
    _train_eval_rest,
    ensure_canonical_data,
    get_blackbox,
    run_experiment,
    _family_seed,
)

FAMILY_CHOICES = ("R", "RSc", "RSh", "RSS", "RSST", "RST", "identity")


def _log(message):
    print(message, flush=True)


def _add_common(parser):
    parser.add_argument("--config", type=Path, default=None, help="INI config file")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    parser.add_argument("--scale", type=float, default=None, help="dataset scale factor")
    parser.add_argument("--family", choices=FAMILY_CHOICES, default=None)
    parser.add_argument(
        "--reward", choices=sorted(REWARD_ALIASES), default=None,
        help="reward variant (eq1 = per-step log ratio, eq2 = shaped)",
    )
    parser.add_argument("--threshold", type=float, default=None)
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.add_argument(
        "--full-scale", action="store_true", help="use the full-size corpus (scale 1.0)"
    )
    parser.add_argument("--data-dir", type=Path, default=None)


def _config_from_args(args, **extra):
    overrides = dict(
        scale=1.0 if args.full_scale else args.scale,
        reward=REWARD_ALIASES[args.reward] if args.reward else None,
        threshold=args.threshold,
        out_dir=args.out,
        data_dir=args.data_dir,
        seeds=(args.seed,) if args.seed is not None else None,
    )
    overrides.update(extra)
    return build_config(config_path=args.config, **overrides)


def _require_family(args):
    if args.family is None:
        raise ConfigError("--family is required for this command")
    return args.family


def cmd_train_blackbox(args) -> int:
    cfg = _config_from_args(args)
    train, test = ensure_canonical_data(cfg, log=_log)
    model, seconds = get_blackbox(cfg, train, log=_log)
    acc = evaluate_accuracy(model, test)
    _log(f"holdout accuracy {model.meta.get('holdout_accuracy', float('nan')):.4f}")
    _log(f"clean test accuracy {acc:.4f} ({seconds:.1f}s)")
    return 0


def cmd_distort(args) -> int:
    cfg = _config_from_args(args)
    family = _require_family(args)
    train, test = ensure_canonical_data(cfg, log=_log)
    split = args.split
    data = train if split == "train" else test
    seed = args.seed if args.seed is not None else _family_seed(family, split)
    spec = make_family_spec(family, seed=seed)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prefix = f"{family}-{split}"
    export_distorted(data, spec, out, prefix)
    _log(f"wrote {len(data)} distorted images under {out / prefix}*")
    return 0


def _distorted_sets(cfg, family):
    train, test = ensure_canonical_data(cfg, log=_log)
    model, _ = get_blackbox(cfg, train, log=_log)
    dtrain = make_distorted_dataset(
        train, make_family_spec(family, seed=_family_seed(family, "train"))
    )
    dtest = make_distorted_dataset(
        test, make_family_spec(family, seed=_family_seed(family, "test"))
    )
    return model, dtrain, dtest


def cmd_train_rest(args) -> int:
    cfg = _config_from_args(args)
    family = _require_family(args)
    model, dtrain, dtest = _distorted_sets(cfg, family)
    seed = cfg.seeds[0]
    row, agent = _train_eval_rest(
        cfg, model, dtrain, dtest, cfg.reward, seed, "train-rest", family, log=_log
    )
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    agent_path = out / f"agent-{family}-{cfg.reward}-seed{seed}.rstm"
    save_agent(agent, agent_path)
    _log(f"saved agent to {agent_path}")
    _log(f"test accuracy {row.accuracy:.2f} mean length {row.mean_length:.2f}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    family = _require_family(args)
    model, _, dtest = _distorted_sets(cfg, family)
    bb_acc = evaluate_accuracy(model, dtest)
    _log(f"BB accuracy {100 * bb_acc:.2f}")
    if args.agent is not None:
        from ..agent import evaluate_policy

        agent = load_agent(args.agent)
        reward = RewardConfig(
            variant=cfg.reward if cfg.reward != "mi_tuned" else "mi",
            threshold=cfg.threshold, mi_threshold=cfg.mi_threshold,
            max_steps=cfg.max_steps, mc_samples=cfg.mc_samples,
        )
        res = evaluate_policy(agent, model, dtest, reward, seed=cfg.seeds[0])
        _log(
            f"REST+BB accuracy {100 * res['accuracy']:.2f} "
            f"mean length {res['mean_length']:.2f}"
        )
    return 0


def cmd_experiment(args) -> int:
    cfg = _config_from_args(args, experiment=args.name)
    if args.family is not None:
        cfg = with_updates(cfg, families=(args.family,))
    run_experiment(cfg, log=_log)
    _log(f"results written to {cfg.out_dir}")
    return 0


def cmd_inspect_episode(args) -> int:
    cfg = _config_from_args(args)
    family = _require_family(args)
    model, _, dtest = _distorted_sets(cfg, family)
    if not 0 <= args.index < len(dtest):
        raise ConfigError(f"--index out of range 0..{len(dtest) - 1}")
    image = dtest.images[args.index]
    if args.agent is not None:
        agent = load_agent(args.agent)
    else:
        agent = build_actor_critic(dtest.image_shape, seed=cfg.seeds[0])
        _log("no --agent given; using an untrained policy")
    reward = RewardConfig(
        variant=cfg.reward if cfg.reward != "mi_tuned" else "mi",
        threshold=cfg.threshold, mi_threshold=cfg.mi_threshold,
        max_steps=cfg.max_steps, mc_samples=cfg.mc_samples,
    )
    rng = np.random.default_rng(cfg.seeds[0])
    final, pred, traj = infer_transform(agent, model, image, reward, rng=rng)
    start = predict(model, image)
    _log(f"start: label {start.label} confidence {start.confidence:.4f}")
    for rec in trajectory_records(traj):
        action = " ".join(f"{v:+.3f}" for v in rec["action"])
        _log(
            f"step {rec['step']}: action [{action}] "
            f"confidence {rec['confidence']:.4f} reward {rec['reward']:+.4f}"
        )
    truth = int(dtest.labels[args.index])
    _log(
        f"final: label {pred.label} confidence {pred.confidence:.4f} "
        f"true {truth} steps {len(traj)}"
    )
    return 0


_COMMANDS = {
    "train-blackbox": cmd_train_blackbox,
    "distort": cmd_distort,
    "train-rest": cmd_train_rest,
    "eval": cmd_eval,
    "experiment": cmd_experiment,
    "inspect-episode": cmd_inspect_episode,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="restlearn",
        description="Train and evaluate a spatial-transform RL agent against a frozen classifier.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-blackbox", help="train and cache the frozen classifier")
    _add_common(p)

    p = sub.add_parser("distort", help="export a distorted IDX dataset")
    _add_common(p)
    p.add_argument("--split", choices=("train", "test"), default="test")

    p = sub.add_parser("train-rest", help="train the warp agent on one family")
    _add_common(p)

    p = sub.add_parser("eval", help="evaluate BB (and optionally an agent) on a family")
    _add_common(p)
    p.add_argument("--agent", type=Path, default=None, help="saved agent file")

    p = sub.add_parser("experiment", help="run a named experiment suite")
    p.add_argument("name", choices=sorted(EXPERIMENTS))
    _add_common(p)

    p = sub.add_parser("inspect-episode", help="step-by-step episode log for one image")
    _add_common(p)
    p.add_argument("--agent", type=Path, default=None, help="saved agent file")
    p.add_argument("--index", type=int, default=0, help="test-image index")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
