"""PPO agent that learns spatial transforms from black-box confidence alone.

The actor maps the current image to the mean of a diagonal Gaussian over a
7-dimensional unit action (tanh head, so the mean is always in (-1, 1));
actions rescale onto the affine parameter bounds and warp the image. The
reward is a confidence (or uncertainty) improvement signal from the frozen
classifier; the classifier's internals are never touched.

Sign conventions and case splits that the underlying formulas leave open are
documented on each reward function.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import modelio
from .blackbox import (
    mc_dropout_predict_batch,
    mutual_information_batch,
    predict,
    predict_probs,
)
from .data import LabeledImages
from .nn import (
    Adam,
    Conv2d,
    Dense,
    Flatten,
    MaxPool2,
    ReLU,
    Sequential,
    Tanh,
    clip_grad_norm,
)
from .warp import params_from_unit_batch, warp_batch

N_ACTIONS = 7
EPS = 1e-8
ACTION_CLAMP = 1.0 - 1e-6

REWARD_VARIANTS = ("log_ratio", "shaped", "mi", "mi_tuned")
_MI_VARIANTS = ("mi", "mi_tuned")


@dataclass
class ActorCritic:
    actor: Sequential
    critic: Sequential
    input_shape: tuple
    meta: dict = field(default_factory=dict)

    @property
    def params(self):
        return self.actor.params + self.critic.params

    @property
    def grads(self):
        return self.actor.grads + self.critic.grads


def _backbone(input_shape, out_dim, rng):
    h, w, c = input_shape
    layers = [Conv2d(c, 16, 3, rng), ReLU(), MaxPool2(), Conv2d(16, 32, 3, rng), ReLU(), MaxPool2()]
    fh = ((h - 2) // 2 - 2) // 2
    fw = ((w - 2) // 2 - 2) // 2
    if fh < 1 or fw < 1:
        raise ValueError(f"input {input_shape} too small for the agent backbone")
    layers += [Flatten(), Dense(32 * fh * fw, 128, rng), ReLU(), Dense(128, out_dim, rng, init="zero")]
    return layers


def build_actor_critic(input_shape, seed) -> ActorCritic:
    """Fresh agent; zero-initialized heads start at the identity transform."""
    ss = np.random.SeedSequence(seed)
    actor_rng, critic_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    actor = Sequential(_backbone(input_shape, N_ACTIONS, actor_rng) + [Tanh()])
    critic = Sequential(_backbone(input_shape, 1, critic_rng))
    return ActorCritic(actor=actor, critic=critic, input_shape=tuple(input_shape))


@dataclass
class RewardConfig:
    variant: str = "shaped"
    threshold: float = 0.9  # terminate when confidence exceeds this
    mi_threshold: float = 0.05  # MI variants terminate when MI drops below this
    max_steps: int = 10
    mc_samples: int = 30

    def __post_init__(self):
        if self.variant not in REWARD_VARIANTS:
            raise ValueError(f"unknown reward variant {self.variant!r}")
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must be in (0, 1)")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")

    @property
    def uses_mi(self):
        return self.variant in _MI_VARIANTS


@dataclass
class PPOConfig:
    lr: float = 1e-4
    clip_eps: float = 0.2
    gamma: float = 0.99
    lam: float = 0.95
    epochs: int = 4
    minibatch_size: int = 256
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    max_grad_norm: float = 0.5
    std_train: float = 1.0
    std_infer: float = 0.1


@dataclass
class Trajectory:
    """One episode: states[t] is the image the agent saw before actions[t].

    Actions are stored unclamped (the exact Gaussian draws the log densities
    describe); clamping happens only on the way into the warp.
    """

    states: np.ndarray  # (T, H, W, C)
    actions: np.ndarray  # (T, 7)
    log_densities: np.ndarray  # (T,)
    values: np.ndarray  # (T,)
    rewards: np.ndarray  # (T,)
    confidences: np.ndarray  # (T,) confidence (or MI) after each action
    final_state: np.ndarray  # (H, W, C)
    final_value: float  # V(final_state), the truncation bootstrap
    terminated: bool  # True when the threshold fired, False on step cap
    initial_confidence: float
    target_label: int | None
    mode: str

    def __len__(self):
        return self.states.shape[0]

    @property
    def final_confidence(self):
        return float(self.confidences[-1])


def gaussian_log_density(actions, means, std):
    """Log density of a diagonal Normal; rows of (N, D) actions and means."""
    a = np.atleast_2d(actions)
    m = np.atleast_2d(means)
    d = a.shape[1]
    if std == 0.0:
        exact = np.all(a == m, axis=1)
        out = np.where(exact, np.inf, -np.inf)
    else:
        z = (a - m) / std
        out = -0.5 * np.sum(z * z, axis=1) - d * np.log(std) - 0.5 * d * np.log(2.0 * np.pi)
    return out if np.asarray(actions).ndim == 2 else float(out[0])


def sample_action(actor_critic: ActorCritic, state, std, rng):
    """Draw one unit-space action around the actor mean; returns the raw draw."""
    mean = _actor_means(actor_critic, state[None])[0]
    noise = rng.standard_normal(N_ACTIONS) * std if std > 0.0 else np.zeros(N_ACTIONS)
    action = mean + noise
    return action, gaussian_log_density(action, mean, std)


def _nchw(states):
    return np.ascontiguousarray(np.asarray(states, dtype=np.float64).transpose(0, 3, 1, 2))


def _actor_means(actor_critic, states):
    return actor_critic.actor.forward(_nchw(states))


def _critic_values(actor_critic, states):
    return actor_critic.critic.forward(_nchw(states))[:, 0]


def reward_log_ratio(c_next, c_curr):
    """Confidence log ratio: ln c_next - ln c_curr, inputs floored at 1e-8."""
    return float(np.log(max(c_next, EPS)) - np.log(max(c_curr, EPS)))


def reward_shaped(c_next, c_curr):
    """Log-ratio on (1 - c) with a constant -1 step penalty.

    Equals -1 when the confidence is unchanged, grows without bound (up to
    the 1e-8 floor) as c_next approaches 1.
    """
    return float(-np.log(max(1.0 - c_next, EPS)) + np.log(max(1.0 - c_curr, EPS)) - 1.0)


def reward_mi(mi_next, mi_curr):
    """Uncertainty version of the shaped reward: positive when MI shrinks."""
    return float(np.log(max(mi_curr, EPS)) - np.log(max(mi_next, EPS)) - 1.0)


def reward_mi_tuned(mi_next, mi_curr, label_next, label_curr, target):
    """Sign-corrected MI reward.

    The magnitude is |ln mi_next - ln mi_curr|; the sign is positive exactly
    when the change is beneficial: uncertainty fell while the classifier
    predicts the target, or rose while it predicts something else. This case
    table is a reconstruction (the source formula is described only
    qualitatively); label_curr is accepted for symmetry but the sign depends
    on the post-step label. A -1 step penalty applies throughout.
    """
    diff = np.log(max(mi_next, EPS)) - np.log(max(mi_curr, EPS))
    if diff == 0.0:
        return -1.0
    beneficial = (diff < 0.0 and label_next == target) or (diff > 0.0 and label_next != target)
    return float(abs(diff) if beneficial else -abs(diff)) - 1.0


def _step_rewards(variant, c_next, c_curr, labels_next, targets):
    if variant == "log_ratio":
        return np.array([reward_log_ratio(n, c) for n, c in zip(c_next, c_curr)])
    if variant == "shaped":
        return np.array([reward_shaped(n, c) for n, c in zip(c_next, c_curr)])
    if variant == "mi":
        return np.array([reward_mi(n, c) for n, c in zip(c_next, c_curr)])
    return np.array(
        [
            reward_mi_tuned(n, c, ln, None, t)
            for n, c, ln, t in zip(c_next, c_curr, labels_next, targets)
        ]
    )


def _confidence_batch(blackbox, states, mode, targets):
    probs = predict_probs(blackbox, states)
    if mode == "train":
        return probs[np.arange(len(states)), targets]
    return probs.max(axis=1)


def _mi_batch(blackbox, states, cfg, seed):
    samples = mc_dropout_predict_batch(blackbox, states, cfg.mc_samples, seed)
    labels = predict_probs(blackbox, states).argmax(axis=1)
    return mutual_information_batch(samples), labels


def collect_episodes(actor_critic, blackbox, images, targets, cfg: RewardConfig,
                     mode, std, episode_rngs, mi_seed_rng=None):
    """Run one episode per image in lockstep; returns a list of Trajectory.

    Each episode draws its action noise from its own generator, so results
    do not depend on how images are batched together. MI confidence is the
    exception: dropout masks are drawn per step across the whole batch.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    images = np.asarray(images, dtype=np.float64)
    n = images.shape[0]
    if mode == "train" and targets is None:
        raise ValueError("training episodes need target labels")
    # recorded rewards are advisory in inference mode, so the label-dependent
    # mi_tuned variant falls back to plain mi there
    variant = cfg.variant
    if mode == "infer" and variant == "mi_tuned":
        variant = "mi"
    if variant == "mi_tuned" and targets is None:
        raise ValueError("mi_tuned reward needs target labels")
    targets = np.zeros(n, dtype=np.int64) if targets is None else np.asarray(targets)
    if cfg.uses_mi and mi_seed_rng is None:
        mi_seed_rng = np.random.default_rng(0)

    states = images.copy()
    if cfg.uses_mi:
        c_curr, _ = _mi_batch(blackbox, states, cfg, int(mi_seed_rng.integers(2**63)))
    else:
        c_curr = _confidence_batch(blackbox, states, mode, targets)
    initial_conf = c_curr.copy()

    steps = [[] for _ in range(n)]  # per-episode (state, action, logd, value, reward, conf)
    done = np.zeros(n, dtype=bool)
    terminated = np.zeros(n, dtype=bool)
    active = np.arange(n)
    for _ in range(cfg.max_steps):
        if active.size == 0:
            break
        act_states = states[active]
        means = _actor_means(actor_critic, act_states)
        values = _critic_values(actor_critic, act_states)
        noise = np.stack([episode_rngs[i].standard_normal(N_ACTIONS) for i in active])
        actions = means + noise * std if std > 0.0 else means.copy()
        logd = gaussian_log_density(actions, means, std)
        clamped = np.clip(actions, -ACTION_CLAMP, ACTION_CLAMP)
        next_states = warp_batch(act_states, params_from_unit_batch(clamped))
        if cfg.uses_mi:
            c_next, labels_next = _mi_batch(
                blackbox, next_states, cfg, int(mi_seed_rng.integers(2**63))
            )
        else:
            c_next = _confidence_batch(blackbox, next_states, mode, targets[active])
            labels_next = None
        rewards = _step_rewards(
            variant, c_next, c_curr[active],
            labels_next, targets[active] if labels_next is not None else None,
        )
        if cfg.uses_mi:
            fired = c_next < cfg.mi_threshold
        else:
            fired = c_next > cfg.threshold
        for row, idx in enumerate(active):
            steps[idx].append(
                (act_states[row], actions[row], logd[row], values[row], rewards[row], c_next[row])
            )
        states[active] = next_states
        c_curr[active] = c_next
        terminated[active] |= fired
        done[active] |= fired
        active = active[~fired]
    # bootstrap values for episodes cut off by the step cap
    final_values = np.zeros(n)
    truncated = ~terminated
    if np.any(truncated):
        final_values[truncated] = _critic_values(actor_critic, states[truncated])

    out = []
    for i in range(n):
        rows = steps[i]
        out.append(
            Trajectory(
                states=np.stack([r[0] for r in rows]),
                actions=np.stack([r[1] for r in rows]),
                log_densities=np.array([r[2] for r in rows]),
                values=np.array([r[3] for r in rows]),
                rewards=np.array([r[4] for r in rows]),
                confidences=np.array([r[5] for r in rows]),
                final_state=states[i],
                final_value=float(final_values[i]),
                terminated=bool(terminated[i]),
                initial_confidence=float(initial_conf[i]),
                target_label=int(targets[i]) if mode == "train" or cfg.uses_mi else None,
                mode=mode,
            )
        )
    return out


def run_episode(actor_critic, blackbox, image, target_label, cfg: RewardConfig,
                mode="train", rng=None, std=None):
    """Single-image episode; always takes at least one action."""
    rng = np.random.default_rng(0) if rng is None else rng
    std = (1.0 if mode == "train" else 0.1) if std is None else std
    targets = None if target_label is None else np.array([target_label])
    return collect_episodes(
        actor_critic, blackbox, np.asarray(image, dtype=np.float64)[None], targets,
        cfg, mode, std, [rng], mi_seed_rng=rng if cfg.uses_mi else None,
    )[0]


def compute_advantages(trajectory: Trajectory, gamma: float, lam: float):
    """GAE advantages and returns; truncated episodes bootstrap final_value."""
    r, v = trajectory.rewards, trajectory.values
    t = len(r)
    next_values = np.append(v[1:], 0.0 if trajectory.terminated else trajectory.final_value)
    deltas = r + gamma * next_values - v
    advantages = np.empty(t)
    acc = 0.0
    for i in range(t - 1, -1, -1):
        acc = deltas[i] + gamma * lam * acc
        advantages[i] = acc
    return advantages, advantages + v


def ppo_update(actor_critic, trajectories, cfg: PPOConfig, optimizer, rng):
    """Clipped-surrogate PPO epoch(s) over the collected steps.

    With a fixed action std the policy entropy is a constant, so the entropy
    bonus contributes no gradient; it is folded into the reported loss only.
    """
    if not trajectories:
        raise ValueError("ppo_update needs at least one trajectory")
    states = np.concatenate([t.states for t in trajectories])
    actions = np.concatenate([t.actions for t in trajectories])
    old_logd = np.concatenate([t.log_densities for t in trajectories])
    adv_list, ret_list = [], []
    for t in trajectories:
        adv, ret = compute_advantages(t, cfg.gamma, cfg.lam)
        adv_list.append(adv)
        ret_list.append(ret)
    advantages = np.concatenate(adv_list)
    returns = np.concatenate(ret_list)
    if advantages.size > 1:
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)

    m = states.shape[0]
    std = cfg.std_train
    entropy = 0.5 * N_ACTIONS * (1.0 + np.log(2.0 * np.pi)) + N_ACTIONS * np.log(std)
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "clip_fraction": 0.0,
             "entropy": entropy, "updates": 0}
    for _ in range(cfg.epochs):
        order = rng.permutation(m)
        for start in range(0, m, cfg.minibatch_size):
            mb = order[start : start + cfg.minibatch_size]
            x = states[mb]
            mb_n = mb.size
            means = _actor_means(actor_critic, x)
            new_logd = gaussian_log_density(actions[mb], means, std)
            ratio = np.exp(new_logd - old_logd[mb])
            clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
            adv = advantages[mb]
            surr1 = ratio * adv
            surr2 = clipped * adv
            policy_loss = -np.minimum(surr1, surr2).mean()
            # gradient flows through the unclipped branch only where it is the min
            grad_mask = (surr1 <= surr2).astype(np.float64)
            dmeans = (
                -(grad_mask * ratio * adv)[:, None]
                * ((actions[mb] - means) / (std * std))
                / mb_n
            )
            actor_critic.actor.backward(dmeans)

            values = _critic_values(actor_critic, x)
            verr = values - returns[mb]
            value_loss = float(np.mean(verr * verr))
            dvalues = (cfg.value_coef * 2.0 * verr / mb_n)[:, None]
            actor_critic.critic.backward(dvalues)

            clip_grad_norm(actor_critic.grads, cfg.max_grad_norm)
            optimizer.step(actor_critic.grads)

            stats["policy_loss"] += float(policy_loss)
            stats["value_loss"] += value_loss
            stats["clip_fraction"] += float(np.mean(surr2 < surr1))
            stats["updates"] += 1
    for key in ("policy_loss", "value_loss", "clip_fraction"):
        stats[key] /= max(stats["updates"], 1)
    return stats


@dataclass
class TrainRestConfig:
    epochs: int = 3
    episodes_per_update: int = 256
    seed: int = 0
    reward: RewardConfig = field(default_factory=RewardConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    max_episodes_per_epoch: int | None = None  # subsample large datasets
    log: object = None


def train_rest(actor_critic, blackbox, dataset: LabeledImages, cfg: TrainRestConfig):
    """PPO training over the distorted set; returns per-epoch metric dicts.

    Reproducible end to end: every noise stream is derived from cfg.seed via
    stable spawn keys, so equal configs give bit-identical agents.
    """
    master = np.random.SeedSequence(cfg.seed)
    shuffle_rng = np.random.default_rng(master.spawn(1)[0])
    update_rng = np.random.default_rng(master.spawn(1)[0])
    optimizer = Adam(actor_critic.params, lr=cfg.ppo.lr)
    history = []
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(len(dataset))
        if cfg.max_episodes_per_epoch is not None:
            order = order[: cfg.max_episodes_per_epoch]
        ep_rewards, ep_lengths, ep_hits = [], [], []
        stats = {}
        for start in range(0, len(order), cfg.episodes_per_update):
            idx = order[start : start + cfg.episodes_per_update]
            episode_rngs = [
                np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1, epoch, int(i))))
                for i in idx
            ]
            mi_seed_rng = (
                np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(2, epoch, start)))
                if cfg.reward.uses_mi
                else None
            )
            trajectories = collect_episodes(
                actor_critic, blackbox, dataset.images[idx], dataset.labels[idx],
                cfg.reward, "train", cfg.ppo.std_train, episode_rngs, mi_seed_rng,
            )
            stats = ppo_update(actor_critic, trajectories, cfg.ppo, optimizer, update_rng)
            finals = np.stack([t.final_state for t in trajectories])
            final_labels = predict_probs(blackbox, finals).argmax(axis=1)
            for traj, target, final_label in zip(trajectories, dataset.labels[idx], final_labels):
                ep_rewards.append(float(traj.rewards.sum()))
                ep_lengths.append(len(traj))
                ep_hits.append(int(final_label) == int(target))
        row = {
            "epoch": epoch,
            "mean_reward": float(np.mean(ep_rewards)),
            "mean_length": float(np.mean(ep_lengths)),
            "train_accuracy": float(np.mean(ep_hits)),
            "wall_seconds": time.perf_counter() - t0,
            **{f"loss_{k}": v for k, v in stats.items()},
        }
        history.append(row)
        if cfg.log is not None:
            cfg.log(
                f"epoch {epoch + 1}/{cfg.epochs} reward {row['mean_reward']:.3f} "
                f"len {row['mean_length']:.2f} acc {row['train_accuracy']:.3f} "
                f"({row['wall_seconds']:.1f}s)"
            )
    return history


def infer_transform(actor_critic, blackbox, image, cfg: RewardConfig, rng=None, std=0.1):
    """Inference episode (max-probability confidence, reduced std)."""
    traj = run_episode(actor_critic, blackbox, image, None, cfg, mode="infer",
                       rng=rng, std=std)
    return traj.final_state, predict(blackbox, traj.final_state), traj


def evaluate_policy(actor_critic, blackbox, dataset: LabeledImages, cfg: RewardConfig,
                    seed=0, std=0.1, batch=256):
    """Inference-mode accuracy of REST+BB over a dataset, plus episode stats."""
    hits = 0
    lengths = []
    for start in range(0, len(dataset), batch):
        idx = np.arange(start, min(start + batch, len(dataset)))
        episode_rngs = [
            np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(3, int(i))))
            for i in idx
        ]
        mi_seed_rng = (
            np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(4, start)))
            if cfg.uses_mi
            else None
        )
        trajectories = collect_episodes(
            actor_critic, blackbox, dataset.images[idx], None, cfg, "infer", std,
            episode_rngs, mi_seed_rng,
        )
        finals = np.stack([t.final_state for t in trajectories])
        labels = predict_probs(blackbox, finals).argmax(axis=1)
        hits += int(np.sum(labels == dataset.labels[idx]))
        lengths += [len(t) for t in trajectories]
    return {
        "accuracy": hits / len(dataset),
        "mean_length": float(np.mean(lengths)),
        "episodes": len(dataset),
    }


def save_agent(actor_critic: ActorCritic, path):
    meta = {
        "input_shape": list(actor_critic.input_shape),
        "n_actor_params": len(actor_critic.actor.params),
        "extra": actor_critic.meta,
    }
    modelio.save_arrays(path, "agent", meta, actor_critic.params)


def load_agent(path) -> ActorCritic:
    meta, arrays = modelio.load_arrays(path, "agent")
    ac = build_actor_critic(tuple(meta["input_shape"]), seed=0)
    params = ac.params
    if len(params) != len(arrays):
        raise modelio.ModelFormatError("parameter count does not match architecture")
    for p, a in zip(params, arrays):
        if p.shape != a.shape:
            raise modelio.ModelFormatError("parameter shape does not match architecture")
        p[...] = a
    ac.meta = meta["extra"]
    return ac


def trajectory_records(trajectory: Trajectory):
    """Line-ready dicts: one per step with action, confidence, and reward."""
    return [
        {
            "step": t,
            "action": [float(a) for a in trajectory.actions[t]],
            "confidence": float(trajectory.confidences[t]),
            "reward": float(trajectory.rewards[t]),
        }
        for t in range(len(trajectory))
    ]


def write_trajectory_log(path, trajectory: Trajectory):
    with open(path, "w") as f:
        for record in trajectory_records(trajectory):
            f.write(json.dumps(record) + "\n")
