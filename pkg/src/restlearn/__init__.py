"""restlearn: a reinforcement spatial transform learner.

Trains a PPO agent to iteratively warp geometrically distorted images until
a frozen black-box classifier becomes confident about them, recovering
accuracy without touching the classifier.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND
from .agent import (
    ActorCritic,
    PPOConfig,
    RewardConfig,
    TrainRestConfig,
    build_actor_critic,
    evaluate_policy,
    infer_transform,
    load_agent,
    save_agent,
    train_rest,
)
from .blackbox import (
    ClassifierModel,
    Prediction,
    TrainConfig,
    evaluate_accuracy,
    load_model,
    mutual_information,
    predict,
    save_model,
    train_classifier,
)
from .data import LabeledImages
from .distort import (
    DistortionSpec,
    ExclusiveInterval,
    RstCombo,
    enumerate_rst_combos,
    make_distorted_dataset,
    make_family_spec,
    split_disjoint,
)
from .warp import (
    ACTION_BOUNDS,
    AffineParams,
    compose_affine,
    params_from_unit,
    warp_image,
)

__all__ = [
    "ACTION_BOUNDS",
    "ActorCritic",
    "AffineParams",
    "ClassifierModel",
    "DistortionSpec",
    "ExclusiveInterval",
    "KERNEL_BACKEND",
    "LabeledImages",
    "PPOConfig",
    "Prediction",
    "RewardConfig",
    "RstCombo",
    "TrainConfig",
    "TrainRestConfig",
    "__version__",
    "build_actor_critic",
    "compose_affine",
    "enumerate_rst_combos",
    "evaluate_accuracy",
    "evaluate_policy",
    "infer_transform",
    "load_agent",
    "load_model",
    "make_distorted_dataset",
    "make_family_spec",
    "mutual_information",
    "params_from_unit",
    "predict",
    "save_agent",
    "save_model",
    "split_disjoint",
    "train_classifier",
    "train_rest",
    "warp_image",
]
