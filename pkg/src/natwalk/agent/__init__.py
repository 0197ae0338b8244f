"""Reinforcement-learning agent: environment, exploration, learner and training loop."""

from natwalk.agent.env import EnvConfig, StepInfo, WalkEnv
from natwalk.agent.noise import OUNoise
from natwalk.agent.td3 import LearnerConfig, TD3Learner, TrainingError
from natwalk.agent.training import (
    VARIANTS,
    EvalEpisode,
    TrainConfig,
    TrainResult,
    apply_variant,
    evaluate,
    evaluate_episode,
    load_policy,
    run_training,
)

__all__ = [
    "EnvConfig", "StepInfo", "WalkEnv", "OUNoise", "LearnerConfig", "TD3Learner",
    "TrainingError", "VARIANTS", "EvalEpisode", "TrainConfig", "TrainResult", "apply_variant",
    "evaluate", "evaluate_episode", "load_policy", "run_training",
]
