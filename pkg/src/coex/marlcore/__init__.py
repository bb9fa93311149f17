"""Value-decomposition learners with conditionally optimistic exploration."""

from coex.marlcore.buffer import ReplayBuffer, RewardScaler, Transition
from coex.marlcore.config import VARIANTS, COEConfig
from coex.marlcore.learner import Learner
from coex.marlcore.nets import AgentNet, MonotonicMixer, VDNMixer, make_mixer
from coex.marlcore.training import EvalPoint, TrainingResult, evaluate, run_training

__all__ = [
    "AgentNet",
    "COEConfig",
    "EvalPoint",
    "Learner",
    "MonotonicMixer",
    "ReplayBuffer",
    "RewardScaler",
    "TrainingResult",
    "Transition",
    "VARIANTS",
    "VDNMixer",
    "evaluate",
    "make_mixer",
    "run_training",
]
