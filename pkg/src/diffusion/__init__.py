"""
Diffusion core: noise schedules, score networks, the deterministic DDIM
sampler and the reverse process R viewed as a differentiable function
of its seed.
"""

from .sampler import ddim_step, estimate_lipschitz, estimate_x0, forward_noise, reverse_process
from .schedule import TERMINAL_STEP, NoiseSchedule, ScheduleConfig, make_schedule
from .score_network import ScoreNetwork, ScoreNetworkConfig, ToyScoreNetwork, build_score_network
from .training import TrainingConfig, train_toy_dm

__all__ = [
    "TERMINAL_STEP",
    "NoiseSchedule",
    "ScheduleConfig",
    "ScoreNetwork",
    "ScoreNetworkConfig",
    "ToyScoreNetwork",
    "TrainingConfig",
    "build_score_network",
    "ddim_step",
    "estimate_lipschitz",
    "estimate_x0",
    "forward_noise",
    "make_schedule",
    "reverse_process",
    "train_toy_dm",
]
