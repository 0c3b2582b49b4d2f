"""
Discrete noise schedules and the DDIM skip schedule.

A :class:`NoiseSchedule` holds β, α = 1 − β and ᾱ (the running product of
α) as float64 tensors, plus the strictly decreasing list of timesteps the
deterministic sampler visits.  The sampler treats the step *after* the
last listed timestep as a terminal step with ᾱ = 1, so the final update
returns the clean estimate itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import torch

from src.utils.checkpoints import tensor_sha256
from src.utils.config_sections import ConfigSection
from src.utils.errors import ScheduleError

#: ``t_prev`` value that denotes the terminal step of the sampler.
TERMINAL_STEP = -1


@dataclass(frozen=True)
class ScheduleConfig(ConfigSection):
    T_train: int = 1000
    T_rev: int = 4
    beta_min: float = 1e-4
    beta_max: float = 2e-2

    def __post_init__(self) -> None:
        if self.T_train < 1:
            raise ValueError("T_train must be at least 1")
        if self.T_rev < 1:
            raise ValueError("T_rev must be at least 1")

    def build(self) -> "NoiseSchedule":
        return make_schedule(self.T_train, self.T_rev, self.beta_min, self.beta_max)


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    T_train: int
    betas: torch.Tensor
    alphas: torch.Tensor
    alpha_bars: torch.Tensor
    reverse_timesteps: Tuple[int, ...]

    @classmethod
    def from_alpha_bars(cls, alpha_bars: Sequence[float], reverse_timesteps: Sequence[int]) -> "NoiseSchedule":
        """
        Build a schedule directly from ᾱ values.

        Useful for hand-checked examples; only requires ᾱ to lie in
        [0, 1] and be non-increasing, and the timesteps to be strictly
        decreasing indices into it.
        """
        ab = torch.as_tensor(alpha_bars, dtype=torch.float64).flatten()
        if ab.numel() == 0:
            raise ScheduleError("alpha_bars must not be empty")
        if bool((ab < 0).any()) or bool((ab > 1).any()):
            raise ScheduleError("alpha_bars must lie in [0, 1]")
        if bool((ab[1:] > ab[:-1]).any()):
            raise ScheduleError("alpha_bars must be non-increasing")
        steps = tuple(int(t) for t in reverse_timesteps)
        _check_timesteps(steps, ab.numel())
        prev = torch.cat([ab.new_ones(1), ab[:-1]])
        alphas = torch.where(prev > 0, ab / prev.clamp_min(1e-300), torch.zeros_like(ab))
        return cls(ab.numel(), 1.0 - alphas, alphas, ab, steps)

    def alpha_bar(self, t: Union[int, torch.Tensor], like: torch.Tensor = None) -> torch.Tensor:
        """
        ᾱ at timestep ``t`` (``TERMINAL_STEP`` maps to 1).

        ``t`` may be an integer or a LongTensor of timesteps.  The result
        takes the dtype and device of ``like`` when given.
        """
        if isinstance(t, torch.Tensor):
            idx = t.long().cpu()
            if bool(((idx < TERMINAL_STEP) | (idx >= self.T_train)).any()):
                raise ScheduleError(f"timesteps out of range [0, {self.T_train - 1}]")
            value = torch.where(idx == TERMINAL_STEP, torch.ones_like(self.alpha_bars[0]), self.alpha_bars[idx.clamp_min(0)])
        else:
            if t == TERMINAL_STEP:
                value = torch.ones((), dtype=torch.float64)
            elif 0 <= t < self.T_train:
                value = self.alpha_bars[t]
            else:
                raise ScheduleError(f"timestep {t} out of range [0, {self.T_train - 1}]")
        if like is not None:
            value = value.to(dtype=like.dtype, device=like.device)
        return value

    def step_pairs(self) -> Tuple[Tuple[int, int], ...]:
        """Consecutive ``(t, t_prev)`` pairs ending with the terminal step."""
        steps = self.reverse_timesteps + (TERMINAL_STEP,)
        return tuple(zip(steps[:-1], steps[1:]))

    def schedule_hash(self) -> str:
        return tensor_sha256(self.alpha_bars)


def _check_timesteps(steps: Tuple[int, ...], T_train: int) -> None:
    if not steps:
        raise ScheduleError("reverse_timesteps must not be empty")
    if any(t < 0 or t >= T_train for t in steps):
        raise ScheduleError(f"reverse_timesteps must lie in [0, {T_train - 1}]")
    if any(a <= b for a, b in zip(steps[:-1], steps[1:])):
        raise ScheduleError("reverse_timesteps must be strictly decreasing")


def even_timesteps(T_train: int, T_rev: int) -> Tuple[int, ...]:
    """``T_rev`` indices evenly spaced from ``T_train - 1`` down to 0."""
    if T_rev == 1:
        return (T_train - 1,)
    span = T_train - 1
    return tuple(int(math.floor(span - k * span / (T_rev - 1) + 0.5)) for k in range(T_rev))


def make_schedule(T_train: int, T_rev: int, beta_min: float = 1e-4, beta_max: float = 2e-2) -> NoiseSchedule:
    """
    Linear β ramp from ``beta_min`` to ``beta_max`` over ``T_train`` steps.

    :raises ScheduleError: if ``T_rev`` is outside ``[1, T_train]`` or the
        bounds are non-finite or outside ``0 < beta_min <= beta_max < 1``.
    """
    if not (math.isfinite(beta_min) and math.isfinite(beta_max)):
        raise ScheduleError("beta bounds must be finite")
    if not 0.0 < beta_min <= beta_max < 1.0:
        raise ScheduleError("beta bounds must satisfy 0 < beta_min <= beta_max < 1")
    if T_train < 1:
        raise ScheduleError("T_train must be at least 1")
    if not 1 <= T_rev <= T_train:
        raise ScheduleError(f"T_rev={T_rev} must lie in [1, T_train={T_train}]")

    betas = torch.linspace(beta_min, beta_max, T_train, dtype=torch.float64)
    alphas = 1.0 - betas
    alpha_bars = torch.cumprod(alphas, dim=0)
    steps = even_timesteps(T_train, T_rev)
    _check_timesteps(steps, T_train)
    return NoiseSchedule(T_train, betas, alphas, alpha_bars, steps)
