"""
Score networks ε_θ(x, t).

Any callable taking a batched tensor ``(B, C, H, W)`` and a timestep
(integer or LongTensor of shape ``(B,)``) and returning a tensor of the
same shape can serve as a score network.  :class:`ToyScoreNetwork` is the
small convolutional denoiser used at desk scale: a sinusoidal time
embedding added into a stack of residual conv blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import torch
from torch import nn

from src.utils.config_sections import ConfigSection

ScoreNetwork = Callable[[torch.Tensor, Union[int, torch.Tensor]], torch.Tensor]


@dataclass(frozen=True)
class ScoreNetworkConfig(ConfigSection):
    width: int = 32
    depth: int = 2
    time_dim: int = 32
    groups: int = 8

    def __post_init__(self) -> None:
        if self.width < 1 or self.depth < 0 or self.time_dim < 2 or self.time_dim % 2:
            raise ValueError("width >= 1, depth >= 0 and an even time_dim >= 2 are required")
        if self.width % self.groups:
            raise ValueError("width must be divisible by groups")


def timestep_embedding(t: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=torch.float64, device=t.device) / half)
    args = t.to(torch.float64)[:, None] * freqs[None]
    return torch.cat([torch.cos(args), torch.sin(args)], dim=-1)


class _ResBlock(nn.Module):
    def __init__(self, width: int, time_width: int, groups: int) -> None:
        super().__init__()
        self.norm1 = nn.GroupNorm(groups, width)
        self.conv1 = nn.Conv2d(width, width, 3, padding=1)
        self.time = nn.Linear(time_width, width)
        self.norm2 = nn.GroupNorm(groups, width)
        self.conv2 = nn.Conv2d(width, width, 3, padding=1)
        self.act = nn.SiLU()

    def forward(self, x: torch.Tensor, emb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(self.act(self.norm1(x)))
        h = h + self.time(emb)[:, :, None, None]
        h = self.conv2(self.act(self.norm2(h)))
        return x + h


class ToyScoreNetwork(nn.Module):
    """
    Small ε-prediction network.

    :param channels: Channels of the latent it denoises.
    :param config: Width, depth and embedding size.
    """

    def __init__(self, channels: int, config: ScoreNetworkConfig = ScoreNetworkConfig()) -> None:
        super().__init__()
        self.channels = channels
        self.config = config
        self.time_mlp = nn.Sequential(
            nn.Linear(config.time_dim, config.width),
            nn.SiLU(),
            nn.Linear(config.width, config.width),
        )
        self.inp = nn.Conv2d(channels, config.width, 3, padding=1)
        self.blocks = nn.ModuleList(_ResBlock(config.width, config.width, config.groups) for _ in range(config.depth))
        self.out_norm = nn.GroupNorm(config.groups, config.width)
        self.out = nn.Conv2d(config.width, channels, 3, padding=1)

    def forward(self, x: torch.Tensor, t: Union[int, torch.Tensor]) -> torch.Tensor:
        if not isinstance(t, torch.Tensor):
            t = torch.tensor([t], device=x.device)
        t = t.reshape(-1).expand(x.shape[0]) if t.numel() == 1 else t.reshape(-1)
        emb = self.time_mlp(timestep_embedding(t, self.config.time_dim).to(x.dtype))
        h = self.inp(x)
        for block in self.blocks:
            h = block(h, emb)
        return self.out(torch.nn.functional.silu(self.out_norm(h)))


def build_score_network(channels: int, config: ScoreNetworkConfig, rng_seed: int, dtype: torch.dtype = torch.float32) -> ToyScoreNetwork:
    """Construct a :class:`ToyScoreNetwork` with seeded initialisation."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(rng_seed)
        net = ToyScoreNetwork(channels, config)
    return net.to(dtype)


def call_score(net: ScoreNetwork, x: torch.Tensor, t: Union[int, torch.Tensor]) -> torch.Tensor:
    """Evaluate ``net`` on a single latent ``(C, H, W)`` or a batch."""
    if x.dim() == 3:
        return net(x.unsqueeze(0), t).squeeze(0)
    return net(x, t)
