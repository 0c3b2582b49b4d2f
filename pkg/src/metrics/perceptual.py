"""
Fixed-feature perceptual distance.

A stand-in for learned perceptual metrics: a small convolutional
feature extractor with frozen, seeded random weights.  Feature maps are
unit-normalized across channels at every pixel, their squared
differences summed over channels and averaged over space, and the
per-layer values averaged.  Differentiable, so it also serves as the
perceptual term of the data loss.
"""

from __future__ import annotations

from typing import Callable, Dict, List

import torch
from torch import nn

from src.utils.errors import PluginError, ShapeMismatchError

PERCEPTUAL_EXTRACTORS: Dict[str, Callable[..., nn.Module]] = {}


def register_perceptual_extractor(name: str):
    def decorator(factory):
        PERCEPTUAL_EXTRACTORS[name] = factory
        return factory

    return decorator


@register_perceptual_extractor("random_conv")
class FixedFeatureExtractor(nn.Module):
    def __init__(self, channels: int = 3, rng_seed: int = 0, widths=(8, 16, 16)) -> None:
        super().__init__()
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(rng_seed)
            layers: List[nn.Module] = []
            c_in = channels
            for i, width in enumerate(widths):
                layers.append(nn.Conv2d(c_in, width, 3, stride=1 if i == 0 else 2, padding=1, padding_mode="replicate"))
                c_in = width
        self.layers = nn.ModuleList(layers)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> List[torch.Tensor]:
        feats = []
        h = 2.0 * x - 1.0
        for layer in self.layers:
            h = torch.relu(layer(h.to(layer.weight.dtype)))
            feats.append(h)
        return feats


def get_perceptual_extractor(name: str, channels: int, rng_seed: int = 0, dtype: torch.dtype = torch.float32) -> nn.Module:
    """
    :raises PluginError: if no extractor is registered under ``name``.
    """
    try:
        factory = PERCEPTUAL_EXTRACTORS[name]
    except KeyError:
        raise PluginError(f"no perceptual extractor registered as {name!r}; known: {sorted(PERCEPTUAL_EXTRACTORS)}") from None
    return factory(channels=channels, rng_seed=rng_seed).to(dtype)


def _unit(f: torch.Tensor, eps: float = 1e-10) -> torch.Tensor:
    return f / (f.pow(2).sum(dim=1, keepdim=True).sqrt() + eps)


def perceptual_distance(x: torch.Tensor, y: torch.Tensor, extractor: nn.Module) -> torch.Tensor:
    """
    Mean over layers of the spatially averaged squared distance between
    channel-normalized feature maps; inputs ``(C, H, W)`` or ``(B, C, H, W)``.
    """
    if x.shape != y.shape:
        raise ShapeMismatchError(f"perceptual inputs differ in shape: {tuple(x.shape)} vs {tuple(y.shape)}")
    if x.dim() == 3:
        x, y = x.unsqueeze(0), y.unsqueeze(0)
    fx, fy = extractor(x), extractor(y)
    per_layer = [(_unit(a) - _unit(b)).pow(2).sum(dim=1).mean() for a, b in zip(fx, fy)]
    return torch.stack(per_layer).mean()
