"""
Restoration-quality and temporal-consistency metrics on clips shaped
``(N, C, H, W)`` with values in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import torch
from skimage.metrics import peak_signal_noise_ratio, structural_similarity

from src.flow.estimators import FlowEstimator, estimate_clip_flows
from src.flow.warping import backward_warp, occlusion_mask
from src.utils.errors import ShapeMismatchError


def _check_pair(x: torch.Tensor, y: torch.Tensor) -> None:
    if x.shape != y.shape:
        raise ShapeMismatchError(f"clips differ in shape: {tuple(x.shape)} vs {tuple(y.shape)}")
    if x.dim() != 4:
        raise ShapeMismatchError(f"clips must be shaped (N, C, H, W), got {tuple(x.shape)}")


def psnr(x: torch.Tensor, y: torch.Tensor) -> Tuple[List[float], float]:
    """
    10·log10(1 / MSE) per frame, on the [0, 1] range.

    Identical frames give ``inf``.

    :return: Per-frame values and their mean.
    """
    _check_pair(x, y)
    reference = y.detach().double().cpu().numpy()
    restored = x.detach().double().cpu().numpy()
    with np.errstate(divide="ignore"):
        frames = [float(peak_signal_noise_ratio(r, t, data_range=1.0)) for r, t in zip(reference, restored)]
    return frames, float(np.mean(frames))


def ssim(
    x: torch.Tensor,
    y: torch.Tensor,
    window: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
) -> Tuple[List[float], float]:
    """
    Gaussian-window SSIM per frame (channel mean), data range 1.

    :raises ValueError: for an even window or frames smaller than it.
    """
    _check_pair(x, y)
    if window % 2 == 0:
        raise ValueError(f"SSIM window must be odd, got {window}")
    if min(x.shape[-2:]) < window:
        raise ValueError(f"frames of size {tuple(x.shape[-2:])} are smaller than the SSIM window {window}")
    xs = x.detach().double().cpu().numpy()
    ys = y.detach().double().cpu().numpy()
    frames = [
        float(
            structural_similarity(
                a,
                b,
                win_size=window,
                data_range=1.0,
                channel_axis=0,
                gaussian_weights=True,
                sigma=sigma,
                use_sample_covariance=False,
                K1=k1,
                K2=k2,
            )
        )
        for a, b in zip(xs, ys)
    ]
    return frames, float(np.mean(frames))


@dataclass
class WarpingErrorResult:
    raw: float
    per_pair: List[float] = field(default_factory=list)
    excluded_pairs: int = 0

    @property
    def scaled(self) -> float:
        """Value in units of 10⁻², as tables report it."""
        return self.raw * 100.0


def warping_error(clip: torch.Tensor, flows: torch.Tensor, masks: torch.Tensor) -> WarpingErrorResult:
    """
    Mean over frame pairs of the masked squared difference between frame n
    and frame n+1 warped back onto it.

    Masking comes first, then the average over valid pixels and channels.
    Pairs whose mask is entirely invalid are excluded and counted.
    """
    if clip.dim() != 4:
        raise ShapeMismatchError(f"clips must be shaped (N, C, H, W), got {tuple(clip.shape)}")
    pairs = clip.shape[0] - 1
    if flows.shape[0] != pairs or masks.shape[0] != pairs:
        raise ShapeMismatchError(f"{clip.shape[0]} frames need {pairs} flows and masks")
    if pairs == 0:
        return WarpingErrorResult(0.0)
    clip = clip.detach().double()
    warped = backward_warp(clip[1:], flows.double())
    values: List[float] = []
    excluded = 0
    for n in range(pairs):
        m = masks[n].double()
        valid = float(m.sum())
        if valid == 0.0:
            excluded += 1
            continue
        sq = (m * (clip[n] - warped[n])).pow(2).sum()
        values.append(float(sq) / (valid * clip.shape[1]))
    raw = float(np.mean(values)) if values else math.nan
    return WarpingErrorResult(raw, values, excluded)


def metric_flows(
    reference: torch.Tensor,
    estimator: FlowEstimator,
    tol_abs: float = 0.01,
    tol_rel: float = 0.5,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Forward flows of ``reference`` and their forward-backward validity masks."""
    fwd, bwd = estimate_clip_flows(reference, estimator)
    return fwd, occlusion_mask(fwd, bwd, tol_abs, tol_rel)


def lpips_like(x: torch.Tensor, y: torch.Tensor, extractor: Optional[torch.nn.Module]) -> Optional[float]:
    """Clip-mean perceptual distance, or ``None`` when no extractor is configured."""
    if extractor is None:
        return None
    from src.metrics.perceptual import perceptual_distance

    _check_pair(x, y)
    with torch.no_grad():
        param = next(extractor.parameters())
        return float(perceptual_distance(x.to(param.dtype), y.to(param.dtype), extractor))
