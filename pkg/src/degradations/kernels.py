"""
Seeded generators for blur kernels and inpainting masks.

The motion kernel is a random-walk line: a path crossing the kernel
horizontally whose slope performs a Gaussian random walk scaled by
``strength``.  Strength 0 gives a straight horizontal line, larger
strengths bend the path more.  The path is splatted bilinearly onto the
grid and normalized to sum 1.
"""

from __future__ import annotations

import math

import numpy as np
import torch


def make_motion_kernel(size: int, strength: float, rng_seed: int) -> torch.Tensor:
    """
    :param size: Odd side length.
    :param strength: Curvature scale in [0, 1].
    :return: float64 tensor ``(size, size)`` summing to 1.
    """
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and positive, got {size}")
    if not 0.0 <= strength <= 1.0 or math.isnan(strength):
        raise ValueError(f"strength must lie in [0, 1], got {strength}")

    rng = np.random.default_rng(rng_seed)
    half = (size - 1) / 2.0
    slopes = np.cumsum(rng.standard_normal(size) * strength * 0.5)
    ys = np.cumsum(slopes)
    ys = np.clip(ys - ys.mean(), -half, half)

    kernel = np.zeros((size, size), dtype=np.float64)
    for col, y in enumerate(ys):
        row = y + half
        r0 = int(math.floor(row))
        frac = row - r0
        kernel[r0, col] += 1.0 - frac
        if frac > 0.0:
            kernel[r0 + 1, col] += frac
    kernel /= kernel.sum()
    return torch.from_numpy(kernel)


def make_inpaint_mask(n_frames: int, height: int, width: int, rate: float, rng_seed: int) -> torch.Tensor:
    """
    I.i.d. Bernoulli pixel mask shared across channels.

    :param rate: Probability that a pixel is missing (mask value 0).
    :return: float64 tensor ``(n_frames, 1, height, width)``.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"missing rate must lie in [0, 1], got {rate}")
    gen = torch.Generator(device="cpu").manual_seed(rng_seed)
    draws = torch.rand((n_frames, 1, height, width), generator=gen, dtype=torch.float64)
    return (draws >= rate).to(torch.float64)
