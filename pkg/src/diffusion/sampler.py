"""
Forward noising, the clean-image estimator, the deterministic DDIM step
and the full reverse process R as a differentiable function of the seed.
"""

from __future__ import annotations

import logging
from typing import Callable, Optional, Union

import torch
from torch.utils.checkpoint import checkpoint as recompute

from src.diffusion.schedule import TERMINAL_STEP, NoiseSchedule
from src.diffusion.score_network import ScoreNetwork, call_score
from src.utils.errors import NonFiniteError, ShapeMismatchError

logger = logging.getLogger(__name__)


def _broadcast(value: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    """Reshape a per-sample ᾱ vector so it broadcasts over ``x``."""
    if value.dim() == 0:
        return value
    return value.reshape(value.shape + (1,) * (x.dim() - 1))


def forward_noise(x0: torch.Tensor, t: Union[int, torch.Tensor], eps: torch.Tensor, sched: NoiseSchedule) -> torch.Tensor:
    """√ᾱ_t·x0 + √(1−ᾱ_t)·eps; ``t`` may be a per-sample LongTensor."""
    if eps.shape != x0.shape:
        raise ShapeMismatchError(f"noise shape {tuple(eps.shape)} != latent shape {tuple(x0.shape)}")
    ab = _broadcast(sched.alpha_bar(t, like=x0), x0)
    return ab.sqrt() * x0 + (1.0 - ab).sqrt() * eps


def estimate_x0(
    x_t: torch.Tensor,
    t: int,
    net: ScoreNetwork,
    sched: NoiseSchedule,
    eps: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """
    Clean-latent estimate (x_t − √(1−ᾱ_t)·ε_θ(x_t, t)) / √ᾱ_t.

    :param eps: Precomputed ε_θ(x_t, t), to avoid a second network call.
    :raises ZeroDivisionError: when ᾱ_t is exactly zero.
    """
    ab = sched.alpha_bar(t, like=x_t)
    if float(ab) == 0.0:
        raise ZeroDivisionError(f"alpha_bar at t={t} is zero; the clean estimate is undefined")
    if eps is None:
        eps = call_score(net, x_t, t)
    return (x_t - (1.0 - ab).sqrt() * eps) / ab.sqrt()


def ddim_step(x_t: torch.Tensor, t: int, t_prev: int, net: ScoreNetwork, sched: NoiseSchedule) -> torch.Tensor:
    """
    One deterministic (η = 0) DDIM update from ``t`` to ``t_prev``.

    ``t_prev = TERMINAL_STEP`` uses ᾱ = 1 and returns the clean estimate.
    """
    if not t > t_prev:
        raise ValueError(f"ddim_step needs t > t_prev, got t={t}, t_prev={t_prev}")
    eps = call_score(net, x_t, t)
    x0 = estimate_x0(x_t, t, net, sched, eps=eps)
    ab_prev = sched.alpha_bar(t_prev, like=x_t)
    if t_prev == TERMINAL_STEP:
        return x0
    return ab_prev.sqrt() * x0 + (1.0 - ab_prev).sqrt() * eps


def reverse_process(
    z: torch.Tensor,
    net: ScoreNetwork,
    sched: NoiseSchedule,
    *,
    gradient_checkpointing: bool = False,
) -> torch.Tensor:
    """
    R(z): DDIM steps over ``sched.reverse_timesteps`` composed in order.

    Works on a single latent ``(C, H, W)`` or a batch ``(B, C, H, W)``.
    Differentiable with respect to ``z`` and the network parameters.  With
    ``gradient_checkpointing`` each step's activations are recomputed
    during the backward pass instead of being stored.
    """
    if not bool(torch.isfinite(z).all()):
        raise NonFiniteError("seed contains non-finite entries")
    x = z
    for t, t_prev in sched.step_pairs():
        if gradient_checkpointing and torch.is_grad_enabled():
            x = recompute(ddim_step, x, t, t_prev, net, sched, use_reentrant=False)
        else:
            x = ddim_step(x, t, t_prev, net, sched)
    return x


def estimate_lipschitz(
    fn: Callable[[torch.Tensor], torch.Tensor],
    z: torch.Tensor,
    *,
    n_directions: int = 100,
    delta: float = 1e-3,
    rng_seed: int = 0,
) -> float:
    """
    Empirical local Lipschitz constant of ``fn`` at ``z``.

    Max over random unit directions u of ||fn(z + δu) − fn(z)|| / δ.

    :raises NonFiniteError: if any slope is not finite.
    """
    gen = torch.Generator(device="cpu").manual_seed(rng_seed)
    best = 0.0
    with torch.no_grad():
        base = fn(z)
        for _ in range(n_directions):
            u = torch.randn(z.shape, generator=gen, dtype=torch.float64).to(dtype=z.dtype, device=z.device)
            u = u / u.norm()
            slope = float((fn(z + delta * u) - base).norm()) / delta
            if slope != slope or slope == float("inf"):
                raise NonFiniteError("non-finite finite-difference slope")
            best = max(best, slope)
    logger.debug("Lipschitz estimate %.4g over %d directions", best, n_directions)
    return best
