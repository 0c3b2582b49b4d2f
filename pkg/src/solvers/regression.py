"""
Per-frame seed regression and the seed clustering statistic.

Regression fits one independent seed per frame of a clean clip so that
D(R(z_n)) reproduces the frame; the clustering statistic then compares
distances between seeds of the same clip with distances across clips.
"""

from __future__ import annotations

import logging
from typing import Sequence

import torch
import torch.nn.functional as F
from tqdm import tqdm

from src.codecs.codec import Codec, decode_full
from src.diffusion.sampler import reverse_process
from src.diffusion.schedule import NoiseSchedule
from src.diffusion.score_network import ScoreNetwork
from src.solvers.decomposition import SolverConfig
from src.utils.errors import NonFiniteError, ShapeMismatchError

logger = logging.getLogger(__name__)


def seed_regression(
    X: torch.Tensor,
    net: ScoreNetwork,
    sched: NoiseSchedule,
    codec: Codec,
    config: SolverConfig,
    rng_seed: int | None = None,
) -> torch.Tensor:
    """
    argmin_Z MSE(X, D(R(Z))) with Adam at ``config.lr_seed`` for
    ``config.epochs`` iterations, one seed per frame.

    :return: Detached seeds ``(N, C_z, H_z, W_z)``.
    """
    if X.dim() != 4:
        raise ShapeMismatchError(f"clips must be shaped (N, C, H, W), got {tuple(X.shape)}")
    param = next(net.parameters(), None)
    dtype = param.dtype if param is not None else X.dtype
    X = X.to(dtype)
    latent_shape = tuple(codec.latent_shape(tuple(X.shape[1:])))
    gen = torch.Generator(device="cpu").manual_seed(config.rng_seed if rng_seed is None else rng_seed)
    z = torch.randn((X.shape[0],) + latent_shape, generator=gen, dtype=torch.float64).to(dtype).requires_grad_(True)
    optimizer = torch.optim.Adam([z], lr=config.lr_seed)
    loss = None
    for it in tqdm(range(config.epochs), desc="regress", disable=not config.progress, leave=False):
        recon = decode_full(reverse_process(z, net, sched, gradient_checkpointing=config.gradient_checkpointing), codec)
        loss = F.mse_loss(recon, X)
        if not bool(torch.isfinite(loss)):
            raise NonFiniteError(f"regression loss became non-finite at iteration {it}")
        optimizer.zero_grad(set_to_none=True)
        loss.backward()
        optimizer.step()
    if loss is not None:
        logger.info("Seed regression on %d frames: final MSE %.6g", X.shape[0], float(loss))
    return z.detach()


def cluster_statistic(seed_sets: Sequence[torch.Tensor]) -> float:
    """
    Mean pairwise L2 distance between seeds of the same clip divided by
    the mean pairwise distance between seeds of different clips.

    Pairs are pooled over all clips before averaging.

    :raises ValueError: for fewer than two clips or a clip with one seed.
    """
    if len(seed_sets) < 2:
        raise ValueError(f"need at least two clips, got {len(seed_sets)}")
    flat = [s.detach().double().flatten(1) for s in seed_sets]
    if any(s.shape[0] < 2 for s in flat):
        raise ValueError("every clip needs at least two seeds")
    if len({s.shape[1] for s in flat}) != 1:
        raise ShapeMismatchError("seed dimensions differ between clips")

    intra_sum, intra_count = 0.0, 0
    for s in flat:
        d = torch.pdist(s)
        intra_sum += float(d.sum())
        intra_count += d.numel()
    inter_sum, inter_count = 0.0, 0
    for i in range(len(flat)):
        for j in range(i + 1, len(flat)):
            d = torch.cdist(flat[i], flat[j])
            inter_sum += float(d.sum())
            inter_count += d.numel()
    inter = inter_sum / inter_count
    if inter == 0.0:
        raise ValueError("all seeds coincide across clips")
    return (intra_sum / intra_count) / inter
