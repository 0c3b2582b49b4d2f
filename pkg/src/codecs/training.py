"""Reconstruction training for the tiny autoencoder."""

from __future__ import annotations

import logging
from typing import List, Sequence, Tuple, Union

import torch
import torch.nn.functional as F
from tqdm import tqdm

from src.codecs.codec import Codec, CodecConfig, IdentityCodec, build_codec, decode_full
from src.diffusion.training import stack_dataset
from src.utils.errors import NonFiniteError

logger = logging.getLogger(__name__)


def train_toy_codec(
    dataset: Union[torch.Tensor, Sequence[torch.Tensor]],
    config: CodecConfig,
    rng_seed: int,
    dtype: torch.dtype = torch.float32,
) -> Tuple[Codec, List[float]]:
    """
    Build and train a codec on pixel frames.

    The identity mode is returned as-is without touching the data beyond
    reading its channel count.

    :return: The codec and the mean reconstruction loss of every epoch.
    """
    data = stack_dataset(dataset).to(dtype)
    codec = build_codec(config, data.shape[1], rng_seed, dtype)
    if isinstance(codec, IdentityCodec):
        return codec, []
    codec.latent_shape(tuple(data.shape[1:]))

    gen = torch.Generator(device="cpu").manual_seed(rng_seed)
    optimizer = torch.optim.Adam(codec.parameters(), lr=config.lr)
    losses: List[float] = []
    codec.train()
    for epoch in tqdm(range(config.epochs), desc="codec", disable=not config.progress, leave=False):
        order = torch.randperm(data.shape[0], generator=gen)
        total = 0.0
        for start in range(0, data.shape[0], config.batch_size):
            x = data[order[start:start + config.batch_size]]
            loss = F.mse_loss(decode_full(codec.encode(x), codec), x)
            if not torch.isfinite(loss):
                raise NonFiniteError(f"codec loss became non-finite in epoch {epoch}")
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            total += loss.item() * x.shape[0]
        losses.append(total / data.shape[0])
    codec.eval()
    for p in codec.parameters():
        p.requires_grad_(False)
    if losses:
        logger.info("Trained %s codec for %d epochs, final MSE %.6f", config.mode, config.epochs, losses[-1])
    return codec, losses
