"""
ε-prediction training of the toy score network.

Standard denoising objective: draw t uniformly, draw ε ~ N(0, I), noise
the clean latent in closed form and regress ε with mean squared error.
All randomness comes from a ``torch.Generator`` seeded with ``rng_seed``,
so two runs with the same seed produce identical parameters.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import torch
import torch.nn.functional as F
from tqdm import tqdm

from src.diffusion.sampler import forward_noise
from src.diffusion.schedule import NoiseSchedule
from src.diffusion.score_network import ToyScoreNetwork
from src.utils.config_sections import ConfigSection
from src.utils.errors import NonFiniteError, ShapeMismatchError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingConfig(ConfigSection):
    epochs: int = 1500
    lr: float = 2e-3
    batch_size: int = 16
    draws_per_item: int = 4
    progress: bool = True

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.lr <= 0 or self.batch_size < 1 or self.draws_per_item < 1:
            raise ValueError("lr > 0, batch_size >= 1 and draws_per_item >= 1 are required")


def stack_dataset(dataset: Union[torch.Tensor, Sequence[torch.Tensor]]) -> torch.Tensor:
    """
    Stack a sequence of ``(C, H, W)`` tensors (or clips ``(N, C, H, W)``)
    into one ``(M, C, H, W)`` batch.

    :raises ValueError: on an empty dataset.
    :raises ShapeMismatchError: when items disagree in shape.
    """
    if isinstance(dataset, torch.Tensor):
        items = [dataset] if dataset.dim() == 4 else [dataset.unsqueeze(0)]
    else:
        items = [x if x.dim() == 4 else x.unsqueeze(0) for x in dataset]
    if not items or sum(x.shape[0] for x in items) == 0:
        raise ValueError("training dataset is empty")
    shape = items[0].shape[1:]
    for x in items:
        if x.shape[1:] != shape:
            raise ShapeMismatchError(f"dataset item shape {tuple(x.shape[1:])} != {tuple(shape)}")
    return torch.cat(items, dim=0)


def train_toy_dm(
    dataset: Union[torch.Tensor, Sequence[torch.Tensor]],
    net: ToyScoreNetwork,
    sched: NoiseSchedule,
    epochs: int,
    rng_seed: int,
    config: TrainingConfig = TrainingConfig(),
) -> Tuple[ToyScoreNetwork, List[float]]:
    """
    Train ``net`` in place on ``dataset`` for ``epochs`` epochs.

    :return: The trained network and the mean loss of every epoch.
    """
    data = stack_dataset(dataset)
    param = next(net.parameters())
    data = data.to(dtype=param.dtype, device=param.device)
    if data.shape[1] != net.channels:
        raise ShapeMismatchError(f"dataset has {data.shape[1]} channels, network expects {net.channels}")
    losses: List[float] = []
    if epochs == 0:
        return net, losses

    gen = torch.Generator(device="cpu").manual_seed(rng_seed)
    optimizer = torch.optim.Adam(net.parameters(), lr=config.lr)
    pool = data.repeat_interleave(config.draws_per_item, dim=0)
    net.train()
    for epoch in tqdm(range(epochs), desc="score net", disable=not config.progress, leave=False):
        order = torch.randperm(pool.shape[0], generator=gen)
        total, count = 0.0, 0
        for start in range(0, pool.shape[0], config.batch_size):
            x0 = pool[order[start:start + config.batch_size]]
            t = torch.randint(0, sched.T_train, (x0.shape[0],), generator=gen)
            eps = torch.randn(x0.shape, generator=gen, dtype=torch.float64).to(dtype=x0.dtype, device=x0.device)
            x_t = forward_noise(x0, t, eps, sched)
            loss = F.mse_loss(net(x_t, t.to(x0.device)), eps)
            if not torch.isfinite(loss):
                raise NonFiniteError(f"score-network loss became non-finite in epoch {epoch}")
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            total += loss.item() * x0.shape[0]
            count += x0.shape[0]
        losses.append(total / count)
        if epoch % 50 == 0:
            logger.debug("score net epoch %d loss %.5f", epoch, losses[-1])
    net.eval()
    logger.info("Trained score network for %d epochs, final loss %.5f", epochs, losses[-1])
    return net, losses
