"""
Optical-flow estimators.

Estimators are callables ``(frame_a, frame_b) -> FlowField`` registered
by name, so a learned estimator can be plugged in from the config file
without touching the solver:

    @register_flow_estimator("my_net")
    class MyNetEstimator:
        def __init__(self, weights: str) -> None: ...
        def __call__(self, a, b): ...

The default is exhaustive block matching: for every pixel, the integer
displacement within ``±search`` minimizing the sum of squared
differences between the ``patch``×``patch`` neighbourhoods, with ties
broken towards the smallest displacement, then lexicographic ``(dy, dx)``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Tuple

import torch
import torch.nn.functional as F

from src.utils.config_sections import ConfigSection
from src.utils.errors import PluginError, ShapeMismatchError

logger = logging.getLogger(__name__)

FlowEstimator = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]

FLOW_ESTIMATORS: Dict[str, Callable[..., FlowEstimator]] = {}


def register_flow_estimator(name: str) -> Callable[[Callable[..., FlowEstimator]], Callable[..., FlowEstimator]]:
    def decorator(factory: Callable[..., FlowEstimator]) -> Callable[..., FlowEstimator]:
        FLOW_ESTIMATORS[name] = factory
        return factory

    return decorator


def get_flow_estimator(name: str, **params: Any) -> FlowEstimator:
    """
    :raises PluginError: if no estimator is registered under ``name``.
    """
    try:
        factory = FLOW_ESTIMATORS[name]
    except KeyError:
        raise PluginError(f"no flow estimator registered as {name!r}; known: {sorted(FLOW_ESTIMATORS)}") from None
    return factory(**params)


def _candidates(search: int) -> Tuple[Tuple[int, int], ...]:
    offsets = [(dy, dx) for dy in range(-search, search + 1) for dx in range(-search, search + 1)]
    return tuple(sorted(offsets, key=lambda d: (d[0] * d[0] + d[1] * d[1], d[0], d[1])))


def estimate_flow_blockmatch(a: torch.Tensor, b: torch.Tensor, patch: int = 5, search: int = 4) -> torch.Tensor:
    """
    Brute-force block-matching flow from ``a`` to ``b``.

    :param a: Frame ``(C, H, W)``.
    :param b: Frame of the same shape.
    :return: ``(2, H, W)`` integer-valued flow (dx, dy).
    """
    if a.shape != b.shape or a.dim() != 3:
        raise ShapeMismatchError(f"block matching needs two (C, H, W) frames of equal shape, got {tuple(a.shape)} and {tuple(b.shape)}")
    if patch < 1 or patch % 2 == 0:
        raise ValueError(f"patch must be odd and positive, got {patch}")
    if search < 0:
        raise ValueError(f"search must be non-negative, got {search}")
    a = a.detach()
    b = b.detach()
    _, h, w = a.shape
    flow = a.new_zeros((2, h, w))
    if search == 0:
        return flow

    half = patch // 2
    pa = F.pad(a.unsqueeze(0), (half,) * 4, mode="replicate")
    pb = F.pad(b.unsqueeze(0), (search + half,) * 4, mode="replicate")
    box = a.new_ones((1, 1, patch, patch))
    best = torch.full((h, w), float("inf"), dtype=a.dtype, device=a.device)
    for dy, dx in _candidates(search):
        shifted = pb[..., search + dy: search + dy + h + 2 * half, search + dx: search + dx + w + 2 * half]
        sq = (pa - shifted).pow(2).sum(dim=1, keepdim=True)
        cost = F.conv2d(sq, box)[0, 0]
        better = cost < best
        best = torch.where(better, cost, best)
        flow[0] = torch.where(better, flow.new_tensor(float(dx)), flow[0])
        flow[1] = torch.where(better, flow.new_tensor(float(dy)), flow[1])
    return flow


@register_flow_estimator("block_match")
class BlockMatchEstimator:
    kind = "block_match"

    def __init__(self, patch: int = 5, search: int = 4) -> None:
        self.patch = patch
        self.search = search

    def __call__(self, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
        return estimate_flow_blockmatch(a, b, self.patch, self.search)


def estimate_clip_flows(frames: torch.Tensor, estimator: FlowEstimator, workers: int = 1) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Forward (n → n+1) and backward (n+1 → n) flows for every consecutive pair.

    Pairs are independent; with ``workers > 1`` they run on a thread
    pool, results collected in pair order.

    :return: Two tensors ``(N-1, 2, H, W)``.
    """
    frames = frames.detach()
    jobs = [(frames[n], frames[n + 1]) for n in range(frames.shape[0] - 1)]
    jobs += [(frames[n + 1], frames[n]) for n in range(frames.shape[0] - 1)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda pair: estimator(*pair), jobs))
    else:
        results = [estimator(x, y) for x, y in jobs]
    half = len(results) // 2
    if half == 0:
        empty = frames.new_zeros((0, 2) + tuple(frames.shape[-2:]))
        return empty, empty.clone()
    return torch.stack(results[:half]), torch.stack(results[half:])


@dataclass(frozen=True)
class FlowConfig(ConfigSection):
    estimator: str = "block_match"
    patch: int = 5
    search: int = 4
    tol_abs: float = 0.01
    tol_rel: float = 0.5
    workers: int = 1
    options: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.patch < 1 or self.patch % 2 == 0:
            raise ValueError(f"flow.patch must be odd and positive, got {self.patch}")
        if self.search < 0:
            raise ValueError(f"flow.search must be non-negative, got {self.search}")
        if self.tol_abs < 0 or self.tol_rel < 0:
            raise ValueError("occlusion tolerances must be non-negative")
        if self.workers < 1:
            raise ValueError(f"flow.workers must be >= 1, got {self.workers}")

    def build(self) -> FlowEstimator:
        params = dict(self.options)
        if self.estimator == "block_match":
            params.setdefault("patch", self.patch)
            params.setdefault("search", self.search)
        return get_flow_estimator(self.estimator, **params)
