"""
Seed decomposition and residual projection.

With the noise prior on, every frame's seed is the shared seed plus a
low-rank residual r_n = A_n·B_n confined to a Frobenius ball of radius
``radius_coef·√dim(r_n)``.  Where the residual lives is configurable:

* ``decoder``: added to the D2 output, after R and before D1.
* ``latent``: added to R(z_shared) before the full decoder.
* ``seed``: added to z_shared inside R, so R runs on N seeds.

With the noise prior off, each frame owns an independent full seed and
there are no residuals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import torch

from src.codecs.codec import Codec
from src.utils.config_sections import ConfigSection
from src.utils.errors import ShapeMismatchError

RESIDUAL_SITES = ("decoder", "latent", "seed")

Shape3 = Tuple[int, int, int]


@dataclass(frozen=True)
class SolverConfig(ConfigSection):
    epochs: int = 7000
    transition: int = 1500
    lr_seed: float = 5e-2
    lr_resid: float = 1e-3
    radius_coef: float = 1.0
    warp_weight: float = 1.0
    flow_period: int = 100
    ema_beta: float = 0.9
    perceptual_weight: float = 0.1
    k_rank: Optional[int] = None
    init_scale: float = 1e-2
    noise_prior: bool = True
    residual_site: str = "decoder"
    use_warping: bool = True
    always_rescale: bool = False
    warp_perceptual: bool = False
    gradient_checkpointing: bool = False
    rng_seed: int = 0
    progress: bool = True

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise ValueError(f"solver.epochs must be >= 0, got {self.epochs}")
        if not 0 <= self.transition <= self.epochs:
            raise ValueError(f"solver.transition must lie in [0, epochs={self.epochs}], got {self.transition}")
        if self.lr_seed <= 0 or self.lr_resid <= 0:
            raise ValueError("learning rates must be positive")
        if self.radius_coef <= 0:
            raise ValueError(f"solver.radius_coef must be positive, got {self.radius_coef}")
        if self.flow_period < 1:
            raise ValueError(f"solver.flow_period must be >= 1, got {self.flow_period}")
        if not 0.0 <= self.ema_beta < 1.0:
            raise ValueError(f"solver.ema_beta must lie in [0, 1), got {self.ema_beta}")
        if self.warp_weight < 0 or self.perceptual_weight < 0:
            raise ValueError("loss weights must be non-negative")
        if self.k_rank is not None and self.k_rank < 1:
            raise ValueError(f"solver.k_rank must be >= 1, got {self.k_rank}")
        if self.residual_site not in RESIDUAL_SITES:
            raise ValueError(f"solver.residual_site must be one of {RESIDUAL_SITES}, got {self.residual_site!r}")

    def rank_for(self, width: int) -> int:
        """Configured rank, or max(2, width // 16)."""
        return self.k_rank if self.k_rank is not None else max(2, width // 16)


def residual_shape(codec: Codec, latent_shape: Shape3, site: str) -> Shape3:
    if site == "decoder":
        return tuple(codec.feature_shape(latent_shape))  # type: ignore[return-value]
    if site in ("latent", "seed"):
        return tuple(latent_shape)  # type: ignore[return-value]
    raise ValueError(f"unknown residual site {site!r}")


def residual_radius(radius_coef: float, shape: Shape3) -> float:
    """radius_coef·√(C·H·W)."""
    return radius_coef * math.sqrt(shape[0] * shape[1] * shape[2])


@dataclass
class SeedDecomposition:
    """
    ``z_shared`` is ``(C, H, W)`` with the noise prior and ``(N, C, H, W)``
    without it.  ``A`` is ``(N, C_r, H_r, k)`` and ``B`` is ``(N, C_r, k, W_r)``;
    both are ``None`` without the noise prior.
    """

    z_shared: torch.Tensor
    A: Optional[torch.Tensor]
    B: Optional[torch.Tensor]
    radius: float
    k_rank: int
    site: str = "decoder"

    @property
    def shared(self) -> bool:
        return self.A is not None

    @property
    def n_frames(self) -> int:
        return self.A.shape[0] if self.A is not None else self.z_shared.shape[0]

    def residuals(self) -> torch.Tensor:
        if self.A is None or self.B is None:
            raise ValueError("independent-seed decomposition has no residuals")
        return self.A @ self.B

    def residual_norms(self) -> torch.Tensor:
        return self.residuals().detach().flatten(1).norm(dim=1)

    def seed_parameters(self) -> List[torch.Tensor]:
        return [self.z_shared]

    def residual_parameters(self) -> List[torch.Tensor]:
        return [] if self.A is None else [self.A, self.B]  # type: ignore[list-item]

    def parameters(self) -> List[torch.Tensor]:
        return self.seed_parameters() + self.residual_parameters()


def init_decomposition(
    n_frames: int,
    latent_shape: Shape3,
    resid_shape: Shape3,
    config: SolverConfig,
    rng_seed: int,
    dtype: torch.dtype = torch.float32,
    device: torch.device | str = "cpu",
) -> SeedDecomposition:
    """
    Standard-normal seed(s); A_n small Gaussian and B_n zero, so every
    residual starts at exactly zero.

    :raises ShapeMismatchError: for non-positive frame counts or shapes.
    """
    if n_frames < 1 or min(latent_shape) < 1 or min(resid_shape) < 1:
        raise ShapeMismatchError(f"cannot decompose {n_frames} frames of latent shape {latent_shape}")
    gen = torch.Generator(device="cpu").manual_seed(rng_seed)

    def normal(shape) -> torch.Tensor:
        return torch.randn(shape, generator=gen, dtype=torch.float64).to(dtype=dtype, device=device)

    if not config.noise_prior:
        z = normal((n_frames,) + tuple(latent_shape)).requires_grad_(True)
        return SeedDecomposition(z, None, None, radius=0.0, k_rank=0, site=config.residual_site)

    c, h, w = resid_shape
    k = config.rank_for(w)
    if k > min(h, w):
        raise ShapeMismatchError(f"rank {k} exceeds the residual's spatial size {h}x{w}")
    z = normal(tuple(latent_shape)).requires_grad_(True)
    a = (config.init_scale * normal((n_frames, c, h, k))).requires_grad_(True)
    b = torch.zeros((n_frames, c, k, w), dtype=dtype, device=device, requires_grad=True)
    return SeedDecomposition(z, a, b, residual_radius(config.radius_coef, resid_shape), k, config.residual_site)


def project_residual(
    A: torch.Tensor,
    B: torch.Tensor,
    radius: float,
    always_rescale: bool = False,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Scale both factors by 1/√(||AB||_F / radius) when ||AB||_F > radius.

    Stacked factors (leading frame dimension, 4-D) are projected frame by
    frame.  With ``always_rescale`` interior points are pushed out to the
    sphere as well.  A zero product is left unchanged.
    """
    if radius <= 0:
        raise ValueError(f"projection radius must be positive, got {radius}")
    prod = A @ B
    stacked = A.dim() == 4
    norms = prod.flatten(1).norm(dim=1) if stacked else prod.norm().reshape(1)
    positive = norms > 0
    move = positive if always_rescale else norms > radius
    ratio = torch.where(positive, norms / radius, torch.ones_like(norms))
    scale = torch.where(move, ratio.rsqrt(), torch.ones_like(norms))
    if stacked:
        scale = scale.reshape(-1, 1, 1, 1)
    else:
        scale = scale.reshape(())
    return A * scale, B * scale
