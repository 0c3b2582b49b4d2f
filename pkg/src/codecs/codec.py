"""
Latent codecs with an explicit decoder split D = D1 ∘ D2.

Residuals are injected at the D2/D1 boundary, so every codec exposes
``decode_part2`` (latent → intermediate features) and ``decode_part1``
(features → pixels) separately.  Two modes exist:

* ``identity``: encoder, D2 and D1 are identity maps; the latent is the
  pixel frame and residuals act directly on pixels.
* ``tiny-ae``: two strided convolutions down (4× spatial reduction) and
  two upsampling convolutions back; D1 is the final convolution plus the
  output sigmoid.

Decoder outputs are *not* clamped here; :func:`to_pixel_range` clamps
after losses have been computed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import torch
from torch import nn

from src.utils.config_sections import ConfigSection
from src.utils.errors import ShapeMismatchError

CODEC_MODES = ("identity", "tiny-ae")


@dataclass(frozen=True)
class CodecConfig(ConfigSection):
    mode: str = "identity"
    latent_channels: int = 4
    hidden_channels: int = 16
    epochs: int = 300
    lr: float = 3e-3
    batch_size: int = 16
    progress: bool = True

    def __post_init__(self) -> None:
        if self.mode not in CODEC_MODES:
            raise ValueError(f"codec mode must be one of {CODEC_MODES}, got {self.mode!r}")
        if self.latent_channels < 1 or self.hidden_channels < 1:
            raise ValueError("channel counts must be positive")
        if self.epochs < 0 or self.lr <= 0 or self.batch_size < 1:
            raise ValueError("epochs >= 0, lr > 0 and batch_size >= 1 are required")

    @property
    def downsample(self) -> int:
        return 1 if self.mode == "identity" else 4


class Codec(nn.Module):
    """Encoder plus a decoder split at ``split_descriptor``."""

    split_descriptor: str = ""
    downsample: int = 1

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def decode_part2(self, z: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def decode_part1(self, h: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def latent_shape(self, pixel_shape: Tuple[int, int, int]) -> Tuple[int, int, int]:
        raise NotImplementedError

    def feature_shape(self, latent_shape: Tuple[int, int, int]) -> Tuple[int, int, int]:
        raise NotImplementedError


class IdentityCodec(Codec):
    split_descriptor = "identity"

    def __init__(self, channels: int = 3) -> None:
        super().__init__()
        self.channels = channels

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        return x

    def decode_part2(self, z: torch.Tensor) -> torch.Tensor:
        return z

    def decode_part1(self, h: torch.Tensor) -> torch.Tensor:
        return h

    def latent_shape(self, pixel_shape: Tuple[int, int, int]) -> Tuple[int, int, int]:
        return tuple(pixel_shape)  # type: ignore[return-value]

    def feature_shape(self, latent_shape: Tuple[int, int, int]) -> Tuple[int, int, int]:
        return tuple(latent_shape)  # type: ignore[return-value]


class TinyAutoencoder(Codec):
    split_descriptor = "final_conv"
    downsample = 4

    def __init__(self, channels: int = 3, latent_channels: int = 4, hidden_channels: int = 16) -> None:
        super().__init__()
        self.channels = channels
        self.latent_channels = latent_channels
        self.hidden_channels = hidden_channels
        self.encoder = nn.Sequential(
            nn.Conv2d(channels, hidden_channels, 3, stride=2, padding=1),
            nn.SiLU(),
            nn.Conv2d(hidden_channels, latent_channels, 3, stride=2, padding=1),
        )
        self.decoder_part2 = nn.Sequential(
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(latent_channels, hidden_channels, 3, padding=1),
            nn.SiLU(),
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(hidden_channels, hidden_channels, 3, padding=1),
            nn.SiLU(),
        )
        self.decoder_part1 = nn.Sequential(
            nn.Conv2d(hidden_channels, channels, 3, padding=1),
            nn.Sigmoid(),
        )

    def encode(self, x: torch.Tensor) -> torch.Tensor:
        return _batched(self.encoder, x)

    def decode_part2(self, z: torch.Tensor) -> torch.Tensor:
        return _batched(self.decoder_part2, z)

    def decode_part1(self, h: torch.Tensor) -> torch.Tensor:
        return _batched(self.decoder_part1, h)

    def latent_shape(self, pixel_shape: Tuple[int, int, int]) -> Tuple[int, int, int]:
        c, h, w = pixel_shape
        if c != self.channels or h % 4 or w % 4:
            raise ShapeMismatchError(f"pixel shape {pixel_shape} incompatible with a 4x tiny autoencoder on {self.channels} channels")
        return (self.latent_channels, h // 4, w // 4)

    def feature_shape(self, latent_shape: Tuple[int, int, int]) -> Tuple[int, int, int]:
        _, h, w = latent_shape
        return (self.hidden_channels, 4 * h, 4 * w)


def _batched(module: nn.Module, x: torch.Tensor) -> torch.Tensor:
    if x.dim() == 3:
        return module(x.unsqueeze(0)).squeeze(0)
    return module(x)


def _check_latent(z: torch.Tensor, codec: Codec) -> None:
    channels = getattr(codec, "latent_channels", getattr(codec, "channels", None))
    if z.dim() not in (3, 4) or (channels is not None and z.shape[-3] != channels):
        raise ShapeMismatchError(f"latent of shape {tuple(z.shape)} does not fit codec {codec.split_descriptor!r}")


def decode_full(z: torch.Tensor, codec: Codec) -> torch.Tensor:
    """D(z) = D1(D2(z)); differentiable, unclamped."""
    _check_latent(z, codec)
    return codec.decode_part1(codec.decode_part2(z))


def decode_with_residual(z: torch.Tensor, r: torch.Tensor, codec: Codec) -> torch.Tensor:
    """
    D1(D2(z) + r).

    ``z`` may be a single latent while ``r`` carries a leading frame
    dimension; D2 then runs once and its output broadcasts over frames.
    """
    _check_latent(z, codec)
    h = codec.decode_part2(z)
    if r.shape[-3:] != h.shape[-3:]:
        raise ShapeMismatchError(f"residual shape {tuple(r.shape[-3:])} != D2 output shape {tuple(h.shape[-3:])}")
    return codec.decode_part1(h + r)


def to_pixel_range(x: torch.Tensor) -> torch.Tensor:
    return x.clamp(0.0, 1.0)


def build_codec(config: CodecConfig, channels: int, rng_seed: int, dtype: torch.dtype = torch.float32) -> Codec:
    if config.mode == "identity":
        return IdentityCodec(channels)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(rng_seed)
        codec = TinyAutoencoder(channels, config.latent_channels, config.hidden_channels)
    return codec.to(dtype)
