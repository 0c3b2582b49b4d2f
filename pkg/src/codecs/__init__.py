"""
Latent codecs.  The decoder is split as D = D1 ∘ D2 so per-frame
residuals can be added at the boundary between the two parts.
"""

from .codec import (
    CODEC_MODES,
    Codec,
    CodecConfig,
    IdentityCodec,
    TinyAutoencoder,
    build_codec,
    decode_full,
    decode_with_residual,
    to_pixel_range,
)
from .training import train_toy_codec

__all__ = [
    "CODEC_MODES",
    "Codec",
    "CodecConfig",
    "IdentityCodec",
    "TinyAutoencoder",
    "build_codec",
    "decode_full",
    "decode_with_residual",
    "to_pixel_range",
    "train_toy_codec",
]
