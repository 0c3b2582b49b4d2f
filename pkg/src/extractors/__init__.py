"""
Clip sources.

This subpackage turns frames on disk, or a synthetic generator, into
clips shaped ``(N, C, H, W)`` with values in [0, 1]: the representation
every other subpackage consumes.  Synthetic clips also carry their
ground-truth flows.
"""

from .clip_extractor import ARCHIVE_NAME, ingest_clip, list_frames, to_uint8, write_clip
from .synthetic import TEXTURES, SyntheticClip, SyntheticSpec, gen_synthetic_dataset, make_clip

__all__ = [
    "ARCHIVE_NAME",
    "TEXTURES",
    "SyntheticClip",
    "SyntheticSpec",
    "gen_synthetic_dataset",
    "ingest_clip",
    "list_frames",
    "make_clip",
    "to_uint8",
    "write_clip",
]
