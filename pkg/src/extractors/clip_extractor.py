"""
Reading and writing clips on disk.

A clip directory holds numbered 8-bit PNG frames (``frame_0000.png``,
``frame_0001.png``, ...) for inspection, optionally next to a lossless
``clip.pt`` archive.  When the archive is present it is authoritative.
"""

from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import List, Optional

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image, UnidentifiedImageError

from src.utils.checkpoints import PathLike, load_archive, save_archive
from src.utils.errors import IngestError, RestorationError

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")
ARCHIVE_NAME = "clip.pt"


def _frame_key(path: Path):
    numbers = re.findall(r"\d+", path.stem)
    return (int(numbers[-1]) if numbers else -1, path.name)


def _center_crop_resize(img: Image.Image, size: Optional[int]) -> Image.Image:
    if size is None:
        return img
    w, h = img.size
    side = min(w, h)
    left, top = (w - side) // 2, (h - side) // 2
    img = img.crop((left, top, left + side, top + side))
    if side != size:
        img = img.resize((size, size), Image.BILINEAR)
    return img


def _archive_frames(clip: torch.Tensor, size: Optional[int]) -> torch.Tensor:
    if size is None:
        return clip
    h, w = clip.shape[-2:]
    side = min(h, w)
    top, left = (h - side) // 2, (w - side) // 2
    clip = clip[..., top:top + side, left:left + side]
    if side != size:
        clip = F.interpolate(clip, size=(size, size), mode="bilinear", align_corners=False)
    return clip


def list_frames(path: PathLike) -> List[Path]:
    path = Path(path)
    return sorted((p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES), key=_frame_key)


def ingest_clip(path: PathLike, n_frames: Optional[int] = None, size: Optional[int] = None, channels: int = 3) -> torch.Tensor:
    """
    Load the first ``n_frames`` frames of a clip, center-cropped to a
    square, resized bilinearly to ``size`` and scaled to [0, 1].

    ``path`` is a directory of numbered images, a directory containing
    ``clip.pt``, or a tensor archive itself.  ``None`` keeps every frame
    or the original size.

    :return: Float64 tensor ``(N, C, size, size)``.
    :raises IngestError: for unreadable or insufficient frames.
    """
    path = Path(path)
    archive = path if path.is_file() and path.suffix == ".pt" else path / ARCHIVE_NAME
    if archive.is_file():
        try:
            tensors, _ = load_archive(archive)
        except RestorationError as e:
            raise IngestError(f"cannot read clip archive {archive}: {e}") from e
        if "frames" not in tensors:
            raise IngestError(f"archive {archive} has no 'frames' entry")
        clip = tensors["frames"].double()
        if n_frames is not None:
            if clip.shape[0] < n_frames:
                raise IngestError(f"{archive} holds {clip.shape[0]} frames, {n_frames} requested")
            clip = clip[:n_frames]
        return _archive_frames(clip, size).clamp(0.0, 1.0)

    if not path.is_dir():
        raise IngestError(f"{path} is neither a clip directory nor a tensor archive")
    files = list_frames(path)
    if n_frames is not None:
        if len(files) < n_frames:
            raise IngestError(f"{path} holds {len(files)} frames, {n_frames} requested")
        files = files[:n_frames]
    if not files:
        raise IngestError(f"no image frames found in {path}")
    mode = "L" if channels == 1 else "RGB"
    frames = []
    for f in files:
        try:
            with Image.open(f) as img:
                img = _center_crop_resize(img.convert(mode), size)
                arr = np.asarray(img, dtype=np.float64) / 255.0
        except (OSError, UnidentifiedImageError) as e:
            raise IngestError(f"cannot read frame {f}: {e}") from e
        frames.append(arr[None] if arr.ndim == 2 else arr.transpose(2, 0, 1))
    logger.debug("Ingested %d frames from %s", len(frames), path)
    return torch.from_numpy(np.stack(frames))


def to_uint8(frame: torch.Tensor) -> np.ndarray:
    arr = np.rint(frame.detach().double().clamp(0.0, 1.0).cpu().numpy() * 255.0).astype(np.uint8)
    return arr[0] if arr.shape[0] == 1 else arr.transpose(1, 2, 0)


def write_clip(clip: torch.Tensor, out_dir: PathLike, metadata: Optional[dict] = None) -> Path:
    """Write PNG frames plus the lossless archive into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, frame in enumerate(clip):
        Image.fromarray(to_uint8(frame)).save(out_dir / f"frame_{i:04d}.png")
    save_archive(out_dir / ARCHIVE_NAME, {"frames": clip.double()}, dict(metadata or {}, kind="clip", shape=list(clip.shape)))
    return out_dir
