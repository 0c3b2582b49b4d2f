"""
Tensor archives with a JSON metadata sidecar.

Every persisted artifact (score networks, codecs, solver state, masks,
kernels, flows, restored clips) is a single ``torch.save`` archive of a
flat ``{key: tensor}`` dictionary, accompanied by ``<archive>.json``
holding plain-text metadata and the SHA-256 of the archive bytes.

Layout::

    prior/score_net.pt        {"state/<param name>": tensor, ...}
    prior/score_net.pt.json   {"kind": "toy-unet", "latent_shape": [...],
                               "schedule_hash": "...", "sha256": "..."}
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple, Union

import torch

from src.utils.errors import RestorationError

PathLike = Union[str, os.PathLike]


def sidecar_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def file_sha256(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def tensor_sha256(*tensors: torch.Tensor) -> str:
    """Hash of the float64 bytes of the given tensors, in order."""
    digest = hashlib.sha256()
    for t in tensors:
        digest.update(t.detach().to(torch.float64).contiguous().cpu().numpy().tobytes())
    return digest.hexdigest()


def save_archive(path: PathLike, tensors: Mapping[str, torch.Tensor], metadata: Mapping[str, Any]) -> str:
    """
    Write ``tensors`` to ``path`` and the metadata sidecar next to it.

    :return: The SHA-256 of the written archive.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save({k: v.detach().cpu() for k, v in tensors.items()}, path)
    sha = file_sha256(path)
    meta = dict(metadata)
    meta["sha256"] = sha
    meta["keys"] = sorted(tensors)
    with open(sidecar_path(path), "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True, default=str)
    return sha


def load_archive(path: PathLike, *, verify: bool = True) -> Tuple[Dict[str, torch.Tensor], Dict[str, Any]]:
    """
    Read an archive written by :func:`save_archive`.

    :raises RestorationError: if the archive or sidecar is missing, or the
        stored hash does not match the archive bytes.
    """
    path = Path(path)
    meta_file = sidecar_path(path)
    if not path.exists() or not meta_file.exists():
        raise RestorationError(f"Archive {path} or its metadata sidecar is missing")
    with open(meta_file, "r", encoding="utf-8") as f:
        metadata = json.load(f)
    if verify and metadata.get("sha256") != file_sha256(path):
        raise RestorationError(f"Archive {path} does not match the hash recorded in {meta_file}")
    tensors = torch.load(path, map_location="cpu", weights_only=True)
    return tensors, metadata
