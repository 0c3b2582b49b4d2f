"""
MetricReport: per-frame and clip-mean scores of one restored clip.

Infinite PSNR is written as the string ``"inf"`` and a NaN warping error
(every pair occluded) as ``"nan"``; missing metrics stay ``None`` and are
rendered ``n/a`` in tables rather than zero-filled.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

import torch

from src.metrics.quality import lpips_like, psnr, ssim, warping_error


def _encode(value: Any) -> Any:
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
    if isinstance(value, list):
        return [_encode(v) for v in value]
    return value


def _decode(value: Any) -> Any:
    if value in ("inf", "-inf", "nan"):
        return float(value)
    if isinstance(value, list):
        return [_decode(v) for v in value]
    return value


@dataclass
class MetricReport:
    psnr: float
    ssim: float
    we: float
    we_pairs_excluded: int = 0
    lpips_like: Optional[float] = None
    psnr_frames: List[float] = field(default_factory=list)
    ssim_frames: List[float] = field(default_factory=list)
    we_pairs: List[float] = field(default_factory=list)
    flow_source: str = "ground_truth"

    @property
    def we_scaled(self) -> float:
        """Warping error in units of 10⁻²."""
        return self.we * 100.0

    def to_dict(self) -> Dict[str, Any]:
        data = {k: _encode(v) for k, v in asdict(self).items()}
        data["we_scaled"] = _encode(self.we_scaled)
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MetricReport":
        values = {k: _decode(v) for k, v in data.items() if k != "we_scaled"}
        return cls(**values)

    def table_values(self) -> Dict[str, Optional[float]]:
        """Values keyed by the result-table metric columns."""
        return {"psnr": self.psnr, "ssim": self.ssim, "lpips_like": self.lpips_like, "we_e2": self.we_scaled}


def score_clip(
    restored: torch.Tensor,
    reference: torch.Tensor,
    flows: torch.Tensor,
    masks: torch.Tensor,
    *,
    extractor: Optional[torch.nn.Module] = None,
    ssim_window: int = 11,
    flow_source: str = "ground_truth",
) -> MetricReport:
    """
    Score ``restored`` against ``reference``; the warping error uses the
    given metric flows and masks on the restored clip.
    """
    psnr_frames, psnr_mean = psnr(restored, reference)
    ssim_frames, ssim_mean = ssim(restored, reference, window=ssim_window)
    we = warping_error(restored, flows, masks)
    return MetricReport(
        psnr=psnr_mean,
        ssim=ssim_mean,
        we=we.raw,
        we_pairs_excluded=we.excluded_pairs,
        lpips_like=lpips_like(restored, reference, extractor),
        psnr_frames=psnr_frames,
        ssim_frames=ssim_frames,
        we_pairs=we.per_pair,
        flow_source=flow_source,
    )
