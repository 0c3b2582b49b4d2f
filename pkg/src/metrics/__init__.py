"""
Metrics: PSNR, SSIM, warping error and a fixed-feature perceptual distance.
"""

from .perceptual import (
    PERCEPTUAL_EXTRACTORS,
    FixedFeatureExtractor,
    get_perceptual_extractor,
    perceptual_distance,
    register_perceptual_extractor,
)
from .quality import WarpingErrorResult, lpips_like, metric_flows, psnr, ssim, warping_error
from .report import MetricReport, score_clip

__all__ = [
    "PERCEPTUAL_EXTRACTORS",
    "FixedFeatureExtractor",
    "MetricReport",
    "WarpingErrorResult",
    "get_perceptual_extractor",
    "lpips_like",
    "metric_flows",
    "perceptual_distance",
    "psnr",
    "register_perceptual_extractor",
    "score_clip",
    "ssim",
    "warping_error",
]
