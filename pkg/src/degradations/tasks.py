"""
Restoration tasks and the operators that simulate them.

=================  ==========================================
task               operator
=================  ==========================================
sr4                4× average pooling
inpaint            Bernoulli pixel mask, missing rate r
motion_deblur      random-walk motion kernel
temporal_deconv    uniform temporal PSF of width k
temporal_spatial   motion blur, then the temporal PSF
=================  ==========================================
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

from src.degradations.kernels import make_inpaint_mask, make_motion_kernel
from src.degradations.operators import (
    DegradationOperator,
    InpaintMaskOperator,
    MotionBlurOperator,
    SRPoolOperator,
    TemporalPSFOperator,
    compose,
)
from src.utils.config_sections import ConfigSection

TASKS = ("sr4", "inpaint", "motion_deblur", "temporal_deconv", "temporal_spatial")

#: Tasks whose data term is plain MSE even when a perceptual plug-in is set.
MSE_ONLY_TASKS = ("inpaint",)


@dataclass(frozen=True)
class DegradationConfig(ConfigSection):
    sr_factor: int = 4
    mask_rate: float = 0.5
    kernel_size: int = 9
    kernel_strength: float = 0.5
    psf_width: int = 7

    def __post_init__(self) -> None:
        if self.sr_factor < 1:
            raise ValueError("sr_factor must be positive")
        if not 0.0 <= self.mask_rate <= 1.0:
            raise ValueError("mask_rate must lie in [0, 1]")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError("kernel_size must be odd and positive")
        if not 0.0 <= self.kernel_strength <= 1.0:
            raise ValueError("kernel_strength must lie in [0, 1]")
        if self.psf_width < 1 or self.psf_width % 2 == 0:
            raise ValueError("psf_width must be odd and positive")


def build_operator(task: str, clip_shape: Tuple[int, int, int, int], config: DegradationConfig, rng_seed: int) -> DegradationOperator:
    """
    Operator for ``task`` on clips of ``clip_shape`` ``(N, C, H, W)``.

    Masks and kernels are drawn from ``rng_seed`` so the measurement is
    reproducible.
    """
    n, _, h, w = clip_shape
    if task == "sr4":
        op: DegradationOperator = SRPoolOperator(config.sr_factor)
    elif task == "inpaint":
        op = InpaintMaskOperator(make_inpaint_mask(n, h, w, config.mask_rate, rng_seed), config.mask_rate)
    elif task == "motion_deblur":
        op = MotionBlurOperator(make_motion_kernel(config.kernel_size, config.kernel_strength, rng_seed))
    elif task == "temporal_deconv":
        op = TemporalPSFOperator(config.psf_width)
    elif task == "temporal_spatial":
        blur = MotionBlurOperator(make_motion_kernel(config.kernel_size, config.kernel_strength, rng_seed))
        op = compose([blur, TemporalPSFOperator(config.psf_width)], input_shape=clip_shape)
    else:
        raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")
    op.output_shape(tuple(clip_shape))
    return op
