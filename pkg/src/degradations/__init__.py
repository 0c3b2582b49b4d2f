"""
Degradation operators A: spatial pooling, pixel masking, motion blur,
temporal point-spread blur and their compositions, each with an adjoint.
"""

from .kernels import make_inpaint_mask, make_motion_kernel
from .operators import (
    OPERATOR_KINDS,
    CompositeOperator,
    DegradationOperator,
    IdentityOperator,
    InpaintMaskOperator,
    MotionBlurOperator,
    SRPoolOperator,
    TemporalPSFOperator,
    adjoint,
    apply_inpaint_mask,
    apply_motion_blur,
    apply_sr_pool,
    apply_temporal_psf,
    compose,
)
from .tasks import MSE_ONLY_TASKS, TASKS, DegradationConfig, build_operator

__all__ = [
    "MSE_ONLY_TASKS",
    "OPERATOR_KINDS",
    "TASKS",
    "CompositeOperator",
    "DegradationConfig",
    "DegradationOperator",
    "IdentityOperator",
    "InpaintMaskOperator",
    "MotionBlurOperator",
    "SRPoolOperator",
    "TemporalPSFOperator",
    "adjoint",
    "apply_inpaint_mask",
    "apply_motion_blur",
    "apply_sr_pool",
    "apply_temporal_psf",
    "build_operator",
    "compose",
    "make_inpaint_mask",
    "make_motion_kernel",
]
