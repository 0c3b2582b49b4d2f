"""
Optical flow: estimator plug-ins, backward warping, occlusion masks,
EMA smoothing and the progressive warping loss.
"""

from .estimators import (
    FLOW_ESTIMATORS,
    BlockMatchEstimator,
    FlowConfig,
    FlowEstimator,
    estimate_clip_flows,
    estimate_flow_blockmatch,
    get_flow_estimator,
    register_flow_estimator,
)
from .warping import backward_warp, check_flow, ema_update, masked_mse, occlusion_mask, warping_loss

__all__ = [
    "FLOW_ESTIMATORS",
    "BlockMatchEstimator",
    "FlowConfig",
    "FlowEstimator",
    "backward_warp",
    "check_flow",
    "ema_update",
    "estimate_clip_flows",
    "estimate_flow_blockmatch",
    "get_flow_estimator",
    "masked_mse",
    "occlusion_mask",
    "register_flow_estimator",
    "warping_loss",
]
