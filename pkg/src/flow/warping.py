"""
Backward warping, forward-backward occlusion masks, EMA flow smoothing
and the progressive warping loss.

Flow fields are ``(2, H, W)`` tensors in pixels, channel 0 the horizontal
displacement (dx) and channel 1 the vertical one (dy), pointing from
frame n to frame n+1.  Backward warping samples the next frame at
``p + flow(p)`` so that it lines up with frame n.  Flows and masks are
always detached: gradients reach the frames only.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence, Union

import torch
import torch.nn.functional as F

from src.utils.errors import NonFiniteError, ShapeMismatchError

LossFn = Callable[[torch.Tensor, torch.Tensor, torch.Tensor], torch.Tensor]
Tensors = Union[torch.Tensor, Sequence[torch.Tensor]]


def _stack(items: Tensors) -> torch.Tensor:
    return items if isinstance(items, torch.Tensor) else torch.stack(list(items))


def check_flow(flow: torch.Tensor) -> None:
    """
    :raises NonFiniteError: for NaN/inf displacements.
    :raises ShapeMismatchError: if the field is not ``(..., 2, H, W)``.
    """
    if flow.dim() not in (3, 4) or flow.shape[-3] != 2:
        raise ShapeMismatchError(f"flow fields must be shaped (2, H, W), got {tuple(flow.shape)}")
    if not bool(torch.isfinite(flow).all()):
        raise NonFiniteError("flow field contains non-finite displacements")


def _normalized(coord: torch.Tensor, size: int) -> torch.Tensor:
    if size == 1:
        return torch.zeros_like(coord)
    return 2.0 * coord / (size - 1) - 1.0


def backward_warp(frame_next: torch.Tensor, flow: torch.Tensor) -> torch.Tensor:
    """
    output(p) = frame_next(p + flow(p)), bilinear, replicate-edge outside.

    Accepts a single frame ``(C, H, W)`` with flow ``(2, H, W)`` or
    batches ``(B, C, H, W)`` with ``(B, 2, H, W)``.
    """
    check_flow(flow)
    single = frame_next.dim() == 3
    frames = frame_next.unsqueeze(0) if single else frame_next
    flows = (flow.unsqueeze(0) if flow.dim() == 3 else flow).detach().to(frames.dtype)
    b, _, h, w = frames.shape
    if flows.shape[-2:] != (h, w) or flows.shape[0] not in (1, b):
        raise ShapeMismatchError(f"flow shape {tuple(flow.shape)} does not match frames {tuple(frame_next.shape)}")
    ys, xs = torch.meshgrid(
        torch.arange(h, dtype=frames.dtype, device=frames.device),
        torch.arange(w, dtype=frames.dtype, device=frames.device),
        indexing="ij",
    )
    gx = _normalized(xs + flows[:, 0], w)
    gy = _normalized(ys + flows[:, 1], h)
    grid = torch.stack([gx, gy], dim=-1).expand(b, h, w, 2)
    out = F.grid_sample(frames, grid, mode="bilinear", padding_mode="border", align_corners=True)
    return out.squeeze(0) if single else out


def occlusion_mask(
    f_fwd: torch.Tensor,
    f_bwd: torch.Tensor,
    tol_abs: float = 0.01,
    tol_rel: float = 0.5,
) -> torch.Tensor:
    """
    Forward-backward consistency check.

    A pixel is valid iff ||f_fwd + f_bwd(p + f_fwd)||² is below
    ``tol_abs + tol_rel·(||f_fwd||² + ||f_bwd(p + f_fwd)||²)``.

    :return: Binary tensor ``(H, W)`` (or ``(B, H, W)``), 1 = valid.
    """
    if f_fwd.shape != f_bwd.shape:
        raise ShapeMismatchError(f"forward flow {tuple(f_fwd.shape)} and backward flow {tuple(f_bwd.shape)} differ")
    f_fwd = f_fwd.detach()
    bwd_at_target = backward_warp(f_bwd.detach(), f_fwd)
    residual = (f_fwd + bwd_at_target).pow(2).sum(dim=-3)
    bound = tol_abs + tol_rel * (f_fwd.pow(2).sum(dim=-3) + bwd_at_target.pow(2).sum(dim=-3))
    return (residual < bound).to(f_fwd.dtype)


def ema_update(f_prev: Optional[torch.Tensor], f_new: torch.Tensor, beta: float) -> torch.Tensor:
    """β·f_prev + (1−β)·f_new; the first call (``f_prev is None``) returns ``f_new``."""
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"EMA coefficient must lie in [0, 1), got {beta}")
    if f_prev is None:
        return f_new
    if f_prev.shape != f_new.shape:
        raise ShapeMismatchError(f"EMA flow shapes differ: {tuple(f_prev.shape)} vs {tuple(f_new.shape)}")
    return beta * f_prev + (1.0 - beta) * f_new


def masked_mse(a: torch.Tensor, b: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Squared error summed over valid pixels, divided by valid pixels × channels."""
    channels = a.shape[-3]
    valid = mask.sum()
    if float(valid) == 0.0:
        return (a * 0.0).sum()
    return (a - b).pow(2).sum() / (valid * channels)


def warping_loss(
    frames: Tensors,
    flows: Tensors,
    masks: Tensors,
    loss_fn: LossFn = masked_mse,
) -> torch.Tensor:
    """
    Σ_n loss_fn(M ⊙ x_n, M ⊙ W(x_{n+1}, f_{n→n+1}), M) over consecutive pairs.

    :raises ShapeMismatchError: unless ``len(flows) == len(masks) == len(frames) - 1``.
    """
    frames = _stack(frames)
    flows = _stack(flows).detach()
    masks = _stack(masks).detach()
    if flows.shape[0] != frames.shape[0] - 1 or masks.shape[0] != frames.shape[0] - 1:
        raise ShapeMismatchError(
            f"{frames.shape[0]} frames need {frames.shape[0] - 1} flows and masks, got {flows.shape[0]} and {masks.shape[0]}"
        )
    total = frames.new_zeros(())
    if frames.shape[0] < 2:
        return total
    warped = backward_warp(frames[1:], flows)
    for n in range(frames.shape[0] - 1):
        m = masks[n].to(frames.dtype).unsqueeze(0)
        total = total + loss_fn(m * frames[n], m * warped[n], m)
    return total
