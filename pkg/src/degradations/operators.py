"""
Linear degradation operators A acting on clips shaped ``(N, C, H, W)``.

Every operator exposes ``apply`` and ``adjoint``.  Pooling and masking
have closed-form adjoints; the replicate-padded convolutions obtain
theirs as the vector-Jacobian product of ``apply`` (exact because the
operators are linear), which keeps the boundary handling consistent
between the two directions.

Boundary handling is replicate-edge for both the spatial and the
temporal convolutions.
"""

from __future__ import annotations

from typing import Dict, List, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F

from src.utils.errors import OperatorError, ShapeMismatchError

Shape = Tuple[int, ...]

OPERATOR_KINDS = ("identity", "sr_pool", "inpaint_mask", "motion_blur", "temporal_psf", "composite")


def _check_clip(clip: torch.Tensor) -> None:
    if clip.dim() != 4:
        raise ShapeMismatchError(f"clips must be shaped (N, C, H, W), got {tuple(clip.shape)}")


class DegradationOperator:
    """Base class; subclasses override ``apply`` and the shape maps."""

    kind: str = ""

    def apply(self, clip: torch.Tensor) -> torch.Tensor:
        raise NotImplementedError

    def output_shape(self, input_shape: Shape) -> Shape:
        return tuple(input_shape)

    def input_shape(self, output_shape: Shape) -> Shape:
        return tuple(output_shape)

    def adjoint(self, clip: torch.Tensor) -> torch.Tensor:
        _check_clip(clip)
        domain = self.input_shape(tuple(clip.shape))
        if self.output_shape(domain) != tuple(clip.shape):
            raise ShapeMismatchError(f"{self.kind}: no domain maps onto shape {tuple(clip.shape)}")
        x0 = torch.zeros(domain, dtype=clip.dtype, device=clip.device)
        _, vjp_fn = torch.func.vjp(self.apply, x0)
        return vjp_fn(clip)[0]

    def __call__(self, clip: torch.Tensor) -> torch.Tensor:
        return self.apply(clip)

    def params(self) -> Dict[str, object]:
        return {}

    def tensors(self) -> Dict[str, torch.Tensor]:
        """Tensors needed for an exact rerun (masks, kernels)."""
        return {}


class IdentityOperator(DegradationOperator):
    kind = "identity"

    def apply(self, clip: torch.Tensor) -> torch.Tensor:
        _check_clip(clip)
        return clip

    def adjoint(self, clip: torch.Tensor) -> torch.Tensor:
        _check_clip(clip)
        return clip


class SRPoolOperator(DegradationOperator):
    """``factor``×``factor`` average pooling."""

    kind = "sr_pool"

    def __init__(self, factor: int = 4) -> None:
        if factor < 1:
            raise OperatorError("pool factor must be positive")
        self.factor = int(factor)

    def output_shape(self, input_shape: Shape) -> Shape:
        n, c, h, w = input_shape
        if h % self.factor or w % self.factor:
            raise ShapeMismatchError(f"frame size {h}x{w} is not divisible by pool factor {self.factor}")
        return (n, c, h // self.factor, w // self.factor)

    def input_shape(self, output_shape: Shape) -> Shape:
        n, c, h, w = output_shape
        return (n, c, h * self.factor, w * self.factor)

    def apply(self, clip: torch.Tensor) -> torch.Tensor:
        _check_clip(clip)
        self.output_shape(tuple(clip.shape))
        return F.avg_pool2d(clip, self.factor)

    def adjoint(self, clip: torch.Tensor) -> torch.Tensor:
        _check_clip(clip)
        up = clip.repeat_interleave(self.factor, dim=-2).repeat_interleave(self.factor, dim=-1)
        return up / float(self.factor ** 2)

    def params(self) -> Dict[str, object]:
        return {"factor": self.factor}


class InpaintMaskOperator(DegradationOperator):
    """Elementwise product with a binary mask; self-adjoint."""

    kind = "inpaint_mask"

    def __init__(self, mask: torch.Tensor, rate: Optional[float] = None) -> None:
        if not bool(((mask == 0) | (mask == 1)).all()):
            raise OperatorError("inpainting masks must be binary")
        self.mask = mask
        self.rate = rate

    def output_shape(self, input_shape: Shape) -> Shape:
        try:
            shape = torch.broadcast_shapes(tuple(self.mask.shape), tuple(input_shape))
        except RuntimeError as e:
            raise ShapeMismatchError(f"mask shape {tuple(self.mask.shape)} does not broadcast to {tuple(input_shape)}") from e
        if tuple(shape) != tuple(input_shape):
            raise ShapeMismatchError(f"mask shape {tuple(self.mask.shape)} does not broadcast to {tuple(input_shape)}")
        return tuple(input_shape)

    def apply(self, clip: torch.Tensor) -> torch.Tensor:
        _check_clip(clip)
        self.output_shape(tuple(clip.shape))
        return clip * self.mask.to(dtype=clip.dtype, device=clip.device)

    def adjoint(self, clip: torch.Tensor) -> torch.Tensor:
        return self.apply(clip)

    def params(self) -> Dict[str, object]:
        return {"rate": self.rate}

    def tensors(self) -> Dict[str, torch.Tensor]:
        return {"mask": self.mask}


class MotionBlurOperator(DegradationOperator):
    """Per-frame 2-D convolution with a normalized kernel of odd side."""

    kind = "motion_blur"

    def __init__(self, kernel: torch.Tensor) -> None:
        if kernel.dim() != 2 or kernel.shape[0] % 2 == 0 or kernel.shape[1] % 2 == 0:
            raise OperatorError(f"blur kernels must be 2-D with odd sides, got {tuple(kernel.shape)}")
        if abs(float(kernel.sum()) - 1.0) > 1e-6:
            raise OperatorError(f"blur kernel must sum to 1, sums to {float(kernel.sum()):.6g}")
        self.kernel = kernel

    def apply(self, clip: torch.Tensor) -> torch.Tensor:
        _check_clip(clip)
        kh, kw = self.kernel.shape
        c = clip.shape[1]
        weight = self.kernel.flip(0, 1).to(dtype=clip.dtype, device=clip.device).expand(c, 1, kh, kw)
        padded = F.pad(clip, (kw // 2, kw // 2, kh // 2, kh // 2), mode="replicate")
        return F.conv2d(padded, weight, groups=c)

    def params(self) -> Dict[str, object]:
        return {"kernel_size": list(self.kernel.shape)}

    def tensors(self) -> Dict[str, torch.Tensor]:
        return {"kernel": self.kernel}


class TemporalPSFOperator(DegradationOperator):
    """Uniform average over a window of ``k`` frames, replicate padded in time."""

    kind = "temporal_psf"

    def __init__(self, k: int = 7) -> None:
        if k < 1 or k % 2 == 0:
            raise OperatorError(f"temporal PSF width must be odd and positive, got {k}")
        self.k = int(k)

    def apply(self, clip: torch.Tensor) -> torch.Tensor:
        _check_clip(clip)
        n = clip.shape[0]
        if self.k > 2 * n - 1:
            raise OperatorError(f"temporal PSF width {self.k} exceeds 2N-1 = {2 * n - 1}")
        half = self.k // 2
        offsets = torch.arange(-half, half + 1, device=clip.device)
        idx = (torch.arange(n, device=clip.device)[:, None] + offsets[None]).clamp(0, n - 1)
        return clip[idx].mean(dim=1)

    def params(self) -> Dict[str, object]:
        return {"k": self.k}


class CompositeOperator(DegradationOperator):
    """Operators applied in list order; the adjoint runs them reversed."""

    kind = "composite"

    def __init__(self, ops: Sequence[DegradationOperator]) -> None:
        if not ops:
            raise OperatorError("a composite operator needs at least one operator")
        self.ops: List[DegradationOperator] = list(ops)

    def output_shape(self, input_shape: Shape) -> Shape:
        shape = tuple(input_shape)
        for op in self.ops:
            shape = op.output_shape(shape)
        return shape

    def input_shape(self, output_shape: Shape) -> Shape:
        shape = tuple(output_shape)
        for op in reversed(self.ops):
            shape = op.input_shape(shape)
        return shape

    def apply(self, clip: torch.Tensor) -> torch.Tensor:
        for op in self.ops:
            clip = op.apply(clip)
        return clip

    def adjoint(self, clip: torch.Tensor) -> torch.Tensor:
        for op in reversed(self.ops):
            clip = op.adjoint(clip)
        return clip

    def params(self) -> Dict[str, object]:
        return {"ops": [{"kind": op.kind, **op.params()} for op in self.ops]}

    def tensors(self) -> Dict[str, torch.Tensor]:
        out: Dict[str, torch.Tensor] = {}
        for i, op in enumerate(self.ops):
            out.update({f"{i}/{k}": v for k, v in op.tensors().items()})
        return out


###############################################################################
# Functional entry points
###############################################################################

def apply_sr_pool(clip: torch.Tensor, factor: int) -> torch.Tensor:
    return SRPoolOperator(factor).apply(clip)


def apply_inpaint_mask(clip: torch.Tensor, mask: torch.Tensor, rate: Optional[float] = None) -> torch.Tensor:
    return InpaintMaskOperator(mask, rate).apply(clip)


def apply_motion_blur(clip: torch.Tensor, kernel: torch.Tensor) -> torch.Tensor:
    return MotionBlurOperator(kernel).apply(clip)


def apply_temporal_psf(clip: torch.Tensor, k: int) -> torch.Tensor:
    return TemporalPSFOperator(k).apply(clip)


def compose(ops: Sequence[DegradationOperator], input_shape: Optional[Shape] = None) -> CompositeOperator:
    """
    Chain ``ops`` in order.

    :param input_shape: When given, the shape chain is checked up front.
    :raises OperatorError: if the chain is empty or its shapes do not line up.
    """
    op = CompositeOperator(ops)
    if input_shape is not None:
        try:
            op.output_shape(tuple(input_shape))
        except ShapeMismatchError as e:
            raise OperatorError(f"incompatible operator chain: {e}") from e
    return op


def adjoint(op: DegradationOperator, clip: torch.Tensor) -> torch.Tensor:
    return op.adjoint(clip)
