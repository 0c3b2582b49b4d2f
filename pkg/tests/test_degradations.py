import pytest
import torch

from src.degradations import (
    TASKS,
    DegradationConfig,
    InpaintMaskOperator,
    MotionBlurOperator,
    SRPoolOperator,
    TemporalPSFOperator,
    apply_sr_pool,
    apply_temporal_psf,
    build_operator,
    compose,
    make_inpaint_mask,
    make_motion_kernel,
)
from src.utils.errors import OperatorError, ShapeMismatchError


def inner(a: torch.Tensor, b: torch.Tensor) -> float:
    return float((a * b).sum())


class TestSRPool:
    def test_two_by_two_mean(self):
        clip = torch.tensor([[1.0, 2.0], [3.0, 4.0]], dtype=torch.float64).view(1, 1, 2, 2)
        assert float(apply_sr_pool(clip, 2)) == 2.5

    def test_shape(self):
        op = SRPoolOperator(4)
        assert op.output_shape((8, 3, 64, 64)) == (8, 3, 16, 16)
        assert op.input_shape((8, 3, 16, 16)) == (8, 3, 64, 64)

    def test_indivisible(self):
        with pytest.raises(ShapeMismatchError):
            apply_sr_pool(torch.zeros((1, 1, 6, 6)), 4)


class TestInpaintMask:
    def test_all_ones(self, rng):
        clip = torch.rand((2, 3, 4, 4), generator=rng, dtype=torch.float64)
        op = InpaintMaskOperator(torch.ones((2, 1, 4, 4), dtype=torch.float64))
        assert torch.equal(op(clip), clip)

    def test_all_zeros(self, rng):
        clip = torch.rand((2, 3, 4, 4), generator=rng, dtype=torch.float64)
        op = InpaintMaskOperator(torch.zeros((2, 1, 4, 4), dtype=torch.float64))
        assert torch.equal(op(clip), torch.zeros_like(clip))

    def test_missing_rate(self):
        mask = make_inpaint_mask(8, 64, 64, 0.5, 3)
        assert abs(1.0 - float(mask.mean()) - 0.5) < 0.02

    def test_mask_is_seeded(self):
        assert torch.equal(make_inpaint_mask(2, 8, 8, 0.3, 1), make_inpaint_mask(2, 8, 8, 0.3, 1))

    def test_non_binary_mask(self):
        with pytest.raises(OperatorError):
            InpaintMaskOperator(torch.full((1, 1, 2, 2), 0.5))

    def test_mask_shape_mismatch(self):
        op = InpaintMaskOperator(torch.ones((2, 1, 4, 4)))
        with pytest.raises(ShapeMismatchError):
            op(torch.zeros((3, 1, 4, 4)))


class TestMotionBlur:
    def test_delta_kernel_is_identity(self, rng):
        clip = torch.rand((2, 3, 5, 5), generator=rng, dtype=torch.float64)
        op = MotionBlurOperator(torch.ones((1, 1), dtype=torch.float64))
        assert torch.allclose(op(clip), clip)

    def test_constant_frame_preserved(self):
        clip = torch.full((1, 2, 12, 12), 0.4, dtype=torch.float64)
        op = MotionBlurOperator(make_motion_kernel(9, 0.8, 2))
        assert torch.allclose(op(clip), clip, atol=1e-12)

    def test_straight_kernel_keeps_horizontal_ramp(self):
        kernel = make_motion_kernel(5, 0.0, 0)
        ramp = torch.arange(16, dtype=torch.float64).view(1, 1, 1, 16).expand(1, 1, 16, 16)
        out = MotionBlurOperator(kernel)(ramp)
        assert torch.allclose(out[..., 2:-2], ramp[..., 2:-2], atol=1e-12)

    def test_zero_strength_kernel_is_a_line(self):
        kernel = make_motion_kernel(7, 0.0, 11)
        assert float(kernel.sum()) == pytest.approx(1.0)
        assert torch.allclose(kernel[3], torch.full((7,), 1.0 / 7, dtype=torch.float64))
        assert float(kernel[:3].abs().sum() + kernel[4:].abs().sum()) == 0.0

    @pytest.mark.parametrize("strength", [0.25, 0.5, 1.0])
    def test_kernel_normalized(self, strength):
        kernel = make_motion_kernel(9, strength, 4)
        assert float(kernel.sum()) == pytest.approx(1.0)
        assert float(kernel.min()) >= 0.0

    def test_even_kernel(self):
        with pytest.raises(ValueError):
            make_motion_kernel(4, 0.5, 0)
        with pytest.raises(OperatorError):
            MotionBlurOperator(torch.full((2, 2), 0.25))


class TestTemporalPSF:
    def test_ramp_in_time(self):
        clip = torch.arange(4, dtype=torch.float64).view(4, 1, 1, 1)
        out = apply_temporal_psf(clip, 3)
        assert float(out[0]) == pytest.approx(1.0 / 3.0)
        assert float(out[1]) == pytest.approx(1.0)
        assert float(out[3]) == pytest.approx(8.0 / 3.0)

    def test_width_one_is_identity(self, rng):
        clip = torch.rand((3, 1, 2, 2), generator=rng, dtype=torch.float64)
        assert torch.equal(apply_temporal_psf(clip, 1), clip)

    def test_too_wide(self):
        with pytest.raises(OperatorError):
            apply_temporal_psf(torch.zeros((2, 1, 2, 2)), 5)


def _operators(shape):
    n, _, h, w = shape
    return [
        SRPoolOperator(2),
        InpaintMaskOperator(make_inpaint_mask(n, h, w, 0.5, 0)),
        MotionBlurOperator(make_motion_kernel(5, 0.7, 1)),
        TemporalPSFOperator(3),
        compose([MotionBlurOperator(make_motion_kernel(3, 0.5, 2)), TemporalPSFOperator(3)], input_shape=shape),
        compose([TemporalPSFOperator(3), SRPoolOperator(2)], input_shape=shape),
    ]


@pytest.mark.parametrize("index", range(6))
def test_adjoint_identity(index, rng):
    shape = (4, 2, 8, 8)
    op = _operators(shape)[index]
    x = torch.randn(shape, generator=rng, dtype=torch.float64)
    y = torch.randn(op.output_shape(shape), generator=rng, dtype=torch.float64)
    lhs, rhs = inner(op(x), y), inner(x, op.adjoint(y))
    assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


@pytest.mark.parametrize("index", range(6))
def test_linearity(index, rng):
    shape = (4, 2, 8, 8)
    op = _operators(shape)[index]
    x1 = torch.randn(shape, generator=rng, dtype=torch.float64)
    x2 = torch.randn(shape, generator=rng, dtype=torch.float64)
    assert torch.allclose(op(1.5 * x1 - 0.25 * x2), 1.5 * op(x1) - 0.25 * op(x2), atol=1e-12)


class TestCompose:
    def test_empty(self):
        with pytest.raises(OperatorError):
            compose([])

    def test_shape_chain_checked(self):
        with pytest.raises(OperatorError):
            compose([SRPoolOperator(4), SRPoolOperator(4)], input_shape=(2, 1, 8, 8))

    def test_order(self, rng):
        clip = torch.rand((3, 1, 4, 4), generator=rng, dtype=torch.float64)
        blur = MotionBlurOperator(make_motion_kernel(3, 0.3, 0))
        psf = TemporalPSFOperator(3)
        assert torch.allclose(compose([blur, psf])(clip), psf(blur(clip)))


@pytest.mark.parametrize("task", TASKS)
def test_build_operator(task):
    shape = (8, 3, 16, 16)
    op = build_operator(task, shape, DegradationConfig(), 0)
    y = op(torch.rand(shape, dtype=torch.float64))
    assert tuple(y.shape) == op.output_shape(shape)
    assert op.input_shape(tuple(y.shape)) == shape


def test_build_operator_unknown_task():
    with pytest.raises(ValueError):
        build_operator("denoise", (2, 3, 8, 8), DegradationConfig(), 0)


def test_config_validation():
    with pytest.raises(ValueError):
        DegradationConfig(psf_width=4)
    with pytest.raises(ValueError):
        DegradationConfig.from_dict({"mask": 0.5})
