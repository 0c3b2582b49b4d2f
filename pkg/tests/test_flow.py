import pytest
import torch

from src.flow import (
    FlowConfig,
    backward_warp,
    ema_update,
    estimate_clip_flows,
    estimate_flow_blockmatch,
    get_flow_estimator,
    occlusion_mask,
    register_flow_estimator,
    warping_loss,
)
from src.flow.estimators import FLOW_ESTIMATORS
from src.utils.errors import NonFiniteError, PluginError, ShapeMismatchError


def ramp(h: int = 8, w: int = 8) -> torch.Tensor:
    return torch.arange(w, dtype=torch.float64).view(1, 1, w).expand(1, h, w).clone()


def constant_flow(dx: float, dy: float, h: int = 8, w: int = 8) -> torch.Tensor:
    flow = torch.zeros((2, h, w), dtype=torch.float64)
    flow[0] = dx
    flow[1] = dy
    return flow


class TestBlockMatch:
    def test_identical_frames(self, rng):
        a = torch.rand((3, 12, 12), generator=rng, dtype=torch.float64)
        assert torch.equal(estimate_flow_blockmatch(a, a.clone()), torch.zeros((2, 12, 12), dtype=torch.float64))

    def test_shift_right(self, rng):
        a = torch.rand((3, 20, 20), generator=rng, dtype=torch.float64)
        # b(x) = a(x - 2), so a(p) reappears at p + 2
        b = torch.cat([a[..., :1].expand(3, 20, 2), a[..., :-2]], dim=-1)
        flow = estimate_flow_blockmatch(a, b, patch=5, search=3)
        interior = (slice(4, -4), slice(4, -6))
        assert bool((flow[0][interior] == 2).all())
        assert bool((flow[1][interior] == 0).all())

    def test_zero_search(self, rng):
        a = torch.rand((1, 8, 8), generator=rng, dtype=torch.float64)
        b = torch.rand((1, 8, 8), generator=rng, dtype=torch.float64)
        assert float(estimate_flow_blockmatch(a, b, search=0).abs().sum()) == 0.0

    def test_invalid_arguments(self):
        a = torch.zeros((1, 8, 8))
        with pytest.raises(ShapeMismatchError):
            estimate_flow_blockmatch(a, torch.zeros((1, 8, 9)))
        with pytest.raises(ValueError):
            estimate_flow_blockmatch(a, a, patch=4)
        with pytest.raises(ValueError):
            estimate_flow_blockmatch(a, a, search=-1)


class TestBackwardWarp:
    def test_zero_flow(self, rng):
        frame = torch.rand((3, 8, 8), generator=rng, dtype=torch.float64)
        assert torch.allclose(backward_warp(frame, constant_flow(0, 0)), frame, atol=1e-12)

    def test_integer_shift_on_ramp(self):
        out = backward_warp(ramp(), constant_flow(1, 0))
        assert torch.allclose(out[0, :, :-1], ramp()[0, :, :-1] + 1.0, atol=1e-12)

    def test_half_pixel_on_ramp(self):
        out = backward_warp(ramp(), constant_flow(0.5, 0))
        assert torch.allclose(out[0, :, :-1], ramp()[0, :, :-1] + 0.5, atol=1e-12)

    def test_replicate_edge(self):
        out = backward_warp(ramp(), constant_flow(3, 0))
        assert torch.allclose(out[0, :, -1], torch.full((8,), 7.0, dtype=torch.float64))

    def test_linear_in_frame(self, rng):
        flow = torch.randn((2, 8, 8), generator=rng, dtype=torch.float64)
        a = torch.rand((2, 8, 8), generator=rng, dtype=torch.float64)
        b = torch.rand((2, 8, 8), generator=rng, dtype=torch.float64)
        assert torch.allclose(backward_warp(2 * a - b, flow), 2 * backward_warp(a, flow) - backward_warp(b, flow), atol=1e-12)

    def test_gradient_reaches_frame_only(self, rng):
        frame = torch.rand((1, 8, 8), generator=rng, dtype=torch.float64, requires_grad=True)
        flow = constant_flow(0.5, 0.25).requires_grad_(True)
        backward_warp(frame, flow).sum().backward()
        assert frame.grad is not None
        assert flow.grad is None

    def test_non_finite_flow(self):
        flow = constant_flow(0, 0)
        flow[0, 0, 0] = float("inf")
        with pytest.raises(NonFiniteError):
            backward_warp(ramp(), flow)


class TestOcclusionMask:
    def test_cycle_consistent(self):
        mask = occlusion_mask(constant_flow(1.5, -2.0), constant_flow(-1.5, 2.0))
        assert bool((mask == 1).all())

    def test_inconsistent(self):
        mask = occlusion_mask(constant_flow(5, 0), constant_flow(5, 0), tol_abs=0.01, tol_rel=0.01)
        assert bool((mask == 0).all())

    def test_zero_flows(self):
        assert bool((occlusion_mask(constant_flow(0, 0), constant_flow(0, 0)) == 1).all())

    def test_binary(self, rng):
        mask = occlusion_mask(torch.randn((2, 8, 8), generator=rng), torch.randn((2, 8, 8), generator=rng))
        assert bool(((mask == 0) | (mask == 1)).all())
        assert mask.shape == (8, 8)


class TestEMA:
    def test_blend(self):
        out = ema_update(constant_flow(10, 10), constant_flow(20, 20), 0.9)
        assert torch.allclose(out, constant_flow(11, 11))

    def test_first_call(self):
        new = constant_flow(3, 4)
        assert ema_update(None, new, 0.5) is new

    def test_beta_range(self):
        with pytest.raises(ValueError):
            ema_update(None, constant_flow(0, 0), 1.0)


class TestWarpingLoss:
    def test_static_clip(self, rng):
        frame = torch.rand((3, 8, 8), generator=rng, dtype=torch.float64)
        frames = frame.expand(4, 3, 8, 8)
        flows = torch.zeros((3, 2, 8, 8), dtype=torch.float64)
        masks = torch.ones((3, 8, 8), dtype=torch.float64)
        assert float(warping_loss(frames, flows, masks)) == pytest.approx(0.0, abs=1e-12)

    def test_fully_occluded(self, rng):
        frames = torch.rand((3, 3, 8, 8), generator=rng, dtype=torch.float64)
        flows = torch.zeros((2, 2, 8, 8), dtype=torch.float64)
        masks = torch.zeros((2, 8, 8), dtype=torch.float64)
        assert float(warping_loss(frames, flows, masks)) == 0.0

    def test_single_pixel_pair(self):
        frames = [torch.zeros((1, 1, 1), dtype=torch.float64), torch.ones((1, 1, 1), dtype=torch.float64)]
        loss = warping_loss(frames, [torch.zeros((2, 1, 1), dtype=torch.float64)], [torch.ones((1, 1), dtype=torch.float64)])
        assert float(loss) == pytest.approx(1.0)

    def test_length_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            warping_loss(torch.zeros((3, 1, 4, 4)), torch.zeros((1, 2, 4, 4)), torch.ones((2, 4, 4)))

    def test_gradients_skip_flows(self, rng):
        frames = torch.rand((2, 1, 8, 8), generator=rng, dtype=torch.float64, requires_grad=True)
        flows = torch.full((1, 2, 8, 8), 0.3, dtype=torch.float64, requires_grad=True)
        warping_loss(frames, flows, torch.ones((1, 8, 8), dtype=torch.float64)).backward()
        assert frames.grad is not None and float(frames.grad.abs().sum()) > 0
        assert flows.grad is None


class TestEstimators:
    def test_clip_flows_shapes_and_workers(self, rng):
        frames = torch.rand((4, 1, 10, 10), generator=rng, dtype=torch.float64)
        estimator = get_flow_estimator("block_match", patch=3, search=2)
        fwd, bwd = estimate_clip_flows(frames, estimator)
        assert fwd.shape == bwd.shape == (3, 2, 10, 10)
        fwd2, bwd2 = estimate_clip_flows(frames, estimator, workers=3)
        assert torch.equal(fwd, fwd2) and torch.equal(bwd, bwd2)

    def test_unknown_estimator(self):
        with pytest.raises(PluginError):
            get_flow_estimator("raft")

    def test_plugin_registration(self):
        @register_flow_estimator("test_zero")
        class ZeroFlow:
            def __call__(self, a, b):
                return a.new_zeros((2,) + tuple(a.shape[-2:]))

        try:
            estimator = FlowConfig(estimator="test_zero").build()
            assert estimator(torch.ones((1, 3, 3)), torch.ones((1, 3, 3))).shape == (2, 3, 3)
        finally:
            FLOW_ESTIMATORS.pop("test_zero")

    def test_config_passes_patch_and_search(self):
        estimator = FlowConfig(patch=3, search=1).build()
        assert (estimator.patch, estimator.search) == (3, 1)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            FlowConfig(patch=2)
        with pytest.raises(ValueError):
            FlowConfig.from_dict({"radius": 3})
