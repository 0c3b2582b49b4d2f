import json
import math

import pytest
import torch

from src.extractors import SyntheticSpec, gen_synthetic_dataset
from src.flow import get_flow_estimator
from src.metrics import (
    MetricReport,
    get_perceptual_extractor,
    lpips_like,
    metric_flows,
    perceptual_distance,
    psnr,
    score_clip,
    ssim,
    warping_error,
)
from src.utils.errors import PluginError, ShapeMismatchError


def const(value: float, shape=(2, 3, 16, 16)) -> torch.Tensor:
    return torch.full(shape, value, dtype=torch.float64)


class TestPSNR:
    def test_identical(self, rng):
        x = torch.rand((2, 3, 8, 8), generator=rng, dtype=torch.float64)
        frames, mean = psnr(x, x.clone())
        assert frames == [math.inf, math.inf]
        assert mean == math.inf

    def test_twenty_db(self):
        _, mean = psnr(const(0.0), const(0.1))
        assert mean == pytest.approx(20.0)

    def test_zero_db(self):
        _, mean = psnr(const(0.0), const(1.0))
        assert mean == pytest.approx(0.0)

    def test_symmetric(self, rng):
        x = torch.rand((2, 1, 8, 8), generator=rng, dtype=torch.float64)
        y = torch.rand((2, 1, 8, 8), generator=rng, dtype=torch.float64)
        assert psnr(x, y) == psnr(y, x)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            psnr(const(0.0), const(0.0, (2, 3, 8, 8)))

    def test_per_frame_values(self, rng):
        x = torch.rand((3, 1, 8, 8), generator=rng, dtype=torch.float64)
        y = x.clone()
        y[1] += 0.01
        y[2] = (y[2] + 0.1 * torch.rand((1, 8, 8), generator=rng, dtype=torch.float64)).clamp(0, 1)
        frames, mean = psnr(y, x)
        expected = [10 * math.log10(1 / float((y[n] - x[n]).pow(2).mean())) for n in (1, 2)]
        assert frames[0] == math.inf
        assert frames[1:] == pytest.approx(expected, rel=1e-5)
        assert frames[1] == pytest.approx(40.0, rel=1e-5)
        assert mean == math.inf


class TestSSIM:
    def test_identical(self, rng):
        x = torch.rand((2, 3, 16, 16), generator=rng, dtype=torch.float64)
        _, mean = ssim(x, x.clone())
        assert mean == pytest.approx(1.0)

    def test_constant_black_vs_white(self):
        _, mean = ssim(const(0.0), const(1.0))
        assert 0.0 <= mean < 1e-3

    def test_symmetric(self, rng):
        x = torch.rand((1, 3, 16, 16), generator=rng, dtype=torch.float64)
        y = torch.rand((1, 3, 16, 16), generator=rng, dtype=torch.float64)
        assert ssim(x, y)[1] == pytest.approx(ssim(y, x)[1], abs=1e-12)

    def test_small_frames(self):
        with pytest.raises(ValueError):
            ssim(const(0.0, (1, 1, 8, 8)), const(0.0, (1, 1, 8, 8)))

    def test_even_window(self):
        with pytest.raises(ValueError):
            ssim(const(0.0), const(0.0), window=10)


class TestWarpingError:
    def test_static_clip(self, rng):
        frame = torch.rand((1, 3, 8, 8), generator=rng, dtype=torch.float64)
        result = warping_error(frame.expand(4, 3, 8, 8), torch.zeros((3, 2, 8, 8)), torch.ones((3, 8, 8)))
        assert result.raw == pytest.approx(0.0, abs=1e-12)
        assert result.excluded_pairs == 0

    def test_flow_consistent_shift(self, rng):
        a = torch.rand((3, 8, 10), generator=rng, dtype=torch.float64)
        b = torch.cat([a[..., :1], a[..., :-1]], dim=-1)
        flows = torch.zeros((1, 2, 8, 10), dtype=torch.float64)
        flows[:, 0] = 1.0
        masks = torch.ones((1, 8, 10), dtype=torch.float64)
        masks[..., -1] = 0.0
        assert warping_error(torch.stack([a, b]), flows, masks).raw == pytest.approx(0.0, abs=1e-12)

    def test_single_pixel(self):
        clip = torch.tensor([0.0, 1.0], dtype=torch.float64).view(2, 1, 1, 1)
        result = warping_error(clip, torch.zeros((1, 2, 1, 1)), torch.ones((1, 1, 1)))
        assert result.raw == pytest.approx(1.0)
        assert result.scaled == pytest.approx(100.0)

    def test_occluded_pair_excluded(self):
        clip = torch.tensor([0.0, 1.0, 0.5], dtype=torch.float64).view(3, 1, 1, 1)
        masks = torch.tensor([1.0, 0.0], dtype=torch.float64).view(2, 1, 1)
        result = warping_error(clip, torch.zeros((2, 2, 1, 1)), masks)
        assert result.excluded_pairs == 1
        assert result.per_pair == [pytest.approx(1.0)]

    def test_all_pairs_occluded(self):
        clip = torch.zeros((3, 1, 2, 2), dtype=torch.float64)
        result = warping_error(clip, torch.zeros((2, 2, 2, 2)), torch.zeros((2, 2, 2)))
        assert math.isnan(result.raw)
        assert result.excluded_pairs == 2

    def test_duplicate_frame_does_not_increase(self, rng):
        clip = torch.rand((3, 1, 6, 6), generator=rng, dtype=torch.float64)
        flows = torch.zeros((2, 2, 6, 6), dtype=torch.float64)
        masks = torch.ones((2, 6, 6), dtype=torch.float64)
        base = warping_error(clip, flows, masks).raw
        longer = torch.cat([clip, clip[-1:]])
        extended = warping_error(longer, torch.zeros((3, 2, 6, 6)), torch.ones((3, 6, 6))).raw
        assert extended <= base

    def test_single_frame(self):
        assert warping_error(torch.zeros((1, 1, 4, 4)), torch.zeros((0, 2, 4, 4)), torch.zeros((0, 4, 4))).raw == 0.0

    def test_synthetic_clips_beat_independent_frames(self):
        spec = SyntheticSpec(num_clips=3, n_frames=4, size=32, max_velocity=1)
        estimator = get_flow_estimator("block_match", patch=5, search=2)
        gen = torch.Generator().manual_seed(0)
        for clip in gen_synthetic_dataset(spec, 3):
            flows, masks = metric_flows(clip.frames, estimator)
            consistent = warping_error(clip.frames, flows, masks).raw
            shuffled = torch.rand(clip.frames.shape, generator=gen, dtype=torch.float64)
            assert 5.0 * consistent < warping_error(shuffled, flows, masks).raw


class TestPerceptual:
    @pytest.fixture
    def extractor(self):
        return get_perceptual_extractor("random_conv", 3, dtype=torch.float64)

    def test_identical(self, extractor, rng):
        x = torch.rand((2, 3, 16, 16), generator=rng, dtype=torch.float64)
        assert float(perceptual_distance(x, x.clone(), extractor)) == pytest.approx(0.0, abs=1e-12)

    def test_symmetric_and_nonnegative(self, extractor, rng):
        x = torch.rand((3, 16, 16), generator=rng, dtype=torch.float64)
        y = torch.rand((3, 16, 16), generator=rng, dtype=torch.float64)
        d_xy = float(perceptual_distance(x, y, extractor))
        assert d_xy >= 0.0
        assert d_xy == pytest.approx(float(perceptual_distance(y, x, extractor)))

    def test_triangle_violations_rare(self, extractor, rng):
        violations = 0
        trials = 60
        for _ in range(trials):
            x, y, z = (torch.rand((3, 16, 16), generator=rng, dtype=torch.float64) for _ in range(3))
            d = lambda a, b: float(perceptual_distance(a, b, extractor))  # noqa: E731
            if d(x, z) > d(x, y) + d(y, z) + 1e-12:
                violations += 1
        assert violations / trials < 0.05

    def test_seeded_weights(self):
        a = get_perceptual_extractor("random_conv", 3, rng_seed=2)
        b = get_perceptual_extractor("random_conv", 3, rng_seed=2)
        assert all(torch.equal(p, q) for p, q in zip(a.parameters(), b.parameters()))

    def test_unknown_plugin(self):
        with pytest.raises(PluginError):
            get_perceptual_extractor("vgg", 3)

    def test_missing_plugin_is_omitted(self):
        assert lpips_like(const(0.0), const(1.0), None) is None


class TestMetricReport:
    def test_json_keeps_infinity(self, rng):
        x = torch.rand((2, 3, 16, 16), generator=rng, dtype=torch.float64)
        report = score_clip(x, x.clone(), torch.zeros((1, 2, 16, 16)), torch.ones((1, 16, 16)))
        data = json.loads(report.to_json())
        assert data["psnr"] == "inf"
        assert data["lpips_like"] is None
        assert data["flow_source"] == "ground_truth"
        restored = MetricReport.from_dict(data)
        assert restored.psnr == math.inf
        assert restored.ssim == pytest.approx(1.0)

    def test_nan_warping_error(self):
        report = MetricReport(psnr=20.0, ssim=0.5, we=math.nan, we_pairs_excluded=3)
        data = report.to_dict()
        assert data["we"] == "nan" and data["we_scaled"] == "nan"
        assert math.isnan(MetricReport.from_dict(data).we)

    def test_table_values(self):
        report = MetricReport(psnr=30.0, ssim=0.9, we=0.002, lpips_like=0.1)
        assert report.table_values() == {"psnr": 30.0, "ssim": 0.9, "lpips_like": 0.1, "we_e2": pytest.approx(0.2)}

    def test_score_clip_with_extractor(self, rng):
        x = torch.rand((2, 3, 16, 16), generator=rng, dtype=torch.float64)
        y = torch.rand((2, 3, 16, 16), generator=rng, dtype=torch.float64)
        extractor = get_perceptual_extractor("random_conv", 3)
        report = score_clip(x, y, torch.zeros((1, 2, 16, 16)), torch.ones((1, 16, 16)), extractor=extractor, flow_source="restored")
        assert report.lpips_like is not None and report.lpips_like > 0
        assert len(report.psnr_frames) == 2 and len(report.we_pairs) == 1
        assert report.flow_source == "restored"
