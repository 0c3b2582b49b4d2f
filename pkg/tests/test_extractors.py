import logging

import numpy as np
import pytest
import torch
from PIL import Image

from src.extractors import (
    ARCHIVE_NAME,
    SyntheticSpec,
    gen_synthetic_dataset,
    ingest_clip,
    list_frames,
    write_clip,
)
from src.flow import estimate_flow_blockmatch
from src.utils.errors import IngestError


def write_png_frames(directory, count, width, height, start=0):
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(0)
    for i in range(start, start + count):
        arr = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
        Image.fromarray(arr).save(directory / f"frame_{i}.png")


class TestSynthetic:
    def test_deterministic(self):
        spec = SyntheticSpec(num_clips=2, n_frames=3, size=16)
        a = gen_synthetic_dataset(spec, 7)
        b = gen_synthetic_dataset(spec, 7)
        for x, y in zip(a, b):
            assert torch.equal(x.frames, y.frames)
            assert torch.equal(x.flows, y.flows)
            assert x.velocity == y.velocity

    def test_shapes_and_range(self):
        spec = SyntheticSpec(num_clips=2, n_frames=4, size=16, channels=1, texture="checker")
        for clip in gen_synthetic_dataset(spec, 0):
            assert clip.frames.shape == (4, 1, 16, 16)
            assert clip.flows.shape == (3, 2, 16, 16)
            assert float(clip.frames.min()) >= 0.0 and float(clip.frames.max()) <= 1.0

    @pytest.mark.parametrize("texture", ["noise", "stripes", "checker"])
    def test_zero_velocity_is_static(self, texture):
        spec = SyntheticSpec(num_clips=1, n_frames=4, size=16, texture=texture, velocity=(0, 0))
        clip = gen_synthetic_dataset(spec, 1)[0]
        assert all(torch.equal(clip.frames[0], clip.frames[n]) for n in range(4))
        assert float(clip.flows.abs().sum()) == 0.0

    def test_flow_recovered_by_block_matching(self):
        spec = SyntheticSpec(num_clips=1, n_frames=2, size=48, shapes=6, velocity=(2, 0))
        clip = gen_synthetic_dataset(spec, 4)[0]
        assert clip.velocity == (2, 0)
        truth = clip.flows[0]
        shape = truth[0] == 2
        # shape pixels whose full patch lies on the shape and inside the frame
        interior = torch.nn.functional.max_pool2d((~shape).double()[None, None], 5, stride=1, padding=2)[0, 0] == 0
        interior[:4] = interior[-4:] = False
        interior[:, :4] = interior[:, -6:] = False
        assert bool(interior.any())
        flow = estimate_flow_blockmatch(clip.frames[0], clip.frames[1], patch=5, search=3)
        assert bool((flow[0][interior] == 2).all())
        assert bool((flow[1][interior] == 0).all())

    def test_velocity_warning(self, caplog):
        spec = SyntheticSpec(num_clips=1, n_frames=2, size=16, velocity=(6, 0), search_window=4)
        with caplog.at_level(logging.WARNING):
            gen_synthetic_dataset(spec, 0)
        assert "exceeds the flow search window" in caplog.text

    def test_invalid_spec(self):
        with pytest.raises(ValueError):
            SyntheticSpec(texture="marble")
        with pytest.raises(ValueError):
            SyntheticSpec(channels=2)


class TestIngest:
    def test_png_frames_at_target_size(self, tmp_path):
        write_png_frames(tmp_path, 8, 16, 16)
        clip = ingest_clip(tmp_path, 8, 16)
        assert clip.shape == (8, 3, 16, 16)
        assert clip.dtype == torch.float64
        first = np.asarray(Image.open(tmp_path / "frame_0.png"), dtype=np.float64) / 255.0
        assert np.allclose(clip[0].numpy().transpose(1, 2, 0), first)

    def test_first_frames_in_numeric_order(self, tmp_path):
        write_png_frames(tmp_path, 12, 16, 16)
        names = [p.name for p in list_frames(tmp_path)]
        assert names[:3] == ["frame_0.png", "frame_1.png", "frame_2.png"]
        assert names[-1] == "frame_11.png"
        assert ingest_clip(tmp_path, 8, 16).shape[0] == 8

    def test_non_square_center_crop(self, tmp_path):
        write_png_frames(tmp_path, 2, 40, 24)
        clip = ingest_clip(tmp_path, 2, 12)
        assert clip.shape == (2, 3, 12, 12)

    def test_grayscale(self, tmp_path):
        write_png_frames(tmp_path, 2, 16, 16)
        assert ingest_clip(tmp_path, 2, 8, channels=1).shape == (2, 1, 8, 8)

    def test_insufficient_frames(self, tmp_path):
        write_png_frames(tmp_path, 3, 16, 16)
        with pytest.raises(IngestError):
            ingest_clip(tmp_path, 8, 16)

    def test_missing_path(self, tmp_path):
        with pytest.raises(IngestError):
            ingest_clip(tmp_path / "nothing", 2, 16)

    def test_unreadable_frame(self, tmp_path):
        (tmp_path / "frame_0.png").write_bytes(b"not an image")
        with pytest.raises(IngestError):
            ingest_clip(tmp_path, 1, 8)

    def test_archive_round_trip(self, tmp_path, rng):
        clip = torch.rand((3, 3, 16, 16), generator=rng, dtype=torch.float64)
        out = write_clip(clip, tmp_path / "clip", {"source": "test"})
        assert (out / ARCHIVE_NAME).is_file()
        assert len(list_frames(out)) == 3
        assert torch.equal(ingest_clip(out), clip)
        assert ingest_clip(out / ARCHIVE_NAME, 2, 8).shape == (2, 3, 8, 8)
