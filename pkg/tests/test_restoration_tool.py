import json
import math

import pytest
import torch

import main
from src.extractors import ingest_clip
from src.restoration_tool import SeedRestorationTool
from src.utils.errors import EVENTS, RestorationError, failed_runs
from src.utils.reports import ResultTable


def tiny_config(tmp_path, task="sr4"):
    return {
        "experiment": {"task": task, "rng_seed": 0, "out_dir": str(tmp_path / "runs"), "dtype": "float64", "progress": False, "trace_every": 2},
        "dataset": {"train_clips": 2, "num_clips": 2, "n_frames": 3, "size": 16, "shapes": 2, "max_velocity": 1},
        "diffusion": {
            "schedule": {"T_train": 100, "T_rev": 2},
            "network": {"width": 8, "depth": 1, "time_dim": 8, "groups": 4},
            "training": {"epochs": 2, "batch_size": 8, "draws_per_item": 1, "progress": False},
        },
        "codec": {"mode": "identity"},
        "flow": {"patch": 3, "search": 2},
        "solver": {"epochs": 6, "transition": 2, "flow_period": 2},
        "metrics": {"perceptual": "random_conv", "ssim_window": 7},
        "ablation": {"seeds": [0], "clips": [0], "steps": [2, 4]},
    }


@pytest.fixture
def tool(tmp_path):
    return SeedRestorationTool(tiny_config(tmp_path))


def test_gen_data_writes_clips_and_flows(tool):
    data_dir = tool.gen_data()
    clip_dirs = sorted(p for p in data_dir.iterdir() if p.is_dir())
    assert [p.name for p in clip_dirs] == ["clip_000", "clip_001"]
    assert (clip_dirs[0] / "flows.pt").is_file()
    assert ingest_clip(clip_dirs[0]).shape == (3, 3, 16, 16)


def test_train_prior_is_reused(tool):
    first = tool.train_prior()
    again = SeedRestorationTool(tool.config).train_prior()
    assert again.hashes == first.hashes
    for p, q in zip(first.net.parameters(), again.net.parameters()):
        assert torch.equal(p, q)


def test_run_task_writes_artifacts(tool, tmp_path):
    restored, report, row = tool.run_task(0)
    assert restored.shape == (3, 3, 16, 16)
    assert float(restored.min()) >= 0.0 and float(restored.max()) <= 1.0
    run_dir = tmp_path / "runs" / "restore" / "sr4" / "clip000_seed0"
    for name in ("report.json", "loss_trace.csv", "metric_trace.csv", "row.csv", "config.json", "solver_state.pt", "measurement.pt"):
        assert (run_dir / name).is_file(), name
    assert torch.load(run_dir / "measurement.pt", weights_only=True)["Y"].shape == (3, 3, 4, 4)
    assert json.loads((run_dir / "report.json").read_text())["flow_source"] == "ground_truth"
    assert row.label == "sr4" and row.we_e2 == pytest.approx(report.we_scaled)
    config = json.loads((run_dir / "config.json").read_text())
    assert config["reverse_calls"] == 7
    assert config["flow_estimations"] == 2
    assert set(config["lipschitz"]) == {"reverse", "decoder"}
    assert math.isfinite(config["lipschitz"]["reverse"]) and config["lipschitz"]["reverse"] > 0
    assert config["lipschitz"]["decoder"] == pytest.approx(1.0, rel=1e-6)
    assert ResultTable.from_csv(run_dir / "row.csv").rows[0].psnr == pytest.approx(report.psnr)
    assert EVENTS["sr4/clip0/seed0"][-1]["code"] == "RESTORED"

    figure, data = tool.plot(str(run_dir))
    assert figure.is_file() and data.is_file()


def test_lipschitz_estimates_can_be_disabled(tmp_path):
    config = tiny_config(tmp_path)
    config["metrics"]["lipschitz_directions"] = 0
    tool = SeedRestorationTool(config)
    tool.run_task(0)
    written = json.loads((tmp_path / "runs" / "restore" / "sr4" / "clip000_seed0" / "config.json").read_text())
    assert written["lipschitz"] == {}


def test_device_setting_is_rejected(tmp_path):
    config = tiny_config(tmp_path)
    config["experiment"]["device"] = "cuda"
    with pytest.raises(ValueError, match="device"):
        SeedRestorationTool(config)


def clustering_config(tmp_path):
    config = tiny_config(tmp_path)
    config["dataset"]["num_clips"] = 4
    config["clustering"] = {"epochs": 2, "lr_seed": 0.05, "min_clips": 4}
    return config


def test_seed_clustering_writes_report(tmp_path):
    tool = SeedRestorationTool(clustering_config(tmp_path))
    result = tool.seed_clustering()
    assert result["clips"] == [0, 1, 2, 3]
    assert result["epochs"] == 2
    assert math.isfinite(result["statistic"]) and result["statistic"] > 0
    assert abs(result["control"] - 1.0) <= 0.1
    written = json.loads((tmp_path / "runs" / "reports" / "seed_clustering.json").read_text())
    assert written["statistic"] == pytest.approx(result["statistic"])
    assert EVENTS["clustering/seed0"][-1]["code"] == "SEEDS_CLUSTERED"


def test_seed_clustering_needs_enough_clips(tool):
    with pytest.raises(RestorationError, match="at least 4 clips"):
        tool.seed_clustering()


def test_run_task_is_deterministic(tmp_path):
    reports = []
    for name in ("a", "b"):
        tool = SeedRestorationTool(tiny_config(tmp_path / name, task="motion_deblur"))
        reports.append(tool.run_task(1)[1])
    assert reports[0].psnr == reports[1].psnr
    assert reports[0].we == reports[1].we


def test_score_restored_against_reference(tool, tmp_path):
    tool.gen_data()
    restored_dir = tmp_path / "runs" / "data" / "clip_000"
    report = tool.score(str(restored_dir), str(restored_dir))
    assert report.psnr == float("inf")
    assert report.ssim == pytest.approx(1.0)


@pytest.mark.slow
def test_stage_grid(tool, tmp_path):
    table = tool.run_ablation_grid("stages")
    assert table.labels() == ["Base", "Base with noise prior", "Base with warping", "Base with both"]
    assert len(table) == 4
    assert (tmp_path / "runs" / "reports" / "ablation_stages.csv").is_file()


@pytest.mark.slow
def test_failing_cell_is_recorded(tmp_path):
    config = tiny_config(tmp_path)
    config["ablation"]["steps"] = [2, 500]
    tool = SeedRestorationTool(config)
    table = tool.run_ablation_grid("steps")
    assert table.labels() == ["2 steps"]
    assert failed_runs() == ["steps/500 steps/clip0/seed0"]
    events = json.loads((tmp_path / "runs" / "reports" / "events.json").read_text())
    assert "steps/500 steps/clip0/seed0" in events


def test_unknown_grid(tool):
    with pytest.raises(ValueError):
        tool.ablation_cells("widths")


class TestCommandLine:
    def write_config(self, tmp_path, **experiment):
        config = tiny_config(tmp_path)
        config["experiment"].update(experiment)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        return str(path)

    def test_gen_data(self, tmp_path):
        assert main.main(["--config", self.write_config(tmp_path), "gen-data"]) == 0
        assert (tmp_path / "runs" / "data" / "clip_000" / "clip.pt").is_file()
        assert (tmp_path / "runs" / "reports" / "events.json").is_file()

    def test_invalid_task(self, tmp_path):
        assert main.main(["--config", self.write_config(tmp_path), "--task", "denoise", "gen-data"]) == main.EXIT_FAILURE

    def test_restore_with_overrides(self, tmp_path, capsys):
        out = tmp_path / "elsewhere"
        code = main.main(["--config", self.write_config(tmp_path), "--out", str(out), "--steps", "1", "--seed", "3", "restore", "--clip", "1"])
        assert code == 0
        assert json.loads(capsys.readouterr().out)["psnr"] is not None
        config = json.loads((out / "restore" / "sr4" / "clip001_seed3" / "config.json").read_text())
        assert config["schedule"] == [99]

    def test_cluster(self, tmp_path, capsys):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(clustering_config(tmp_path)))
        assert main.main(["--config", str(path), "cluster"]) == 0
        result = json.loads(capsys.readouterr().out)
        assert set(result) >= {"statistic", "control"}

    def test_cluster_with_too_few_clips(self, tmp_path):
        assert main.main(["--config", self.write_config(tmp_path), "cluster", "--assert"]) == main.EXIT_FAILURE

    def test_plot_without_trace(self, tmp_path):
        assert main.main(["--config", self.write_config(tmp_path), "plot", "--run", str(tmp_path)]) == main.EXIT_FAILURE
