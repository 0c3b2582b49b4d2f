"""
High-level orchestration of seed-space video restoration experiments.

This module defines a :class:`SeedRestorationTool` class that ties
together the clip sources, the diffusion prior, the degradation
operators, the solver and the metrics into a complete pipeline.  It
supports generating synthetic data, training the prior, restoring one
clip for a task, running ablation grids, measuring how regressed seeds
cluster by clip, scoring restored clips and plotting metric evolution,
writing every artifact under the configured output directory.

Configuration is supplied via a JSON file path or directly as a
dictionary.  Sections: ``experiment``, ``dataset``, ``diffusion``,
``codec``, ``degradation``, ``flow``, ``solver``, ``metrics``,
``clustering`` and ``ablation``; any missing key falls back to its
default.
"""

from __future__ import annotations

import copy
import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import torch

from src.codecs.codec import Codec, CodecConfig, build_codec
from src.codecs.training import train_toy_codec
from src.degradations.tasks import TASKS, DegradationConfig, build_operator
from src.diffusion.sampler import estimate_lipschitz, reverse_process
from src.diffusion.schedule import NoiseSchedule, ScheduleConfig
from src.diffusion.score_network import ScoreNetworkConfig, ToyScoreNetwork, build_score_network
from src.diffusion.training import TrainingConfig, train_toy_dm
from src.extractors.clip_extractor import ingest_clip, write_clip
from src.extractors.synthetic import SyntheticClip, SyntheticSpec, gen_synthetic_dataset
from src.flow.estimators import FlowConfig
from src.metrics.perceptual import get_perceptual_extractor
from src.metrics.quality import metric_flows
from src.metrics.report import MetricReport, score_clip
from src.solvers.decomposition import SolverConfig
from src.solvers.regression import cluster_statistic, seed_regression
from src.solvers.seed_map_solver import save_state, solve
from src.utils.acceptance import STAGE_LABELS, step_label
from src.utils.checkpoints import load_archive, save_archive
from src.utils.config_sections import ConfigSection
from src.utils.errors import EVENTS, RestorationError, report_error, report_ok
from src.utils.plots import emit_plots
from src.utils.reports import ResultRow, ResultTable, write_loss_trace, write_metric_trace

LOGGER_NAME = "seedvr"
HELD_OUT_OFFSET = 10_000
DTYPES = {"float32": torch.float32, "float64": torch.float64}
GRIDS = ("stages", "steps", "lr_radius")


@dataclass(frozen=True)
class ExperimentConfig(ConfigSection):
    task: str = "sr4"
    rng_seed: int = 0
    out_dir: str = "runs"
    dtype: str = "float32"
    dataset_name: str = "synthetic"
    progress: bool = True
    trace_every: int = 25
    label: Optional[str] = None

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ValueError(f"experiment.task must be one of {TASKS}, got {self.task!r}")
        if self.dtype not in DTYPES:
            raise ValueError(f"experiment.dtype must be one of {sorted(DTYPES)}, got {self.dtype!r}")
        if self.trace_every < 0:
            raise ValueError("experiment.trace_every must be non-negative")


@dataclass
class Prior:
    net: ToyScoreNetwork
    sched: NoiseSchedule
    codec: Codec
    hashes: Dict[str, str]


class SeedRestorationTool:
    """
    Encapsulates all state and behavior required to run restoration
    experiments.  This class is responsible for reading configuration,
    producing clips, training or loading the prior and running the
    solver.  Detailed success and failure information is recorded using
    the :mod:`src.utils.errors` module.
    """

    def __init__(
        self,
        config: Optional[Dict[str, Any]] = None,
        *,
        config_file: Optional[str] = None,
        overrides: Optional[Dict[str, Dict[str, Any]]] = None,
    ) -> None:
        if config_file and os.path.exists(config_file):
            with open(config_file, "r", encoding="utf-8") as f:
                config = json.load(f)
        elif config is None:
            config = {}
        config = copy.deepcopy(config)
        for section, values in (overrides or {}).items():
            config.setdefault(section, {}).update({k: v for k, v in values.items() if v is not None})

        # Ensure essential keys exist to prevent KeyErrors
        config.setdefault("experiment", {})
        config["experiment"].setdefault("task", "sr4")
        config["experiment"].setdefault("rng_seed", 0)
        config["experiment"].setdefault("out_dir", os.getenv("SEEDVR_OUT", "runs"))
        config["experiment"].setdefault("dtype", "float32")

        config.setdefault("dataset", {})
        config["dataset"].setdefault("path", None)
        config["dataset"].setdefault("train_clips", 12)

        config.setdefault("diffusion", {})
        for key in ("schedule", "network", "training"):
            config["diffusion"].setdefault(key, {})
        for key in ("codec", "degradation", "flow", "solver"):
            config.setdefault(key, {})

        config.setdefault("metrics", {})
        config["metrics"].setdefault("perceptual", "random_conv")
        config["metrics"].setdefault("ssim_window", 11)
        config["metrics"].setdefault("lipschitz_directions", 10)

        config.setdefault("clustering", {})
        config["clustering"].setdefault("epochs", 300)
        config["clustering"].setdefault("lr_seed", 5e-2)
        config["clustering"].setdefault("min_clips", 4)

        config.setdefault("ablation", {})
        config["ablation"].setdefault("seeds", [0, 1, 2])
        config["ablation"].setdefault("clips", None)
        config["ablation"].setdefault("steps", [2, 4, 10])
        config["ablation"].setdefault("lr_resid", [1e-2, 1e-3, 1e-4])
        config["ablation"].setdefault("radius_coef", [0.1, 1.0, 10.0])

        self.config = config
        self.experiment = ExperimentConfig.from_dict(config["experiment"])
        self.logger = logging.getLogger(LOGGER_NAME)
        self._log_file: Optional[Path] = None
        self._prior: Optional[Prior] = None
        self._clips: Optional[List[SyntheticClip]] = None

    # ------------------------------------------------------------------
    # configuration views

    @property
    def out_dir(self) -> Path:
        return Path(self.experiment.out_dir)

    @property
    def dtype(self) -> torch.dtype:
        return DTYPES[self.experiment.dtype]

    def synthetic_spec(self) -> SyntheticSpec:
        values = {k: v for k, v in self.config["dataset"].items() if k not in ("path", "train_clips")}
        values.setdefault("search_window", self.flow_config().search)
        return SyntheticSpec.from_dict(values)

    def flow_config(self) -> FlowConfig:
        return FlowConfig.from_dict(self.config["flow"])

    def solver_config(self, **overrides: Any) -> SolverConfig:
        values = dict(self.config["solver"])
        values.setdefault("rng_seed", self.experiment.rng_seed)
        values.setdefault("progress", self.experiment.progress)
        return SolverConfig.from_dict(values, **overrides)

    def schedule_config(self, **overrides: Any) -> ScheduleConfig:
        return ScheduleConfig.from_dict(self.config["diffusion"]["schedule"], **overrides)

    def log_message(self, message: str, level: str = "INFO") -> None:
        if self._log_file is None:
            log_dir = self.out_dir / "reports"
            log_dir.mkdir(parents=True, exist_ok=True)
            self._log_file = log_dir / "restoration.log"
            handler = logging.FileHandler(self._log_file, encoding="utf-8")
            handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
            self.logger.addHandler(handler)
        self.logger.log(getattr(logging, level.upper(), logging.INFO), message)

    # ------------------------------------------------------------------
    # data

    def clips(self) -> List[SyntheticClip]:
        """Evaluation clips: the ingested clip when ``dataset.path`` is set, synthetic otherwise."""
        if self._clips is None:
            path = self.config["dataset"].get("path")
            spec = self.synthetic_spec()
            if path:
                frames = ingest_clip(path, spec.n_frames, spec.size, spec.channels)
                self._clips = [SyntheticClip(frames, None, (0, 0))]  # type: ignore[arg-type]
                self.log_message(f"Ingested clip {path} with {frames.shape[0]} frames")
            else:
                self._clips = gen_synthetic_dataset(spec, self.experiment.rng_seed)
        return self._clips

    def held_out_clips(self) -> List[SyntheticClip]:
        spec = self.synthetic_spec().replace(num_clips=int(self.config["dataset"]["train_clips"]))
        return gen_synthetic_dataset(spec, self.experiment.rng_seed + HELD_OUT_OFFSET)

    def gen_data(self) -> Path:
        data_dir = self.out_dir / "data"
        for i, clip in enumerate(self.clips()):
            clip_dir = write_clip(clip.frames, data_dir / f"clip_{i:03d}", {"velocity": list(clip.velocity)})
            if clip.flows is not None:
                save_archive(clip_dir / "flows.pt", {"flows": clip.flows}, {"kind": "ground_truth_flows"})
        self.log_message(f"Wrote {len(self.clips())} clips to {data_dir}")
        return data_dir

    # ------------------------------------------------------------------
    # prior

    def _prior_dir(self) -> Path:
        return self.out_dir / "prior"

    def train_prior(self, force: bool = False) -> Prior:
        """
        Train the codec and the score network on held-out clips, or load
        them when checkpoints for the same schedule already exist.
        """
        sched = self.schedule_config().build()
        prior_dir = self._prior_dir()
        if not force and (prior_dir / "score_net.pt").exists():
            try:
                self._prior = self._load_prior(sched)
                return self._prior
            except RestorationError as e:
                self.log_message(f"Ignoring stale prior checkpoints: {e}", level="WARNING")

        run = {"label": "train-prior", "task": self.experiment.task}
        seed = self.experiment.rng_seed
        frames = torch.cat([c.frames for c in self.held_out_clips()]).to(self.dtype)
        codec_config = CodecConfig.from_dict(self.config["codec"])
        self.log_message(f"Training {codec_config.mode} codec on {frames.shape[0]} held-out frames")
        codec, codec_losses = train_toy_codec(frames, codec_config, seed, self.dtype)
        with torch.no_grad():
            latents = codec.encode(frames)

        net_config = ScoreNetworkConfig.from_dict(self.config["diffusion"]["network"])
        training = TrainingConfig.from_dict(self.config["diffusion"]["training"])
        net = build_score_network(latents.shape[1], net_config, seed, self.dtype)
        self.log_message(f"Training score network on latents {tuple(latents.shape[1:])} for {training.epochs} epochs")
        net, dm_losses = train_toy_dm(latents, net, sched, training.epochs, seed, training)
        for p in net.parameters():
            p.requires_grad_(False)

        hashes = {
            "score_net": save_archive(
                prior_dir / "score_net.pt",
                {f"state/{k}": v for k, v in net.state_dict().items()},
                {
                    "kind": "toy-unet",
                    "channels": latents.shape[1],
                    "network": net_config.to_dict(),
                    "latent_shape": list(latents.shape[1:]),
                    "schedule_hash": sched.schedule_hash(),
                    "final_loss": dm_losses[-1] if dm_losses else None,
                },
            ),
            "codec": save_archive(
                prior_dir / "codec.pt",
                {f"state/{k}": v for k, v in codec.state_dict().items()},
                {
                    "kind": codec_config.mode,
                    "codec": codec_config.to_dict(),
                    "channels": frames.shape[1],
                    "split": codec.split_descriptor,
                    "final_loss": codec_losses[-1] if codec_losses else None,
                },
            ),
        }
        report_ok("PRIOR_TRAINED", run, {"hashes": hashes})
        self._prior = Prior(net, sched, codec, hashes)
        return self._prior

    def _load_prior(self, sched: NoiseSchedule) -> Prior:
        prior_dir = self._prior_dir()
        net_tensors, net_meta = load_archive(prior_dir / "score_net.pt")
        if net_meta.get("schedule_hash") != sched.schedule_hash():
            raise RestorationError("score network was trained under a different noise schedule")
        codec_tensors, codec_meta = load_archive(prior_dir / "codec.pt")
        net = build_score_network(int(net_meta["channels"]), ScoreNetworkConfig.from_dict(net_meta["network"]), 0, self.dtype)
        net.load_state_dict({k[len("state/"):]: v for k, v in net_tensors.items()})
        net.eval()
        codec = build_codec(CodecConfig.from_dict(codec_meta["codec"]), int(codec_meta["channels"]), 0, self.dtype)
        codec.load_state_dict({k[len("state/"):]: v for k, v in codec_tensors.items()})
        codec.eval()
        for p in list(net.parameters()) + list(codec.parameters()):
            p.requires_grad_(False)
        self.log_message(f"Loaded prior from {prior_dir}")
        return Prior(net, sched, codec, {"score_net": net_meta["sha256"], "codec": codec_meta["sha256"]})

    def prior(self, sched: Optional[NoiseSchedule] = None) -> Prior:
        if self._prior is None:
            self.train_prior()
        assert self._prior is not None
        if sched is None:
            return self._prior
        return Prior(self._prior.net, sched, self._prior.codec, self._prior.hashes)

    def perceptual_extractor(self, channels: int) -> Optional[torch.nn.Module]:
        name = self.config["metrics"].get("perceptual")
        if not name:
            return None
        return get_perceptual_extractor(name, channels, rng_seed=0, dtype=self.dtype)

    # ------------------------------------------------------------------
    # restoration

    def run_task(
        self,
        clip_index: int = 0,
        *,
        seed: Optional[int] = None,
        label: Optional[str] = None,
        solver_overrides: Optional[Dict[str, Any]] = None,
        schedule_overrides: Optional[Dict[str, Any]] = None,
        run_dir: Optional[Path] = None,
    ) -> Tuple[torch.Tensor, MetricReport, ResultRow]:
        """
        Degrade one clip with the task operator, restore it, score it
        against the ground truth and write frames, report, table row,
        traces and solver state into the run directory.
        """
        task = self.experiment.task
        seed = self.experiment.rng_seed if seed is None else seed
        label = label or self.experiment.label or task
        run = {"label": f"{label}/clip{clip_index}/seed{seed}", "task": task}
        run_dir = run_dir or self.out_dir / "restore" / task / f"clip{clip_index:03d}_seed{seed}"

        clip = self.clips()[clip_index]
        gt = clip.frames.to(self.dtype)
        prior = self.prior(self.schedule_config(**(schedule_overrides or {})).build())
        degradation = DegradationConfig.from_dict(self.config["degradation"])
        op = build_operator(task, tuple(gt.shape), degradation, seed)
        Y = op(gt)
        solver = self.solver_config(rng_seed=seed, **(solver_overrides or {}))
        flow_config = self.flow_config()
        estimator = flow_config.build()
        perceptual = self.perceptual_extractor(gt.shape[1])

        self.log_message(f"Restoring {run['label']}: measurement {tuple(Y.shape)} -> clip {tuple(gt.shape)}")
        start = time.perf_counter()
        restored, state = solve(
            Y,
            op,
            prior.net,
            prior.sched,
            prior.codec,
            estimator,
            solver,
            flow_config=flow_config,
            task=task,
            perceptual=perceptual,
            ground_truth=gt if self.experiment.trace_every > 0 else None,
            gt_flows=clip.flows,
            trace_every=self.experiment.trace_every,
        )
        seconds = time.perf_counter() - start

        flows, masks = metric_flows(gt, estimator, flow_config.tol_abs, flow_config.tol_rel)
        report = score_clip(
            restored,
            gt,
            flows,
            masks,
            extractor=perceptual,
            ssim_window=int(self.config["metrics"]["ssim_window"]),
        )
        row = ResultRow(
            dataset=self.experiment.dataset_name,
            label=label,
            clip=clip_index,
            seed=seed,
            psnr=report.psnr,
            ssim=report.ssim,
            lpips_like=report.lpips_like,
            we_e2=report.we_scaled,
            seconds=seconds,
        )

        write_clip(restored, run_dir / "restored", {"task": task, "seed": seed})
        save_archive(run_dir / "measurement.pt", {"Y": Y, **{f"op/{k}": v for k, v in op.tensors().items()}}, {"task": task, "operator": op.params()})
        save_state(state, run_dir / "solver_state.pt", solver)
        (run_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
        write_loss_trace(run_dir / "loss_trace.csv", state.loss_history, state.data_history)
        if state.trace:
            write_metric_trace(run_dir / "metric_trace.csv", state.trace, solver.transition)
        ResultTable([row]).to_csv(run_dir / "row.csv")
        lipschitz = self.lipschitz_estimates(prior, state.decomposition.z_shared, rng_seed=seed)
        with open(run_dir / "config.json", "w", encoding="utf-8") as f:
            json.dump(
                {
                    "config": self.config,
                    "seed": seed,
                    "clip": clip_index,
                    "solver": solver.to_dict(),
                    "schedule": list(prior.sched.reverse_timesteps),
                    "checkpoints": prior.hashes,
                    "reverse_calls": state.reverse_calls,
                    "flow_estimations": state.flow_estimations,
                    "lipschitz": lipschitz,
                },
                f,
                indent=2,
                default=str,
            )

        report_ok("RESTORED", run, {"psnr": report.psnr, "we_e2": report.we_scaled})
        self.log_message(f"{run['label']}: PSNR {report.psnr:.3f} dB, SSIM {report.ssim:.4f}, WE {report.we_scaled:.4f}e-2 in {seconds:.1f}s")
        return restored, report, row

    def lipschitz_estimates(self, prior: Prior, z: torch.Tensor, rng_seed: int = 0) -> Dict[str, float]:
        """
        Empirical slopes of R at the first seed of ``z`` and of D1 at
        D2(R(z)) over ``metrics.lipschitz_directions`` random directions.
        Empty when that count is zero.
        """
        n_directions = int(self.config["metrics"]["lipschitz_directions"])
        if n_directions <= 0:
            return {}
        z = z.detach()
        if z.dim() == 4:
            z = z[0]
        with torch.no_grad():
            h = prior.codec.decode_part2(reverse_process(z, prior.net, prior.sched))
        return {
            "reverse": estimate_lipschitz(
                lambda x: reverse_process(x, prior.net, prior.sched), z, n_directions=n_directions, rng_seed=rng_seed
            ),
            "decoder": estimate_lipschitz(prior.codec.decode_part1, h, n_directions=n_directions, rng_seed=rng_seed),
        }

    def seed_clustering(self, clip_indices: Optional[Sequence[int]] = None, seed: Optional[int] = None) -> Dict[str, Any]:
        """
        Regress one seed per frame for each clip and compare the
        intra-clip / inter-clip distance ratio with that of i.i.d.
        Gaussian seeds of the same shapes.  Writes
        ``reports/seed_clustering.json``.

        :raises RestorationError: with fewer than ``clustering.min_clips`` clips.
        """
        clustering = self.config["clustering"]
        seed = self.experiment.rng_seed if seed is None else seed
        clips = self.clips()
        indices = list(range(len(clips)) if clip_indices is None else clip_indices)
        if len(indices) < int(clustering["min_clips"]):
            raise RestorationError(f"seed clustering needs at least {clustering['min_clips']} clips, got {len(indices)}")
        run = {"label": f"clustering/seed{seed}", "task": self.experiment.task}
        prior = self.prior()
        solver = self.solver_config(
            epochs=int(clustering["epochs"]), transition=0, lr_seed=float(clustering["lr_seed"]), rng_seed=seed
        )

        self.log_message(f"Regressing seeds for {len(indices)} clips over {solver.epochs} iterations")
        seeds = [
            seed_regression(clips[i].frames.to(self.dtype), prior.net, prior.sched, prior.codec, solver, rng_seed=seed + i)
            for i in indices
        ]
        gen = torch.Generator(device="cpu").manual_seed(seed)
        control = [torch.randn(s.shape, generator=gen, dtype=torch.float64) for s in seeds]
        result = {
            "statistic": cluster_statistic(seeds),
            "control": cluster_statistic(control),
            "clips": indices,
            "epochs": solver.epochs,
            "seed": seed,
        }

        path = self.out_dir / "reports" / "seed_clustering.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(result, indent=2), encoding="utf-8")
        report_ok("SEEDS_CLUSTERED", run, {"statistic": result["statistic"], "control": result["control"]})
        self.log_message(f"Seed clustering statistic {result['statistic']:.4f} (i.i.d. control {result['control']:.4f})")
        return result

    def ablation_cells(self, grid: str) -> List[Tuple[str, Dict[str, Any], Dict[str, Any]]]:
        """``(label, solver overrides, schedule overrides)`` per cell of ``grid``."""
        ablation = self.config["ablation"]
        if grid == "stages":
            flags = [(False, False), (True, False), (False, True), (True, True)]
            return [(label, {"noise_prior": p, "use_warping": w}, {}) for label, (p, w) in zip(STAGE_LABELS, flags)]
        if grid == "steps":
            return [(step_label(k), {}, {"T_rev": int(k)}) for k in ablation["steps"]]
        if grid == "lr_radius":
            return [
                (f"lr_r={lr:g} C={c:g}", {"lr_resid": float(lr), "radius_coef": float(c)}, {})
                for lr in ablation["lr_resid"]
                for c in ablation["radius_coef"]
            ]
        raise ValueError(f"unknown ablation grid {grid!r}; expected one of {GRIDS}")

    def run_ablation_grid(self, grid: str, clips: Optional[Sequence[int]] = None, seeds: Optional[Sequence[int]] = None) -> ResultTable:
        """
        One row per (cell, clip, seed).  A failing cell is recorded with
        :func:`report_error` and the grid carries on.
        """
        cells = self.ablation_cells(grid)
        ablation = self.config["ablation"]
        if clips is None:
            clips = ablation["clips"] if ablation["clips"] is not None else range(len(self.clips()))
        seeds = list(seeds if seeds is not None else ablation["seeds"])
        table = ResultTable()
        self.log_message(f"Ablation '{grid}': {len(cells)} cells x {len(list(clips))} clips x {len(seeds)} seeds")
        for label, solver_overrides, schedule_overrides in cells:
            for clip_index in clips:
                for seed in seeds:
                    run = {"label": f"{grid}/{label}/clip{clip_index}/seed{seed}", "task": self.experiment.task}
                    try:
                        _, _, row = self.run_task(
                            clip_index,
                            seed=seed,
                            label=label,
                            solver_overrides=solver_overrides,
                            schedule_overrides=schedule_overrides,
                            run_dir=self.out_dir / "ablation" / grid / label.replace(" ", "_") / f"clip{clip_index:03d}_seed{seed}",
                        )
                        table.append(row)
                    except (RestorationError, ValueError) as e:
                        report_error("CELL_FAILED", run, e)
                        self.log_message(f"Cell {run['label']} failed: {e}", level="ERROR")
        table.to_csv(self.out_dir / "reports" / f"ablation_{grid}.csv")
        self.write_events()
        return table

    def score(self, restored_dir: str, reference_dir: str) -> MetricReport:
        restored = ingest_clip(restored_dir)
        reference = ingest_clip(reference_dir)
        if restored.shape != reference.shape:
            raise RestorationError(f"restored clip {tuple(restored.shape)} and reference {tuple(reference.shape)} differ in shape")
        flow_config = self.flow_config()
        flows, masks = metric_flows(reference, flow_config.build(), flow_config.tol_abs, flow_config.tol_rel)
        return score_clip(
            restored,
            reference,
            flows,
            masks,
            extractor=self.perceptual_extractor(reference.shape[1]),
            ssim_window=int(self.config["metrics"]["ssim_window"]),
        )

    def plot(self, run_dir: str) -> List[Path]:
        return emit_plots(run_dir)

    def write_events(self) -> Path:
        path = self.out_dir / "reports" / "events.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(EVENTS, f, indent=2, default=str)
        return path
