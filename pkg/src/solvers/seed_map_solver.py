"""
MAP restoration by projected gradient descent in seed space.

One outer iteration:

1. reconstruct every frame from the current seed decomposition
   (a single evaluation of R, whatever the number of frames);
2. once past ``transition``, every ``flow_period`` iterations re-estimate
   forward/backward flows on the detached reconstruction, EMA-smooth
   them and recompute the occlusion masks;
3. data loss plus, when warping is active, the weighted warping loss;
4. backpropagate, take an Adam step (separate rates for the seed and
   the residual factors) and project every residual back into its ball.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Tuple

import torch
import torch.nn.functional as F
from tqdm import tqdm

from src.codecs.codec import Codec, decode_full, decode_with_residual, to_pixel_range
from src.degradations.operators import DegradationOperator
from src.degradations.tasks import MSE_ONLY_TASKS
from src.diffusion.sampler import reverse_process
from src.diffusion.schedule import NoiseSchedule
from src.diffusion.score_network import ScoreNetwork
from src.flow.estimators import FlowConfig, FlowEstimator, estimate_clip_flows
from src.flow.warping import ema_update, masked_mse, occlusion_mask, warping_loss
from src.metrics.perceptual import perceptual_distance
from src.metrics.quality import metric_flows, psnr, warping_error
from src.solvers.decomposition import (
    SeedDecomposition,
    SolverConfig,
    init_decomposition,
    project_residual,
    residual_shape,
)
from src.utils.checkpoints import PathLike, load_archive, save_archive
from src.utils.errors import NonFiniteError, ShapeMismatchError

logger = logging.getLogger(__name__)


@dataclass
class SolverState:
    decomposition: SeedDecomposition
    optimizer: torch.optim.Optimizer
    iteration: int = 0
    loss_history: List[float] = field(default_factory=list)
    data_history: List[float] = field(default_factory=list)
    ema_flows: Optional[torch.Tensor] = None
    ema_backward: Optional[torch.Tensor] = None
    masks: Optional[torch.Tensor] = None
    reverse_calls: int = 0
    flow_estimations: int = 0
    reverse_seconds: List[float] = field(default_factory=list)
    trace: List[Dict[str, float]] = field(default_factory=list)


class LossTerms(NamedTuple):
    total: torch.Tensor
    data: torch.Tensor
    warp: torch.Tensor


def _make_optimizer(decomposition: SeedDecomposition, config: SolverConfig) -> torch.optim.Optimizer:
    groups: List[Dict[str, Any]] = [{"params": decomposition.seed_parameters(), "lr": config.lr_seed}]
    if decomposition.shared:
        groups.append({"params": decomposition.residual_parameters(), "lr": config.lr_resid})
    return torch.optim.Adam(groups)


def init_state(
    n_frames: int,
    latent_shape: Tuple[int, int, int],
    codec: Codec,
    config: SolverConfig,
    rng_seed: Optional[int] = None,
    dtype: torch.dtype = torch.float32,
) -> SolverState:
    """Fresh state; ``rng_seed`` defaults to ``config.rng_seed``."""
    seed = config.rng_seed if rng_seed is None else rng_seed
    resid = residual_shape(codec, latent_shape, config.residual_site)
    decomposition = init_decomposition(n_frames, latent_shape, resid, config, seed, dtype)
    return SolverState(decomposition, _make_optimizer(decomposition, config))


def _timed_reverse(state: SolverState, z: torch.Tensor, net: ScoreNetwork, sched: NoiseSchedule, checkpointing: bool) -> torch.Tensor:
    start = time.perf_counter()
    out = reverse_process(z, net, sched, gradient_checkpointing=checkpointing)
    state.reverse_seconds.append(time.perf_counter() - start)
    state.reverse_calls += 1
    return out


def reconstruct_frames(
    state: SolverState,
    net: ScoreNetwork,
    sched: NoiseSchedule,
    codec: Codec,
    gradient_checkpointing: bool = False,
) -> torch.Tensor:
    """
    Current reconstruction ``(N, C, H, W)``, unclamped and differentiable.

    R is evaluated exactly once per call: on the shared seed, or on the
    batch of per-frame seeds for the ``seed`` site and independent seeds.
    """
    dec = state.decomposition
    if not dec.shared:
        return decode_full(_timed_reverse(state, dec.z_shared, net, sched, gradient_checkpointing), codec)
    r = dec.residuals()
    if dec.site == "seed":
        seeds = dec.z_shared.unsqueeze(0) + r
        return decode_full(_timed_reverse(state, seeds, net, sched, gradient_checkpointing), codec)
    latent = _timed_reverse(state, dec.z_shared, net, sched, gradient_checkpointing)
    if dec.site == "latent":
        if r.shape[-3:] != latent.shape[-3:]:
            raise ShapeMismatchError(f"residual shape {tuple(r.shape[-3:])} != latent shape {tuple(latent.shape[-3:])}")
        return decode_full(latent.unsqueeze(0) + r, codec)
    return decode_with_residual(latent, r, codec)


def data_loss(
    recon: torch.Tensor,
    Y: torch.Tensor,
    op: DegradationOperator,
    config: SolverConfig,
    task: Optional[str] = None,
    perceptual: Optional[torch.nn.Module] = None,
) -> torch.Tensor:
    """
    MSE(Y, A(recon)), plus ``perceptual_weight`` times the perceptual
    distance when an extractor is given and the task is not MSE-only.

    :raises ShapeMismatchError: if A(recon) and Y differ in shape.
    """
    degraded = op(recon)
    if degraded.shape != Y.shape:
        raise ShapeMismatchError(f"A(recon) has shape {tuple(degraded.shape)}, measurement has {tuple(Y.shape)}")
    loss = F.mse_loss(degraded, Y)
    if perceptual is not None and config.perceptual_weight > 0 and task not in MSE_ONLY_TASKS:
        loss = loss + config.perceptual_weight * perceptual_distance(Y, degraded, perceptual)
    return loss


def warping_active(config: SolverConfig, epoch: int, n_frames: int) -> bool:
    return config.use_warping and n_frames >= 2 and epoch >= config.transition


def total_loss(
    recon: torch.Tensor,
    Y: torch.Tensor,
    op: DegradationOperator,
    flows: Optional[torch.Tensor],
    masks: Optional[torch.Tensor],
    config: SolverConfig,
    epoch: int,
    task: Optional[str] = None,
    perceptual: Optional[torch.nn.Module] = None,
) -> LossTerms:
    """
    Data loss, plus ``warp_weight`` times the warping loss once warping is
    active at ``epoch``.

    :raises ValueError: if warping is active but flows or masks are missing.
    """
    data = data_loss(recon, Y, op, config, task, perceptual)
    warp = data.new_zeros(())
    if warping_active(config, epoch, recon.shape[0]):
        if flows is None or masks is None:
            raise ValueError(f"warping is active at epoch {epoch} but no flows/masks were supplied")
        loss_fn = masked_mse
        if config.warp_perceptual and perceptual is not None:
            def loss_fn(a, b, m):
                return masked_mse(a, b, m) + config.perceptual_weight * perceptual_distance(a, b, perceptual)
        warp = warping_loss(recon, flows, masks, loss_fn)
    return LossTerms(data + config.warp_weight * warp, data, warp)


def pgd_step(state: SolverState, config: SolverConfig) -> SolverState:
    """
    Adam step on the gradients already accumulated in the parameters,
    then projection of every residual onto its ball.

    :raises NonFiniteError: if any gradient contains NaN or infinity.
    """
    dec = state.decomposition
    for p in dec.parameters():
        if p.grad is not None and not bool(torch.isfinite(p.grad).all()):
            raise NonFiniteError(f"non-finite gradient at iteration {state.iteration} (parameter shape {tuple(p.shape)})")
    state.optimizer.step()
    if dec.shared:
        with torch.no_grad():
            a, b = project_residual(dec.A, dec.B, dec.radius, config.always_rescale)
            dec.A.copy_(a)
            dec.B.copy_(b)
    state.iteration += 1
    return state


def refresh_flows(state: SolverState, recon: torch.Tensor, estimator: FlowEstimator, config: SolverConfig, flow_config: FlowConfig) -> None:
    """Re-estimate flows on the detached reconstruction, EMA-smooth them and recompute masks."""
    fwd, bwd = estimate_clip_flows(to_pixel_range(recon.detach()), estimator, flow_config.workers)
    state.flow_estimations += 1
    state.ema_flows = ema_update(state.ema_flows, fwd, config.ema_beta)
    state.ema_backward = ema_update(state.ema_backward, bwd, config.ema_beta)
    state.masks = occlusion_mask(state.ema_flows, state.ema_backward, flow_config.tol_abs, flow_config.tol_rel)
    logger.debug(
        "iteration %d: flows refreshed (%d), %.1f%% pixels valid",
        state.iteration,
        state.flow_estimations,
        100.0 * float(state.masks.mean()),
    )


def _record_trace(
    state: SolverState,
    recon: torch.Tensor,
    ground_truth: torch.Tensor,
    reference_flows: Tuple[torch.Tensor, torch.Tensor],
    true_flows: torch.Tensor,
    loss: float,
) -> None:
    clip = to_pixel_range(recon.detach())
    _, mean_psnr = psnr(clip, ground_truth)
    we = warping_error(clip, *reference_flows)
    flow_diff = math.nan
    if state.ema_flows is not None:
        flow_diff = float((state.ema_flows.double() - true_flows.double()).pow(2).sum(dim=1).sqrt().mean())
    state.trace.append({"iteration": state.iteration, "psnr": mean_psnr, "we": we.raw, "flow_diff": flow_diff, "loss": loss})


def solve(
    Y: torch.Tensor,
    op: DegradationOperator,
    net: ScoreNetwork,
    sched: NoiseSchedule,
    codec: Codec,
    flow_estimator: FlowEstimator,
    config: SolverConfig,
    *,
    flow_config: FlowConfig = FlowConfig(),
    task: Optional[str] = None,
    perceptual: Optional[torch.nn.Module] = None,
    state: Optional[SolverState] = None,
    ground_truth: Optional[torch.Tensor] = None,
    gt_flows: Optional[torch.Tensor] = None,
    trace_every: int = 0,
) -> Tuple[torch.Tensor, SolverState]:
    """
    Run the optimization from ``state`` (fresh when omitted) up to
    ``config.epochs`` iterations.

    With ``ground_truth`` and ``trace_every > 0`` the PSNR, the warping
    error (reference flows estimated once on the ground truth) and the
    mean endpoint distance between the EMA flows and ``gt_flows`` (or the
    reference flows) are recorded into ``state.trace``.

    :return: The clamped final reconstruction and the final state.
    :raises NonFiniteError: if the loss becomes non-finite.
    """
    param = next(net.parameters(), None)
    dtype = param.dtype if param is not None else Y.dtype
    pixel_shape = op.input_shape(tuple(Y.shape))
    n_frames = pixel_shape[0]
    latent_shape = codec.latent_shape(tuple(pixel_shape[1:]))
    if state is None:
        state = init_state(n_frames, latent_shape, codec, config, dtype=dtype)
    elif state.decomposition.n_frames != n_frames:
        raise ShapeMismatchError(f"state holds {state.decomposition.n_frames} frames, measurement implies {n_frames}")
    Y = Y.to(dtype)

    tracing = ground_truth is not None and trace_every > 0
    if tracing:
        ground_truth = ground_truth.to(dtype)
        reference = metric_flows(ground_truth, flow_estimator, flow_config.tol_abs, flow_config.tol_rel)
        true_flows = gt_flows if gt_flows is not None else reference[0]

    start = state.iteration
    logger.info(
        "Solving %d frames for %d iterations (warping from %d, site %s, noise prior %s)",
        n_frames,
        config.epochs - start,
        config.transition,
        state.decomposition.site,
        config.noise_prior,
    )
    for epoch in tqdm(range(start, config.epochs), desc="solve", disable=not config.progress, leave=False):
        recon = reconstruct_frames(state, net, sched, codec, config.gradient_checkpointing)
        flows = masks = None
        if warping_active(config, epoch, n_frames):
            if (epoch - config.transition) % config.flow_period == 0 or state.ema_flows is None:
                refresh_flows(state, recon, flow_estimator, config, flow_config)
            flows, masks = state.ema_flows, state.masks
        terms = total_loss(recon, Y, op, flows, masks, config, epoch, task, perceptual)
        if not bool(torch.isfinite(terms.total)):
            raise NonFiniteError(f"loss became non-finite at iteration {epoch}")
        state.optimizer.zero_grad(set_to_none=True)
        terms.total.backward()
        pgd_step(state, config)
        state.loss_history.append(float(terms.total))
        state.data_history.append(float(terms.data))
        if tracing and (epoch % trace_every == 0 or epoch == config.epochs - 1):
            _record_trace(state, recon, ground_truth, reference, true_flows, float(terms.total))
        if epoch % 100 == 0:
            logger.debug("iteration %d: loss %.6f (data %.6f, warp %.6f)", epoch, float(terms.total), float(terms.data), float(terms.warp))

    with torch.no_grad():
        final = to_pixel_range(reconstruct_frames(state, net, sched, codec))
    if state.data_history:
        logger.info("Finished at iteration %d, data loss %.6f -> %.6f", state.iteration, state.data_history[0], state.data_history[-1])
    return final, state


def save_state(state: SolverState, path: PathLike, config: Optional[SolverConfig] = None) -> Path:
    """
    Persist decomposition, Adam moments, EMA flows, counters and histories.

    :return: The archive path; its SHA-256 is in the sidecar.
    """
    dec = state.decomposition
    tensors: Dict[str, torch.Tensor] = {"z_shared": dec.z_shared}
    if dec.shared:
        tensors["A"] = dec.A
        tensors["B"] = dec.B
    for key in ("ema_flows", "ema_backward", "masks"):
        value = getattr(state, key)
        if value is not None:
            tensors[key] = value
    params = dec.parameters()
    for i, p in enumerate(params):
        for name, value in state.optimizer.state.get(p, {}).items():
            if isinstance(value, torch.Tensor):
                tensors[f"adam/{i}/{name}"] = value
    metadata = {
        "kind": "solver_state",
        "iteration": state.iteration,
        "loss_history": state.loss_history,
        "data_history": state.data_history,
        "reverse_calls": state.reverse_calls,
        "flow_estimations": state.flow_estimations,
        "reverse_seconds": state.reverse_seconds,
        "trace": state.trace,
        "radius": dec.radius,
        "k_rank": dec.k_rank,
        "site": dec.site,
        "shared": dec.shared,
        "config": config.to_dict() if config is not None else None,
    }
    save_archive(path, tensors, metadata)
    return Path(path)


def load_state(path: PathLike, config: SolverConfig) -> SolverState:
    """Rebuild a :class:`SolverState` written by :func:`save_state`."""
    tensors, meta = load_archive(path)
    z = tensors["z_shared"].clone().requires_grad_(True)
    a = b = None
    if meta["shared"]:
        a = tensors["A"].clone().requires_grad_(True)
        b = tensors["B"].clone().requires_grad_(True)
    dec = SeedDecomposition(z, a, b, float(meta["radius"]), int(meta["k_rank"]), meta["site"])
    optimizer = _make_optimizer(dec, config)
    saved = optimizer.state_dict()
    moments: Dict[int, Dict[str, torch.Tensor]] = {}
    for key, value in tensors.items():
        if key.startswith("adam/"):
            _, index, name = key.split("/")
            moments.setdefault(int(index), {})[name] = value
    saved["state"] = moments
    optimizer.load_state_dict(saved)
    return SolverState(
        decomposition=dec,
        optimizer=optimizer,
        iteration=int(meta["iteration"]),
        loss_history=list(meta["loss_history"]),
        data_history=list(meta["data_history"]),
        ema_flows=tensors.get("ema_flows"),
        ema_backward=tensors.get("ema_backward"),
        masks=tensors.get("masks"),
        reverse_calls=int(meta["reverse_calls"]),
        flow_estimations=int(meta["flow_estimations"]),
        reverse_seconds=list(meta["reverse_seconds"]),
        trace=list(meta["trace"]),
    )
