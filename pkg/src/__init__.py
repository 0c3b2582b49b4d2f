"""
Top-level package for seed-space video restoration.

This package bundles all components required to restore a degraded clip
by optimizing the input noise of a diffusion model: a deterministic DDIM
sampler viewed as a differentiable map from seed to latent, a latent
codec with a split decoder, the degradation operators, optical flow and
warping, the projected-gradient solver and the evaluation metrics.
Modules are split into subpackages:

* :mod:`src.diffusion` – noise schedules, score networks, DDIM sampling
* :mod:`src.codecs` – identity and tiny-autoencoder codecs
* :mod:`src.degradations` – degradation operators and their adjoints
* :mod:`src.flow` – flow estimators, warping and occlusion masks
* :mod:`src.solvers` – the seed-space MAP solver and seed regression
* :mod:`src.metrics` – PSNR, SSIM, warping error, perceptual distance
* :mod:`src.extractors` – clip ingestion and synthetic clips
* :mod:`src.utils` – errors, checkpoints, reports, plots, checks

The intention of this separation is to make the tool composable and
testable.  Each layer has no direct knowledge of configuration or
execution strategy; orchestration is handled in the restoration_tool.
"""
