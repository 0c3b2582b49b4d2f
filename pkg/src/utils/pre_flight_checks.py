"""
Validation of an experiment configuration before any compute is spent.
"""

import logging
import os
from pathlib import Path

from src.codecs.codec import CodecConfig
from src.degradations.tasks import TASKS, DegradationConfig
from src.flow.estimators import FLOW_ESTIMATORS, FlowConfig
from src.metrics.perceptual import PERCEPTUAL_EXTRACTORS
from src.solvers.decomposition import SolverConfig

logger = logging.getLogger(__name__)


class PreFlightCheckError(Exception):
    """Custom exception for pre-flight check failures."""
    pass


def _section(config: dict, name: str, cls):
    try:
        return cls.from_dict(config.get(name, {}))
    except (TypeError, ValueError) as e:
        raise PreFlightCheckError(f"Invalid '{name}' section: {e}") from e


def run_pre_flight_checks(config: dict):
    """
    Verifies that an experiment is correctly configured.

    Args:
        config: The application configuration dictionary.

    Raises:
        PreFlightCheckError: If any check fails.
    """
    logger.info("Running pre-flight checks...")
    experiment = config.get("experiment", {})
    dataset = config.get("dataset", {})

    # Check 1: task and its operator parameters
    task = experiment.get("task")
    if task not in TASKS:
        raise PreFlightCheckError(f"Unknown task {task!r}; expected one of {TASKS}.")
    degradation = _section(config, "degradation", DegradationConfig)
    solver = _section(config, "solver", SolverConfig)
    codec = _section(config, "codec", CodecConfig)
    flow = _section(config, "flow", FlowConfig)

    # Check 2: clip geometry
    n_frames = int(dataset.get("n_frames", 8))
    size = int(dataset.get("size", 64))
    if solver.use_warping and n_frames < 2:
        raise PreFlightCheckError("Warping needs clips of at least 2 frames.")
    if task == "sr4":
        if size % degradation.sr_factor:
            raise PreFlightCheckError(f"Frame size {size} is not divisible by the SR factor {degradation.sr_factor}.")
    if size % codec.downsample:
        raise PreFlightCheckError(f"Frame size {size} is not divisible by the codec downsampling {codec.downsample}.")
    if task in ("temporal_deconv", "temporal_spatial") and degradation.psf_width > 2 * n_frames - 1:
        raise PreFlightCheckError(f"Temporal PSF width {degradation.psf_width} exceeds 2N-1 = {2 * n_frames - 1}.")

    # Check 3: plug-ins
    if flow.estimator not in FLOW_ESTIMATORS:
        raise PreFlightCheckError(f"Flow estimator {flow.estimator!r} is not registered.")
    perceptual = config.get("metrics", {}).get("perceptual")
    if perceptual and perceptual not in PERCEPTUAL_EXTRACTORS:
        raise PreFlightCheckError(f"Perceptual extractor {perceptual!r} is not registered.")

    # Check 4: motion the flow oracle can follow
    max_velocity = int(dataset.get("max_velocity", 0))
    if max_velocity > flow.search:
        logger.warning("Synthetic velocity %d exceeds the flow search window %d.", max_velocity, flow.search)

    # Check 5: output directory
    out = Path(experiment.get("out_dir", "runs"))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise PreFlightCheckError(f"Cannot create output directory {out}: {e}") from e
    if not os.access(out, os.W_OK):
        raise PreFlightCheckError(f"Output directory {out} is not writable.")

    logger.info("Pre-flight checks passed successfully.")
