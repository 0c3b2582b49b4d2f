"""
Seed-space MAP solver: decomposition, projection, the PGD loop, seed
regression and the seed clustering statistic.
"""

from .decomposition import (
    RESIDUAL_SITES,
    SeedDecomposition,
    SolverConfig,
    init_decomposition,
    project_residual,
    residual_radius,
    residual_shape,
)
from .regression import cluster_statistic, seed_regression
from .seed_map_solver import (
    LossTerms,
    SolverState,
    data_loss,
    init_state,
    load_state,
    pgd_step,
    reconstruct_frames,
    refresh_flows,
    save_state,
    solve,
    total_loss,
)

__all__ = [
    "RESIDUAL_SITES",
    "LossTerms",
    "SeedDecomposition",
    "SolverConfig",
    "SolverState",
    "cluster_statistic",
    "data_loss",
    "init_decomposition",
    "init_state",
    "load_state",
    "pgd_step",
    "project_residual",
    "reconstruct_frames",
    "refresh_flows",
    "residual_radius",
    "residual_shape",
    "save_state",
    "seed_regression",
    "solve",
    "total_loss",
]
