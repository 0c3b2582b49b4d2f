"""
Directional checks over ablation tables and the seed clustering experiment.

Each check returns a list of human-readable failure messages; an empty
list means the table shows the expected ordering.
"""

from __future__ import annotations

from typing import Dict, List, Optional

from src.utils.reports import ResultTable

STAGE_LABELS = ("Base", "Base with noise prior", "Base with warping", "Base with both")


def step_label(steps: int) -> str:
    return f"{steps} steps"


def _means(table: ResultTable, labels, failures: List[str]) -> Optional[Dict[str, Dict[str, Optional[float]]]]:
    means = table.mean_by_label()
    missing = [label for label in labels if label not in means]
    if missing:
        failures.append(f"missing ablation rows: {', '.join(missing)}")
        return None
    return means


def check_stage_ordering(table: ResultTable) -> List[str]:
    """Both components beat the base on WE and PSNR; each one alone beats it on WE."""
    failures: List[str] = []
    means = _means(table, STAGE_LABELS, failures)
    if means is None:
        return failures
    base, prior, warp, both = (means[label] for label in STAGE_LABELS)
    if not both["we_e2"] < base["we_e2"]:
        failures.append(f"WE with both components ({both['we_e2']:.4f}) is not below the base ({base['we_e2']:.4f})")
    if not both["psnr"] > base["psnr"]:
        failures.append(f"PSNR with both components ({both['psnr']:.3f}) is not above the base ({base['psnr']:.3f})")
    if not prior["we_e2"] < base["we_e2"]:
        failures.append(f"WE with the noise prior ({prior['we_e2']:.4f}) is not below the base ({base['we_e2']:.4f})")
    if not warp["we_e2"] < base["we_e2"]:
        failures.append(f"WE with warping ({warp['we_e2']:.4f}) is not below the base ({base['we_e2']:.4f})")
    return failures


def check_step_ablation(table: ResultTable, few: int = 4, many: int = 10, psnr_tol: float = 0.5, time_ratio: float = 0.5) -> List[str]:
    """``few`` reverse steps stay within ``psnr_tol`` dB of ``many`` at under ``time_ratio`` of its wall clock."""
    failures: List[str] = []
    means = _means(table, (step_label(few), step_label(many)), failures)
    if means is None:
        return failures
    a, b = means[step_label(few)], means[step_label(many)]
    if abs(a["psnr"] - b["psnr"]) > psnr_tol:
        failures.append(f"{few}-step PSNR {a['psnr']:.3f} differs from {many}-step PSNR {b['psnr']:.3f} by more than {psnr_tol} dB")
    if a["seconds"] is None or b["seconds"] is None:
        failures.append("step ablation rows carry no timings")
    elif not a["seconds"] < time_ratio * b["seconds"]:
        failures.append(f"{few}-step run took {a['seconds']:.2f}s, not below {time_ratio} x {b['seconds']:.2f}s")
    return failures


def check_seed_clustering(statistic: float, control: float, threshold: float = 0.9, control_tol: float = 0.1) -> List[str]:
    """Regressed seeds cluster by clip (``statistic < threshold``) while i.i.d. seeds do not."""
    failures: List[str] = []
    if not statistic < threshold:
        failures.append(f"seed clustering statistic {statistic:.4f} is not below {threshold}")
    if not abs(control - 1.0) <= control_tol:
        failures.append(f"i.i.d. control statistic {control:.4f} is not within {control_tol} of 1")
    return failures
