"""
Metric-evolution plots of a restore run.

Reads ``metric_trace.csv`` from a run directory and draws PSNR, warping
error and (when any sample has one) the flow difference against the
iteration, each panel with a vertical marker where warping starts.  The
plotted numbers are also written to ``evolution_data.csv``.
"""

from __future__ import annotations

import csv
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from src.utils.checkpoints import PathLike  # noqa: E402
from src.utils.errors import RestorationError  # noqa: E402
from src.utils.reports import TRACE_COLUMNS, read_metric_trace  # noqa: E402

logger = logging.getLogger(__name__)

TRACE_FILE = "metric_trace.csv"
PANELS = (("psnr", "PSNR (dB)"), ("we", "WE"), ("flow_diff", "flow difference (px)"))


def plot_trace(records: Sequence[Dict[str, Optional[float]]], transition: Optional[int], out_dir: PathLike) -> List[Path]:
    """
    :raises RestorationError: for an empty trace.
    """
    if not records:
        raise RestorationError("metric trace is empty; nothing to plot")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    iterations = [r["iteration"] for r in records]

    def usable(key: str) -> bool:
        return any(r.get(key) is not None and math.isfinite(r[key]) for r in records)

    panels = [(k, title) for k, title in PANELS if usable(k)]
    fig, axes = plt.subplots(1, max(len(panels), 1), figsize=(4 * max(len(panels), 1), 3.2), squeeze=False)
    for ax, (key, title) in zip(axes[0], panels):
        values = [math.nan if r.get(key) is None else r[key] for r in records]
        ax.plot(iterations, values, marker="o", markersize=2)
        if transition is not None:
            ax.axvline(transition, color="tab:red", linestyle="--", linewidth=1)
        ax.set_xlabel("iteration")
        ax.set_title(title)
    fig.tight_layout()
    figure = out_dir / "evolution.png"
    fig.savefig(figure, dpi=120, bbox_inches="tight")
    plt.close(fig)

    data = out_dir / "evolution_data.csv"
    with open(data, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_COLUMNS)
        for r in records:
            writer.writerow(["n/a" if r.get(k) is None else repr(float(r[k])) for k in TRACE_COLUMNS])
    logger.info("Wrote %s and %s", figure, data)
    return [figure, data]


def emit_plots(run_dir: PathLike) -> List[Path]:
    """
    :raises RestorationError: if the run has no metric trace, or it is empty.
    """
    run_dir = Path(run_dir)
    trace = run_dir / TRACE_FILE
    if not trace.is_file():
        raise RestorationError(f"{run_dir} has no {TRACE_FILE}; run restore with tracing enabled")
    records, transition = read_metric_trace(trace)
    return plot_trace(records, transition, run_dir)
