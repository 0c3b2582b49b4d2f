"""
CSV outputs of restoration runs: result tables and per-iteration traces.

:class:`ResultTable` mirrors the layout of a benchmark table: one row per
(dataset, method or ablation label, clip, seed) with PSNR, SSIM, the
optional perceptual distance and the warping error in units of 10⁻².
Rows are append-only and validated against the fixed column schema;
a metric that was not computed is written as ``n/a``, never as zero.

Usage example::

    from src.utils.reports import ResultRow, ResultTable

    table = ResultTable()
    table.append(ResultRow(dataset="synthetic", label="Base with both", psnr=27.4, ssim=0.81, we_e2=0.72))
    table.to_csv("reports/results.csv")

This will produce::

    dataset,label,clip,seed,psnr,ssim,lpips_like,we_e2,seconds
    synthetic,Base with both,n/a,n/a,27.4,0.81,n/a,0.72,n/a

"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from src.utils.checkpoints import PathLike

MISSING = "n/a"
METRIC_COLUMNS = ("psnr", "ssim", "lpips_like", "we_e2")


@dataclass(frozen=True)
class ResultRow:
    dataset: str
    label: str
    clip: Optional[int] = None
    seed: Optional[int] = None
    psnr: Optional[float] = None
    ssim: Optional[float] = None
    lpips_like: Optional[float] = None
    we_e2: Optional[float] = None
    seconds: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.dataset or not self.label:
            raise ValueError("result rows need a dataset and a label")
        for name in ("clip", "seed"):
            value = getattr(self, name)
            if value is not None and not isinstance(value, int):
                raise TypeError(f"{name} must be an int or None, got {type(value).__name__}")
        for name in METRIC_COLUMNS + ("seconds",):
            value = getattr(self, name)
            if value is not None and not isinstance(value, (int, float)):
                raise TypeError(f"{name} must be a number or None, got {type(value).__name__}")


COLUMNS = tuple(f.name for f in fields(ResultRow))


def _format(value) -> str:
    if value is None:
        return MISSING
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def _parse(name: str, text: str):
    if text == MISSING:
        return None
    if name in ("dataset", "label"):
        return text
    if name in ("clip", "seed"):
        return int(text)
    return float(text)


class ResultTable:
    def __init__(self, rows: Iterable[ResultRow] = ()) -> None:
        self._rows: List[ResultRow] = []
        for row in rows:
            self.append(row)

    def append(self, row: ResultRow) -> None:
        if not isinstance(row, ResultRow):
            raise TypeError(f"only ResultRow instances can be appended, got {type(row).__name__}")
        self._rows.append(row)

    def extend(self, other: "ResultTable") -> None:
        for row in other.rows:
            self.append(row)

    @property
    def rows(self) -> Tuple[ResultRow, ...]:
        return tuple(self._rows)

    def __len__(self) -> int:
        return len(self._rows)

    def labels(self) -> List[str]:
        seen: Dict[str, None] = {}
        for row in self._rows:
            seen.setdefault(row.label, None)
        return list(seen)

    def mean_by_label(self) -> Dict[str, Dict[str, Optional[float]]]:
        """Per-label mean of every metric column over rows where it is present."""
        out: Dict[str, Dict[str, Optional[float]]] = {}
        for label in self.labels():
            rows = [r for r in self._rows if r.label == label]
            means: Dict[str, Optional[float]] = {}
            for name in METRIC_COLUMNS + ("seconds",):
                values = [getattr(r, name) for r in rows if getattr(r, name) is not None]
                means[name] = sum(values) / len(values) if values else None
            out[label] = means
        return out

    def to_csv(self, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(COLUMNS)
            for row in self._rows:
                writer.writerow([_format(v) for v in asdict(row).values()])
        return path

    @classmethod
    def from_csv(cls, path: PathLike) -> "ResultTable":
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            if tuple(reader.fieldnames or ()) != COLUMNS:
                raise ValueError(f"{path} does not have the result-table columns {COLUMNS}")
            return cls(ResultRow(**{k: _parse(k, v) for k, v in rec.items()}) for rec in reader)


def write_loss_trace(path: PathLike, losses: Sequence[float], data_losses: Sequence[float]) -> Path:
    """One row per solver iteration: ``iteration,loss,data_loss``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["iteration", "loss", "data_loss"])
        for i, (total, data) in enumerate(zip(losses, data_losses)):
            writer.writerow([i, repr(float(total)), repr(float(data))])
    return path


TRACE_COLUMNS = ("iteration", "psnr", "we", "flow_diff", "loss")


def write_metric_trace(path: PathLike, trace: Sequence[Mapping[str, float]], transition: int) -> Path:
    """Metric-evolution samples; the first line records the warping transition."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(f"# transition={transition}\n")
        writer = csv.writer(f)
        writer.writerow(TRACE_COLUMNS)
        for rec in trace:
            writer.writerow([_format(rec.get(k)) for k in TRACE_COLUMNS])
    return path


def read_metric_trace(path: PathLike) -> Tuple[List[Dict[str, Optional[float]]], Optional[int]]:
    """
    :return: The samples and the transition iteration (``None`` if unrecorded).
    """
    transition = None
    with open(path, newline="", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if lines and lines[0].startswith("# transition="):
        transition = int(lines[0].split("=", 1)[1])
        lines = lines[1:]
    records = []
    for rec in csv.DictReader(lines):
        records.append({k: (None if v == MISSING else float(v)) for k, v in rec.items()})
    return records, transition
