"""
Error reporting utilities for seed-space video restoration runs.

This module provides two things.  First, a simple mechanism for
recording structured events while experiments run.  Each event is
associated with a unique code (e.g., ``CELL_FAILED``, ``RESTORED``) and
includes the label of the run that produced it, along with any relevant
exception information.  Successful steps can also be logged using
:func:`report_ok`.

All events are stored in the global ``EVENTS`` dictionary, keyed by run
label.  This allows an ablation grid to keep going when a single cell
fails and to produce a summary at the end detailing which cells
succeeded, which failed, and why.

Second, the exception hierarchy raised by the numerical layers.  Every
exception derives from :class:`RestorationError` so the CLI can catch a
single type and turn it into a non-zero exit status.

Usage example::

    from src.utils.errors import report_error, report_ok, EVENTS

    run = {"label": "sr4/base/seed0", "task": "sr4"}
    try:
        # ... solve ...
        report_ok("RESTORED", run, {"psnr": 27.1})
    except RestorationError as e:
        report_error("CELL_FAILED", run, e)

    for label, entries in EVENTS.items():
        print(f"Run: {label}")
        for entry in entries:
            print(f"  - {entry['status']}: {entry['code']}")

"""

from __future__ import annotations

from typing import Any, Dict, List, Optional

# Global dictionary of events keyed by run label.
# Each value is a list so a run can carry several events.
EVENTS: Dict[str, List[Dict[str, Any]]] = {}


class RestorationError(Exception):
    """Base class for every failure raised by the restoration package."""


class ShapeMismatchError(RestorationError, ValueError):
    """Two tensors that must agree in shape do not."""


class ScheduleError(RestorationError, ValueError):
    """A noise schedule was requested with invalid parameters."""


class NonFiniteError(RestorationError, FloatingPointError):
    """A loss, gradient or flow contains NaN or infinity."""


class OperatorError(RestorationError, ValueError):
    """A degradation operator was built or chained incorrectly."""


class PluginError(RestorationError, KeyError):
    """A named plug-in (flow estimator, perceptual extractor) is missing."""


class IngestError(RestorationError):
    """Frames could not be read, or fewer frames than requested exist."""


def _label(run: Dict[str, Any]) -> str:
    return str(run.get("label") or run.get("task") or "unknown-run")


def report_error(code: str, run: Dict[str, Any], error: Optional[BaseException] = None) -> None:
    """
    Record a failed step for a specific run.

    :param code: A unique, uppercase string identifying the error type.
    :param run: Dictionary describing the run (``label`` is used as key).
    :param error: The exception that was raised, if any.
    """
    label = _label(run)
    err_obj: Dict[str, Any] = {
        "status": "error",
        "code": code,
        "run": dict(run),
    }
    if error is not None:
        err_obj["error"] = f"{type(error).__name__}: {error}"
    EVENTS.setdefault(label, []).append(err_obj)


def report_ok(code: str, run: Dict[str, Any], data: Optional[Dict[str, Any]] = None) -> None:
    """
    Record a successful step for a specific run.

    :param code: A unique, uppercase string identifying the success type.
    :param run: Dictionary describing the run (``label`` is used as key).
    :param data: Optional dictionary of supplemental data (e.g., metrics).
    """
    ok_obj: Dict[str, Any] = {
        "status": "ok",
        "code": code,
        "run": dict(run),
    }
    if data:
        ok_obj.update(data)
    EVENTS.setdefault(_label(run), []).append(ok_obj)


def failed_runs() -> List[str]:
    """Labels of runs whose latest event is an error."""
    return [label for label, entries in EVENTS.items() if entries and entries[-1]["status"] == "error"]


def clear_events() -> None:
    EVENTS.clear()
