"""
Typed views over sections of the JSON configuration.

Each section of ``config/restoration_config.json`` is turned into a small
``@dataclass`` that validates itself in ``__post_init__``.  The dataclasses
inherit :class:`ConfigSection` to get a strict ``from_dict`` (unknown
keys are rejected so typos do not silently fall back to defaults) and a
``to_dict`` used when a run directory records the configuration it used.
"""

from __future__ import annotations

import dataclasses
from typing import Any, Dict, Mapping, Optional, Type, TypeVar

T = TypeVar("T", bound="ConfigSection")


class ConfigSection:
    @classmethod
    def from_dict(cls: Type[T], data: Optional[Mapping[str, Any]] = None, **overrides: Any) -> T:
        values: Dict[str, Any] = dict(data or {})
        values.update(overrides)
        known = {f.name for f in dataclasses.fields(cls) if f.init}  # type: ignore[arg-type]
        unknown = sorted(set(values) - known)
        if unknown:
            raise ValueError(f"Unknown {cls.__name__} keys: {', '.join(unknown)}")
        return cls(**values)  # type: ignore[call-arg]

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)  # type: ignore[call-overload]

    def replace(self: T, **changes: Any) -> T:
        return dataclasses.replace(self, **changes)  # type: ignore[type-var]
