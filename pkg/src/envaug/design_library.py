"""Robot design library: configurations, behaviours and behaviour lookup."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

__all__ = [
    "VERBS",
    "ENVIRONMENT_CLASSES",
    "Configuration",
    "Behavior",
    "ActionSpec",
    "BehaviorMatch",
    "NoBehavior",
    "DesignLibrary",
    "find_behavior",
    "load_design_library",
    "read_design_library",
]

VERBS = ("drive", "climb", "cross", "pickUp", "place", "push", "inspect", "attach")
ENVIRONMENT_CLASSES = ("flat", "ledge", "incline45", "structure", "object")


def _frozen_limits(limits: Optional[Mapping]) -> tuple:
    items = sorted((str(k), float(v)) for k, v in (limits or {}).items())
    return tuple(items)


@dataclass(frozen=True)
class Configuration:
    name: str
    module_count: int
    footprint: tuple

    def __post_init__(self):
        object.__setattr__(self, "footprint", tuple(float(v) for v in self.footprint))
        if self.module_count < 1:
            raise ValueError(f"configuration {self.name!r}: module_count must be >= 1")
        if len(self.footprint) != 2 or min(self.footprint) <= 0:
            raise ValueError(f"configuration {self.name!r}: footprint must be two positive lengths")


@dataclass(frozen=True)
class Behavior:
    name: str
    configuration: str
    verb: str
    environment_class: str
    limits: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "limits", _frozen_limits(dict(self.limits)))
        if self.verb not in VERBS:
            raise ValueError(f"behavior {self.name!r}: unknown verb {self.verb!r}")
        if self.environment_class not in ENVIRONMENT_CLASSES:
            raise ValueError(f"behavior {self.name!r}: unknown environment class {self.environment_class!r}")
        if any(v < 0 for _, v in self.limits):
            raise ValueError(f"behavior {self.name!r}: limits must be nonnegative")

    def limit(self, key: str, default=None):
        return dict(self.limits).get(key, default)


@dataclass(frozen=True)
class ActionSpec:
    verb: str
    environment_class: str
    required_limits: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "required_limits", _frozen_limits(dict(self.required_limits)))
        if self.verb not in VERBS:
            raise ValueError(f"unknown verb {self.verb!r}")
        if self.environment_class not in ENVIRONMENT_CLASSES:
            raise ValueError(f"unknown environment class {self.environment_class!r}")

    def requirement(self, key: str, default=None):
        return dict(self.required_limits).get(key, default)

    def to_dict(self) -> dict:
        return {
            "verb": self.verb,
            "environment_class": self.environment_class,
            "required_limits": dict(self.required_limits),
        }

    def __str__(self):
        req = ",".join(f"{k}={v:g}" for k, v in self.required_limits)
        return f"{self.verb}/{self.environment_class}" + (f"[{req}]" if req else "")


@dataclass(frozen=True)
class BehaviorMatch:
    behavior: Behavior
    configuration: Configuration
    needs_reconfiguration: bool


@dataclass(frozen=True)
class NoBehavior:
    spec: ActionSpec

    def __bool__(self):
        return False


@dataclass(frozen=True)
class DesignLibrary:
    configurations: tuple
    behaviors: tuple

    def __post_init__(self):
        object.__setattr__(self, "configurations", tuple(self.configurations))
        object.__setattr__(self, "behaviors", tuple(self.behaviors))
        names = [c.name for c in self.configurations]
        if len(set(names)) != len(names):
            raise ValueError("duplicate configuration names")
        for b in self.behaviors:
            if b.configuration not in names:
                raise ValueError(f"behavior {b.name!r} references unknown configuration {b.configuration!r}")

    def configuration(self, name: str) -> Configuration:
        for c in self.configurations:
            if c.name == name:
                return c
        raise KeyError(name)

    def behaviors_of(self, config_name: str) -> tuple:
        return tuple(b for b in self.behaviors if b.configuration == config_name)

    def with_behavior(self, behavior: Behavior) -> "DesignLibrary":
        return DesignLibrary(self.configurations, self.behaviors + (behavior,))


def _satisfies(behavior: Behavior, spec: ActionSpec) -> bool:
    if behavior.verb != spec.verb or behavior.environment_class != spec.environment_class:
        return False
    limits = dict(behavior.limits)
    for key, needed in spec.required_limits:
        if key not in limits or limits[key] + 1e-12 < needed:
            return False
    return True


def find_behavior(spec: ActionSpec, library, current_config=None):
    """Pick a behaviour for ``spec``.

    A satisfying behaviour of the current configuration wins; otherwise the
    first satisfying behaviour in library order, flagged as needing a
    reconfiguration.  Returns :class:`NoBehavior` when nothing fits.
    """
    if isinstance(library, DesignLibrary):
        behaviors, configs = library.behaviors, {c.name: c for c in library.configurations}
    else:
        behaviors, configs = tuple(library), {}
    current = getattr(current_config, "name", current_config)
    matches = [b for b in behaviors if _satisfies(b, spec)]
    if not matches:
        return NoBehavior(spec)
    own = [b for b in matches if b.configuration == current]
    chosen = own[0] if own else matches[0]
    config = configs.get(chosen.configuration) or Configuration(chosen.configuration, 1, (1.0, 1.0))
    return BehaviorMatch(chosen, config, chosen.configuration != current)


def load_design_library(text: str) -> DesignLibrary:
    doc = json.loads(text)
    configs = tuple(
        Configuration(c["name"], int(c["module_count"]), tuple(c["footprint"])) for c in doc["configurations"]
    )
    behaviors = tuple(
        Behavior(b["name"], b["configuration"], b["verb"], b["environment_class"], tuple(b.get("limits", {}).items()))
        for b in doc["behaviors"]
    )
    return DesignLibrary(configs, behaviors)


def read_design_library(path) -> DesignLibrary:
    with open(path, encoding="utf-8") as fh:
        return load_design_library(fh.read())


def drive_step_limit(library: DesignLibrary, config_name: str, default: float = 0.02) -> float:
    """Largest height change the configuration can drive over on flat ground."""
    for b in library.behaviors_of(config_name):
        if b.verb == "drive" and b.environment_class == "flat":
            return b.limit("max_step", default)
    return default


def can(library: DesignLibrary, config_name: str, verb: str, environment_class: str) -> bool:
    return any(b.verb == verb and b.environment_class == environment_class for b in library.behaviors_of(config_name))


def distance(a: Sequence[float], b: Sequence[float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])
