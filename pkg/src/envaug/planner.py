"""Mission planning: task specs, controller synthesis and controller execution.

A task is an ordered list of goals.  Each goal names an action (verb,
environment class, required limits), a target declared by the scenario and
optional guard propositions.  Synthesis lays the goals out one after another:

* guards become an ``explore`` state that loops until they all hold;
* a goal some library behaviour can perform becomes a single action state;
* a goal nothing can perform becomes the augmentation chain
  ``characterize -> selectStructure -> <assembly plan> -> traverse``, with
  a ``reportInfeasible`` exit for the "no feature" and "no structure" cases.

Proposition vocabulary
----------------------
``actionComplete``      the current action finished this step
``featureAvailable``    the last characterization found at least one feature
``selected:<name>``     the last structure selection picked ``<name>``
``visible:<target>``    ``<target>`` has been observed
``open:<target>``       ``<target>`` has been opened (pushed)
``reachable:<target>``  the target cell can be reached without augmentation
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

from .characterizer import CharacterizationResult
from .controller import ACTION_COMPLETE, Action, Controller, ControllerBuilder, ExecutionError
from .design_library import ActionSpec, DesignLibrary, find_behavior
from .elevation_map import ElevationMap, Segmentation
from .structures import MODULE_SIZE, Infeasible, Structure, assembly_plan_for, select_structure

__all__ = [
    "Goal",
    "TaskSpec",
    "SensedEnv",
    "SynthesisError",
    "AugmentationDecision",
    "FEATURE_AVAILABLE",
    "load_task",
    "read_task",
    "candidate_structures",
    "synthesize",
    "execute_step",
    "decide_augmentation",
]

FEATURE_AVAILABLE = "featureAvailable"
_PROP_PREFIXES = ("visible:", "open:", "reachable:", "selected:")


class SynthesisError(ValueError):
    pass


@dataclass(frozen=True)
class Goal:
    action: ActionSpec
    target: str
    guards: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "guards", tuple(self.guards))
        for g in self.guards:
            if g != FEATURE_AVAILABLE and not g.startswith(_PROP_PREFIXES):
                raise SynthesisError(f"unknown guard proposition {g!r}")

    def to_dict(self) -> dict:
        d = self.action.to_dict()
        d["target"] = self.target
        d["guards"] = list(self.guards)
        return d


@dataclass(frozen=True)
class TaskSpec:
    goals: tuple

    def __post_init__(self):
        object.__setattr__(self, "goals", tuple(self.goals))
        if not self.goals:
            raise SynthesisError("a task needs at least one goal")

    def targets(self) -> set:
        names = {g.target for g in self.goals}
        for g in self.goals:
            for p in g.guards:
                if ":" in p and not p.startswith("selected:"):
                    names.add(p.split(":", 1)[1])
        return names


def load_task(text: str) -> TaskSpec:
    doc = json.loads(text)
    goals = doc["goals"] if isinstance(doc, dict) else doc
    out = []
    for g in goals:
        spec = ActionSpec(g["verb"], g["environment_class"], tuple(g.get("required_limits", {}).items()))
        out.append(Goal(spec, g["target"], tuple(g.get("guards", ()))))
    return TaskSpec(tuple(out))


def read_task(path) -> TaskSpec:
    with open(path, encoding="utf-8") as fh:
        return load_task(fh.read())


@dataclass
class SensedEnv:
    """Proposition valuation plus the latest characterization."""

    valuation: dict = field(default_factory=dict)
    characterization: Optional[CharacterizationResult] = None

    def __getitem__(self, key):
        return self.valuation[key]

    def __contains__(self, key):
        return key in self.valuation


# ---------------------------------------------------------------------------
# synthesis


def candidate_structures(spec: ActionSpec, structures: Sequence[Structure]) -> tuple:
    """Structures that would make ``spec``'s obstacle traversable."""
    if spec.verb == "climb" and spec.environment_class == "ledge":
        h = spec.requirement("max_ledge_height")
        return tuple(
            s for s in structures if s.kind == "ramp" and (h is None or abs(s.height - h) <= 1e-9)
        )
    if spec.verb == "cross" and spec.environment_class == "flat":
        w = spec.requirement("max_gap_width")
        return tuple(
            s
            for s in structures
            if s.kind == "bridge" and (w is None or s.deck_length + 1e-9 >= w + MODULE_SIZE)
        )
    return ()


def _splice(b: ControllerBuilder, plan: Controller, exit_id: int) -> int:
    """Copy ``plan`` into ``b``; its ``done`` state is replaced by ``exit_id``."""
    mapping = {}
    for s in plan.states:
        if s.action.name == "done":
            mapping[s.id] = exit_id
        else:
            mapping[s.id] = b.add(s.action)
    for t in plan.transitions:
        if plan.states[t.source].action.name == "done":
            continue
        b.edge(mapping[t.source], t.guard, mapping[t.target])
    return mapping[plan.initial]


def synthesize(
    spec: TaskSpec,
    library: DesignLibrary,
    structures: Sequence[Structure] = (),
    targets: Optional[Sequence[str]] = None,
) -> Controller:
    """Build a deterministic controller attempting ``spec``'s goals in order."""
    if targets is not None:
        missing = sorted(spec.targets() - set(targets))
        if missing:
            raise SynthesisError(f"undeclared targets: {', '.join(missing)}")
    b = ControllerBuilder()
    pending = []  # (goal index, state) pairs that continue with the next goal
    entries = []
    infeasible = []

    def report_infeasible() -> int:
        if not infeasible:
            infeasible.append(b.add(Action("reportInfeasible")))
        return infeasible[0]

    # edges into the next goal are added once every goal has an entry state
    for gi, goal in enumerate(spec.goals):
        entry = None
        if goal.guards:
            entry = b.add(Action("explore", target=goal.target))
        match = find_behavior(goal.action, library, None)
        if match:
            act = b.add(Action(goal.action.verb, goal.action, target=goal.target))
            pending.append((gi, act))
            body = act
        else:
            cands = candidate_structures(goal.action, structures)
            templates = []
            for s in cands:
                if s.template.name not in templates:
                    templates.append(s.template.name)
            ch = b.add(Action("characterize", goal.action, target=goal.target, options=tuple(templates)))
            sel = b.add(
                Action("selectStructure", goal.action, target=goal.target, options=tuple(s.name for s in cands))
            )
            body = ch
            branches = []
            for s in cands:
                trav = b.add(Action(s.traversal.verb, s.traversal, target=goal.target, structure=s.name))
                first = _splice(b, assembly_plan_for(s), trav)
                pending.append((gi, trav))
                branches.append((f"selected:{s.name}", True, first))
            b.branch(ch, [(FEATURE_AVAILABLE, True, sel)], report_infeasible())
            b.branch(sel, branches, report_infeasible())
        if entry is not None:
            b.when_all(entry, goal.guards, body, entry)
        else:
            entry = body
        entries.append(entry)
    done = b.add(Action("done"))
    for gi, source in pending:
        nxt = entries[gi + 1] if gi + 1 < len(entries) else done
        b.until_complete(source, nxt)
    # a goal with no behaviour and no candidate structure cuts off everything after it
    ctrl = b.build(entries[0]).pruned()
    if ctrl.initial != 0:
        raise SynthesisError("internal: first goal must own state 0")
    ctrl.validate()
    return ctrl


# ---------------------------------------------------------------------------
# execution


def execute_step(controller: Controller, current: int, env) -> tuple:
    """Follow the one enabled transition; returns ``(next_state, next_action)``.

    ``env`` is a :class:`SensedEnv` or a plain mapping of propositions.
    """
    valuation = env.valuation if isinstance(env, SensedEnv) else env
    nxt = controller.step(current, valuation)
    return nxt, controller.state(nxt).action


@dataclass(frozen=True)
class AugmentationDecision:
    structure: Structure
    selection: object
    controller: Controller
    region_pair: tuple


def decide_augmentation(
    env: SensedEnv,
    inventory,
    robot,
    goal: tuple,
    structures: Sequence[Structure],
    *,
    elevation_map: ElevationMap,
    segmentation: Segmentation,
):
    """Pick a structure for the sensed features; ``Infeasible`` when none works."""
    features = env.characterization.features if env.characterization is not None else ()
    sel = select_structure(
        features,
        inventory,
        robot,
        goal,
        structures,
        elevation_map=elevation_map,
        segmentation=segmentation,
    )
    if isinstance(sel, Infeasible):
        return sel
    plan = assembly_plan_for(sel.structure, inventory, sel.feature)
    return AugmentationDecision(sel.structure, sel, plan, sel.feature.region_pair)


def valuation_for(controller: Controller, state: int, facts: Mapping[str, bool]) -> dict:
    """Restrict ``facts`` to the propositions ``state`` reads, failing loudly on gaps."""
    out = {}
    for p in controller.propositions(state):
        if p not in facts:
            raise ExecutionError(f"missing proposition {p!r}")
        out[p] = bool(facts[p])
    return out


def is_proposition(name: str) -> bool:
    return name in (ACTION_COMPLETE, FEATURE_AVAILABLE) or name.startswith(_PROP_PREFIXES)
