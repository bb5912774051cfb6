"""Finite-state controllers.

States carry an :class:`Action`; transitions carry a partial valuation of
boolean propositions.  A controller is deterministic when, for each state,
every complete valuation of the propositions that state mentions enables
exactly one transition.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .design_library import ActionSpec

__all__ = [
    "Action",
    "State",
    "Transition",
    "Controller",
    "ControllerBuilder",
    "ExecutionError",
    "TERMINAL_ACTIONS",
    "ACTION_COMPLETE",
]

TERMINAL_ACTIONS = ("done", "reportInfeasible")
PSEUDO_ACTIONS = ("explore", "characterize", "selectStructure") + TERMINAL_ACTIONS
ACTION_COMPLETE = "actionComplete"


class ExecutionError(RuntimeError):
    """Raised when a controller cannot take a step (missing or ambiguous input)."""


@dataclass(frozen=True)
class Action:
    name: str
    spec: Optional[ActionSpec] = None
    target: Optional[str] = None
    kind: Optional[str] = None
    slot: Optional[int] = None
    structure: Optional[str] = None
    options: tuple = ()

    @property
    def is_terminal(self) -> bool:
        return self.name in TERMINAL_ACTIONS

    @property
    def is_pseudo(self) -> bool:
        return self.name in PSEUDO_ACTIONS

    def label(self) -> str:
        args = []
        if self.kind is not None:
            args.append(self.kind)
        if self.slot is not None:
            args.append(f"slot {self.slot}")
        if self.target is not None:
            args.append(self.target)
        if self.structure is not None and self.kind is None:
            args.append(self.structure)
        if self.options:
            args.append("|".join(self.options))
        text = self.name + (f"({', '.join(args)})" if args else "")
        if self.spec is not None:
            text += f" [{self.spec}]"
        return text

    def to_dict(self) -> dict:
        out = {"name": self.name}
        if self.spec is not None:
            out["spec"] = self.spec.to_dict()
        for key in ("target", "kind", "slot", "structure"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        if self.options:
            out["options"] = list(self.options)
        return out


@dataclass(frozen=True)
class State:
    id: int
    name: str
    action: Action


@dataclass(frozen=True)
class Transition:
    source: int
    guard: tuple
    target: int

    def enabled(self, valuation: Mapping[str, bool]) -> bool:
        return all(valuation[p] == v for p, v in self.guard)

    def label(self) -> str:
        if not self.guard:
            return "true"
        return " & ".join(p if v else f"!{p}" for p, v in self.guard)


@dataclass(frozen=True)
class Controller:
    states: tuple
    transitions: tuple
    initial: int = 0
    _out: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        out = {s.id: [] for s in self.states}
        for t in self.transitions:
            out[t.source].append(t)
        object.__setattr__(self, "_out", {k: tuple(v) for k, v in out.items()})

    def state(self, sid: int) -> State:
        return self.states[sid]

    def outgoing(self, sid: int) -> tuple:
        return self._out[sid]

    def propositions(self, sid: int) -> tuple:
        seen = []
        for t in self._out[sid]:
            for p, _ in t.guard:
                if p not in seen:
                    seen.append(p)
        return tuple(seen)

    def all_propositions(self) -> tuple:
        seen = []
        for s in self.states:
            for p in self.propositions(s.id):
                if p not in seen:
                    seen.append(p)
        return tuple(seen)

    def find(self, action_name: str) -> tuple:
        return tuple(s for s in self.states if s.action.name == action_name)

    def step(self, sid: int, valuation: Mapping[str, bool]) -> int:
        for p in self.propositions(sid):
            if p not in valuation:
                raise ExecutionError(f"missing proposition {p!r} in state {self.states[sid].name!r}")
        enabled = [t for t in self._out[sid] if t.enabled(valuation)]
        if len(enabled) != 1:
            raise ExecutionError(
                f"state {self.states[sid].name!r} has {len(enabled)} enabled transitions for {dict(valuation)}"
            )
        return enabled[0].target

    # -- structural checks ---------------------------------------------------

    def reachable(self) -> set:
        seen = {self.initial}
        stack = [self.initial]
        while stack:
            sid = stack.pop()
            for t in self._out[sid]:
                if t.target not in seen:
                    seen.add(t.target)
                    stack.append(t.target)
        return seen

    def pruned(self) -> "Controller":
        """Copy without unreachable states, ids renumbered in their original order."""
        keep = sorted(self.reachable())
        if len(keep) == len(self.states):
            return self
        new_id = {old: i for i, old in enumerate(keep)}
        states = []
        for old in keep:
            s = self.states[old]
            name = s.name
            prefix = f"{old}:"
            if name.startswith(prefix):
                name = f"{new_id[old]}:" + name[len(prefix):]
            states.append(State(new_id[old], name, s.action))
        transitions = tuple(
            Transition(new_id[t.source], t.guard, new_id[t.target]) for t in self.transitions if t.source in new_id
        )
        return Controller(tuple(states), transitions, new_id[self.initial])

    def nondeterminism(self) -> list:
        """(state, valuation, enabled-count) triples that break determinism."""
        bad = []
        for s in self.states:
            props = self.propositions(s.id)
            for values in itertools.product((False, True), repeat=len(props)):
                val = dict(zip(props, values))
                n = sum(1 for t in self._out[s.id] if t.enabled(val))
                if n != 1:
                    bad.append((s.id, val, n))
        return bad

    def validate(self) -> None:
        ids = [s.id for s in self.states]
        if ids != list(range(len(ids))):
            raise ValueError("state ids must be 0..n-1 in order")
        unreachable = set(ids) - self.reachable()
        if unreachable:
            names = sorted(self.states[i].name for i in unreachable)
            raise ValueError(f"unreachable states: {names}")
        for s in self.states:
            if s.action.is_terminal and any(t.target != s.id for t in self._out[s.id]):
                raise ValueError(f"terminal state {s.name!r} is not absorbing")
        bad = self.nondeterminism()
        if bad:
            sid, val, n = bad[0]
            raise ValueError(f"state {self.states[sid].name!r}: {n} transitions enabled for {val}")

    # -- export -------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "initial": self.initial,
            "states": [{"id": s.id, "name": s.name, "action": s.action.to_dict()} for s in self.states],
            "transitions": [
                {"source": t.source, "target": t.target, "guard": {p: v for p, v in t.guard}}
                for t in self.transitions
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_dot(self) -> str:
        lines = ["digraph controller {", "  rankdir=TB;"]
        for s in self.states:
            shape = "doublecircle" if s.action.is_terminal else "box"
            label = s.action.label().replace('"', '\\"')
            lines.append(f'  s{s.id} [shape={shape}, label="{label}"];')
        lines.append(f"  start [shape=point]; start -> s{self.initial};")
        for t in self.transitions:
            lines.append(f'  s{t.source} -> s{t.target} [label="{t.label()}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


class ControllerBuilder:
    def __init__(self):
        self._states = []
        self._transitions = []

    def add(self, action: Action, name: Optional[str] = None) -> int:
        sid = len(self._states)
        self._states.append(State(sid, name or f"{sid}:{action.label()}", action))
        if action.is_terminal:
            self._transitions.append(Transition(sid, (), sid))
        return sid

    def action(self, sid: int) -> Action:
        return self._states[sid].action

    def edge(self, source: int, guard, target: int) -> None:
        self._transitions.append(Transition(source, tuple(guard), target))

    def branch(self, source: int, cases, default: int) -> None:
        """If/elif over single propositions: ``cases`` is ``[(prop, value, target), ...]``.

        Guards are made mutually exclusive by conjoining the negation of every
        earlier case.
        """
        prefix = []
        for prop, value, target in cases:
            self.edge(source, prefix + [(prop, value)], target)
            prefix.append((prop, not value))
        self.edge(source, prefix, default)

    def when_all(self, source: int, props, if_true: int, otherwise: int) -> None:
        prefix = []
        for p in props:
            self.edge(source, prefix + [(p, False)], otherwise)
            prefix.append((p, True))
        self.edge(source, prefix, if_true)

    def until_complete(self, source: int, then: int) -> None:
        self.edge(source, [(ACTION_COMPLETE, True)], then)
        self.edge(source, [(ACTION_COMPLETE, False)], source)

    def build(self, initial: int = 0) -> Controller:
        return Controller(tuple(self._states), tuple(self._transitions), initial)
