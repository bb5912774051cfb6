"""Deterministic grid world that runs synthesized controllers.

The robot occupies one map cell and moves one 4-neighbour per step.  Which
moves are legal depends on the behaviour being executed:

* ``drive/flat``: height change at most the behaviour's ``max_step``;
* ``climb/ledge``: height change at most ``max_ledge_height``;
* ``climb/incline45`` and ``cross/structure``: as driving, plus moves
  touching a placed structure cell whose height change is at most one cell
  of 45 degree incline;
* ``cross/flat``: as driving, plus straight hops over Unknown runs no wider
  than ``max_gap_width``.

Unknown cells, cells holding inventory items and the footprint of a
structure under construction can never be entered.  Object actions
(``pickUp``, ``place``, ``push``, ...) first drive toward the nearest cell
within reach (0.12 m), one cell per step, then act.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .characterizer import CharacterizationResult, characterize
from .controller import ACTION_COMPLETE, Action, Controller, ExecutionError
from .design_library import DesignLibrary, drive_step_limit, find_behavior, read_design_library
from .elevation_map import (
    DomainError,
    ElevationMap,
    HeightPatch,
    MapFormatError,
    SegmentationParams,
    apply_patch,
    read_map,
    segment_traversable,
)
from .planner import FEATURE_AVAILABLE, TaskSpec, decide_augmentation, read_task, synthesize, SensedEnv
from .structures import (
    MODULE_SIZE,
    NO_MATCHING_FEATURE,
    Infeasible,
    Inventory,
    InventoryItem,
    ModuleKind,
    Placement,
    Selection,
    read_structure_library,
    rasterize_strip,
)
from .templates import TemplateFormatError, read_template

__all__ = [
    "REACH",
    "DEFAULT_STEP_BUDGET",
    "RECONFIGURE_COST",
    "ActionError",
    "IllegalMove",
    "HandsFull",
    "OutOfReach",
    "MissingItem",
    "NotCarrying",
    "Blocked",
    "NoSelection",
    "ScenarioError",
    "Target",
    "Scenario",
    "RobotState",
    "Assembly",
    "PlacedStructure",
    "WorldState",
    "TraceRecord",
    "MissionResult",
    "load_scenario",
    "validate_scenario",
    "initial_world",
    "step",
    "move",
    "sense",
    "run_mission",
    "render",
    "render_ppm",
    "render_map",
    "module_total",
    "world_hash",
]

REACH = 0.12
DEFAULT_STEP_BUDGET = 10_000
RECONFIGURE_COST = 10
_EPS = 1e-9
_NEIGHBOURS = ((-1, 0), (1, 0), (0, -1), (0, 1))
_HEADINGS = {(-1, 0): math.pi / 2, (1, 0): -math.pi / 2, (0, -1): math.pi, (0, 1): 0.0}


class ActionError(RuntimeError):
    kind = "action error"

    def __str__(self):
        return f"{self.kind}: {super().__str__()}"


class IllegalMove(ActionError):
    kind = "illegal move"


class HandsFull(ActionError):
    kind = "hands full"


class OutOfReach(ActionError):
    kind = "out of reach"


class MissingItem(ActionError):
    kind = "missing item"


class NotCarrying(ActionError):
    kind = "not carrying"


class Blocked(ActionError):
    kind = "blocked"


class NoSelection(ActionError):
    kind = "no selection"


class ScenarioError(ValueError):
    pass


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True, eq=False)
class Target:
    name: str
    x: float
    y: float
    open_patch: Optional[HeightPatch] = None


@dataclass(frozen=True, eq=False)
class Scenario:
    name: str
    map: ElevationMap
    templates: dict
    design_library: DesignLibrary
    structures: tuple
    task: TaskSpec
    robot: dict
    inventory: Inventory
    targets: dict
    alpha: float = 0.95
    height_tolerance: float = 0.02
    step_budget: int = DEFAULT_STEP_BUDGET
    n_orientations: int = 8
    source: Optional[str] = None

    @property
    def segmentation_params(self) -> SegmentationParams:
        return SegmentationParams(self.height_tolerance, 1)


def _patch_from_json(doc) -> HeightPatch:
    heights = np.array([[math.nan if v is None else float(v) for v in row] for row in doc["heights"]])
    return HeightPatch(int(doc["row"]), int(doc["col"]), heights)


def _read_doc(path: Path) -> dict:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: scenario must be a JSON object")
    return doc


_REQUIRED_KEYS = ("map", "templates", "design_library", "structure_library", "task", "robot")


def load_scenario(path) -> Scenario:
    """Read a ``.scn`` file; relative paths resolve against its directory."""
    path = Path(path)
    doc = _read_doc(path)
    missing = [k for k in _REQUIRED_KEYS if k not in doc]
    if missing:
        raise ScenarioError(f"{path}: missing keys {missing}")
    base = path.parent
    emap = read_map(base / doc["map"])
    templates = {}
    for tp in doc["templates"]:
        t = read_template(base / tp)
        templates[t.name] = t
    library = read_design_library(base / doc["design_library"])
    structures = read_structure_library(base / doc["structure_library"])
    task = read_task(base / doc["task"])
    targets = {}
    for name, t in doc.get("named_targets", {}).items():
        patch = _patch_from_json(t["open_patch"]) if t.get("open_patch") else None
        targets[name] = Target(name, float(t["x"]), float(t["y"]), patch)
    inventory = Inventory(tuple(InventoryItem(ModuleKind(i["kind"]), float(i["x"]), float(i["y"])) for i in doc.get("inventory", [])))
    params = doc.get("params", {})
    scn = Scenario(
        name=doc.get("name", path.stem),
        map=emap,
        templates=templates,
        design_library=library,
        structures=structures,
        task=task,
        robot=dict(doc["robot"]),
        inventory=inventory,
        targets=targets,
        alpha=float(params.get("alpha", 0.95)),
        height_tolerance=float(params.get("height_tolerance", 0.02)),
        step_budget=int(params.get("step_budget", DEFAULT_STEP_BUDGET)),
        n_orientations=int(params.get("n_orientations", 8)),
        source=str(path),
    )
    problems = _cross_check(scn)
    if problems:
        raise ScenarioError(f"{path}: " + "; ".join(problems))
    return scn


def _cross_check(scn: Scenario) -> list:
    out = []
    emap = scn.map
    for s in scn.structures:
        if s.template.name not in scn.templates:
            out.append(f"structure {s.name} uses template {s.template.name!r} missing from the scenario")
    missing = sorted(scn.task.targets() - set(scn.targets))
    for name in missing:
        out.append(f"task target {name!r} is not declared")
    for i, it in enumerate(scn.inventory.items):
        if not emap.contains(it.x, it.y):
            out.append(f"inventory item {i} ({it.kind.value} at {it.x:g}, {it.y:g}) is outside the map")
    for t in scn.targets.values():
        if not emap.contains(t.x, t.y):
            out.append(f"target {t.name!r} is outside the map")
    r = scn.robot
    try:
        rx, ry = float(r["x"]), float(r["y"])
    except (KeyError, TypeError, ValueError):
        out.append("robot needs numeric x and y")
        return out
    if not emap.contains(rx, ry):
        out.append("robot start is outside the map")
    else:
        cell = emap.cell_at(rx, ry)
        if emap.height_at(*cell) is None:
            out.append("robot starts on an Unknown cell")
        for i, it in enumerate(scn.inventory.items):
            if emap.contains(it.x, it.y) and emap.cell_at(it.x, it.y) == cell:
                out.append(f"inventory item {i} shares the robot's cell")
    try:
        scn.design_library.configuration(r.get("configuration", ""))
    except KeyError:
        out.append(f"unknown robot configuration {r.get('configuration')!r}")
    return out


def validate_scenario(path) -> list:
    """Every problem found in a scenario, without running it."""
    path = Path(path)
    try:
        doc = _read_doc(path)
    except (OSError, ScenarioError) as exc:
        return [str(exc)]
    out = [f"missing key {k!r}" for k in _REQUIRED_KEYS if k not in doc]
    base = path.parent

    def check(rel, loader, what):
        p = base / rel
        if not p.exists():
            out.append(f"{what} not found: {p}")
            return None
        try:
            return loader(p)
        except (OSError, ValueError, KeyError, MapFormatError, TemplateFormatError) as exc:
            out.append(f"{what} {p} does not load: {exc}")
            return None

    emap = check(doc["map"], read_map, "map") if "map" in doc else None
    templates = {}
    for tp in doc.get("templates", []):
        t = check(tp, read_template, "template")
        if t is not None:
            templates[t.name] = t
    library = check(doc["design_library"], read_design_library, "design library") if "design_library" in doc else None
    structures = (
        check(doc["structure_library"], read_structure_library, "structure library") if "structure_library" in doc else None
    )
    task = check(doc["task"], read_task, "task") if "task" in doc else None
    if None in (emap, library, structures, task) or out:
        return out
    try:
        inventory = Inventory(
            tuple(InventoryItem(ModuleKind(i["kind"]), float(i["x"]), float(i["y"])) for i in doc.get("inventory", []))
        )
        targets = {
            n: Target(n, float(t["x"]), float(t["y"]), _patch_from_json(t["open_patch"]) if t.get("open_patch") else None)
            for n, t in doc.get("named_targets", {}).items()
        }
    except (KeyError, TypeError, ValueError) as exc:
        return out + [f"malformed inventory or targets: {exc}"]
    scn = Scenario(
        doc.get("name", path.stem), emap, templates, library, structures, task, dict(doc["robot"]), inventory, targets
    )
    return out + _cross_check(scn)


# ---------------------------------------------------------------------------
# world state


@dataclass(frozen=True)
class RobotState:
    row: int
    col: int
    heading: float
    configuration: str
    carrying: Optional[str] = None
    resolution: float = field(default=0.04, repr=False)
    map_rows: int = field(default=0, repr=False)

    @property
    def cell(self) -> tuple:
        return (self.row, self.col)

    @property
    def position(self) -> tuple:
        return ((self.col + 0.5) * self.resolution, (self.map_rows - self.row - 0.5) * self.resolution)


@dataclass(frozen=True)
class Assembly:
    structure: str
    pieces: tuple
    site: Placement
    carried: bool = False


@dataclass(frozen=True)
class PlacedStructure:
    name: str
    kind: str
    origin: tuple
    cells: frozenset
    modules: int


@dataclass(frozen=True, eq=False)
class WorldState:
    map: ElevationMap
    segmentation: object
    robot: RobotState
    inventory: Inventory
    scenario: Scenario = field(repr=False)
    assembly: Optional[Assembly] = None
    placed: tuple = ()
    links: tuple = ()
    explored: bool = False
    opened: frozenset = frozenset()
    inspected: frozenset = frozenset()
    characterization: Optional[CharacterizationResult] = None
    selection: object = None
    pending_link: Optional[tuple] = None
    infeasible_reason: Optional[str] = None
    clock: int = 0
    action_complete: bool = False
    last_event: str = "start"

    def summary(self) -> dict:
        h = self.map.heights
        map_digest = hashlib.sha256(np.where(np.isnan(h), -1.0, h).tobytes()).hexdigest()
        sel = self.selection
        return {
            "map": map_digest,
            "robot": [self.robot.row, self.robot.col, round(self.robot.heading, 9), self.robot.configuration, self.robot.carrying],
            "inventory": [[it.kind.value, it.x, it.y] for it in self.inventory.items],
            "assembly": None
            if self.assembly is None
            else [self.assembly.structure, [list(p) for p in self.assembly.pieces], self.assembly.carried],
            "placed": [[p.name, sorted(p.cells)] for p in self.placed],
            "explored": self.explored,
            "opened": sorted(self.opened),
            "inspected": sorted(self.inspected),
            "features": None if self.characterization is None else len(self.characterization.features),
            "selection": sel.structure.name if isinstance(sel, Selection) else (str(sel) if sel else None),
            "clock": self.clock,
            "complete": self.action_complete,
        }


def world_hash(world: WorldState) -> str:
    text = json.dumps(world.summary(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def module_total(world: WorldState) -> int:
    """Modules in the world: inventory, carried, under construction and built."""
    total = len(world.inventory)
    carrying = world.robot.carrying
    if carrying in (ModuleKind.BLOCK.value, ModuleKind.WEDGE.value):
        total += 1
    if world.assembly is not None:
        total += len(world.assembly.pieces)
    return total + sum(p.modules for p in world.placed)


def initial_world(scn: Scenario) -> WorldState:
    emap = scn.map
    r = scn.robot
    row, col = emap.cell_at(float(r["x"]), float(r["y"]))
    robot = RobotState(
        row, col, float(r.get("heading", 0.0)), r["configuration"], None, emap.resolution, emap.height
    )
    return WorldState(
        map=emap,
        segmentation=segment_traversable(emap, scn.segmentation_params),
        robot=robot,
        inventory=scn.inventory,
        scenario=scn,
    )


# ---------------------------------------------------------------------------
# movement


@dataclass(frozen=True)
class _Mode:
    max_step: float
    structure_step: float = 0.0
    hop: int = 0


def _mode_for(world: WorldState, behavior) -> _Mode:
    lib = world.scenario.design_library
    base = drive_step_limit(lib, world.robot.configuration)
    if behavior is None:
        return _Mode(base)
    verb, env = behavior.verb, behavior.environment_class
    if verb == "drive" and env == "flat":
        return _Mode(behavior.limit("max_step", base))
    if verb == "climb" and env == "ledge":
        return _Mode(max(base, behavior.limit("max_ledge_height", 0.0)))
    if env in ("incline45", "structure"):
        angle = behavior.limit("max_climb_angle", math.pi / 4)
        return _Mode(base, world.map.resolution * math.tan(min(angle, math.pi / 4)))
    if verb == "cross" and env == "flat":
        width = behavior.limit("max_gap_width", 0.0)
        return _Mode(base, 0.0, int(math.floor(width / world.map.resolution + _EPS)))
    return _Mode(base)


def _structure_cells(world: WorldState) -> frozenset:
    out = set()
    for p in world.placed:
        out |= p.cells
    return frozenset(out)


def _blocked_cells(world: WorldState) -> frozenset:
    out = {world.map.cell_at(it.x, it.y) for it in world.inventory.items}
    if world.assembly is not None and not world.assembly.carried:
        out |= world.assembly.site.footprint
    return frozenset(out)


def _step_ok(world: WorldState, a, b, mode: _Mode, structure_cells) -> bool:
    ha = world.map.height_at(*a)
    hb = world.map.height_at(*b)
    if ha is None or hb is None:
        return False
    dh = abs(hb - ha)
    if dh <= mode.max_step + _EPS:
        return True
    if mode.structure_step and (a in structure_cells or b in structure_cells):
        return dh <= mode.structure_step + _EPS
    return False


def _successors(world: WorldState, cell, mode: _Mode, blocked, structure_cells):
    H, W = world.map.shape
    r, c = cell
    for dr, dc in _NEIGHBOURS:
        for k in range(0, mode.hop + 1):
            nr, nc = r + dr * (k + 1), c + dc * (k + 1)
            if not (0 <= nr < H and 0 <= nc < W):
                break
            if k and world.map.height_at(r + dr * k, c + dc * k) is not None:
                break  # hops only pass over Unknown cells
            if (nr, nc) in blocked:
                break
            if world.map.height_at(nr, nc) is None:
                continue
            if _step_ok(world, cell, (nr, nc), mode, structure_cells):
                yield (nr, nc)
            break


def _bfs(world: WorldState, goal: Callable, mode: _Mode, blocked=None) -> Optional[list]:
    """Shortest legal path (excluding the start) to the first cell meeting ``goal``."""
    start = world.robot.cell
    if goal(start):
        return []
    blocked = _blocked_cells(world) if blocked is None else blocked
    structure_cells = _structure_cells(world)
    prev = {start: None}
    queue = deque([start])
    while queue:
        cell = queue.popleft()
        for nxt in _successors(world, cell, mode, blocked, structure_cells):
            if nxt in prev:
                continue
            prev[nxt] = cell
            if goal(nxt):
                path = [nxt]
                while prev[path[-1]] != start:
                    path.append(prev[path[-1]])
                return path[::-1]
            queue.append(nxt)
    return None


def _moved(world: WorldState, cell) -> WorldState:
    r0, c0 = world.robot.cell
    dr, dc = cell[0] - r0, cell[1] - c0
    key = (int(np.sign(dr)), int(np.sign(dc)))
    robot = replace(world.robot, row=cell[0], col=cell[1], heading=_HEADINGS.get(key, world.robot.heading))
    return replace(world, robot=robot)


def move(world: WorldState, direction: str, behavior=None) -> WorldState:
    """Move one cell ``'N'``, ``'S'``, ``'W'`` or ``'E'``; raises :class:`IllegalMove`."""
    offsets = {"N": (-1, 0), "S": (1, 0), "W": (0, -1), "E": (0, 1)}
    dr, dc = offsets[direction]
    r, c = world.robot.cell
    nxt = (r + dr, c + dc)
    if not world.map.in_bounds(*nxt):
        raise IllegalMove(f"{direction} leaves the map")
    if nxt in _blocked_cells(world):
        raise IllegalMove(f"cell {nxt} is occupied")
    mode = _mode_for(world, behavior)
    if not _step_ok(world, (r, c), nxt, mode, _structure_cells(world)):
        raise IllegalMove(f"cannot move from {(r, c)} to {nxt}")
    return replace(_moved(world, nxt), clock=world.clock + 1, action_complete=False, last_event=f"move({direction})")


def _dist(world: WorldState, cell, point) -> float:
    x, y = world.map.cell_center(*cell)
    return math.hypot(x - point[0], y - point[1])


def _near(world: WorldState, points, avoid=frozenset()):
    def goal(cell):
        return cell not in avoid and any(_dist(world, cell, p) <= REACH + _EPS for p in points)

    return goal


def _approach(world: WorldState, points, avoid=frozenset()):
    """(world after one step toward reach of ``points``, already_there)."""
    goal = _near(world, points, avoid)
    path = _bfs(world, goal, _mode_for(world, None))
    if path is None:
        raise OutOfReach(f"no reachable cell within {REACH} m of {[tuple(round(v, 3) for v in p) for p in points]}")
    if not path:
        return world, True
    return _moved(world, path[0]), False


# ---------------------------------------------------------------------------
# actions


def _target(world: WorldState, name: Optional[str]) -> Target:
    try:
        return world.scenario.targets[name]
    except KeyError:
        raise ActionError(f"unknown target {name!r}") from None


def _resegment(world: WorldState, emap: ElevationMap) -> WorldState:
    return replace(world, map=emap, segmentation=segment_traversable(emap, world.scenario.segmentation_params))


def _tick(world: WorldState, event: str, complete: bool, cost: int = 1) -> WorldState:
    return replace(world, clock=world.clock + cost, action_complete=complete, last_event=event)


def _locomote(world: WorldState, action: Action, behavior) -> WorldState:
    t = _target(world, action.target)
    goal_cell = world.map.cell_at(t.x, t.y)
    path = _bfs(world, lambda c: c == goal_cell, _mode_for(world, behavior))
    if path is None:
        raise IllegalMove(f"no legal path to {action.target} for {behavior.name}")
    if not path:
        return _tick(world, action.name, True)
    return _tick(_moved(world, path[0]), action.name, len(path) == 1)


def _selection(world: WorldState, action: Action) -> Selection:
    sel = world.selection
    if not isinstance(sel, Selection) or sel.structure.name != action.structure:
        raise NoSelection(f"{action.name} needs a selected {action.structure}")
    return sel


def _assembly_site(world: WorldState, sel: Selection) -> Placement:
    """Free strip of the entry region, behind the gap, to assemble a bridge on."""
    s, g, emap = sel.structure, sel.geometry, world.map
    d = g.direction
    length = s.deck_length
    r1 = sel.feature.region_pair[0]
    blocked = _blocked_cells(world) | _structure_cells(world) | {world.robot.cell}
    for j in range(1, 64):
        back = length / 2.0 + MODULE_SIZE * j
        origin = (g.near_edge[0] - d[0] * back, g.near_edge[1] - d[1] * back)
        try:
            patch = rasterize_strip(emap, origin, d, (-length / 2, length / 2), (-MODULE_SIZE / 2, MODULE_SIZE / 2), lambda u: g.base_height)
        except DomainError:
            break
        cells = patch.footprint()
        if any(world.segmentation.cell_to_region(*c) != r1 for c in cells) or cells & blocked:
            continue
        n = s.size
        slots = tuple(
            (origin[0] + (i - (n - 1) / 2.0) * MODULE_SIZE * d[0], origin[1] + (i - (n - 1) / 2.0) * MODULE_SIZE * d[1])
            for i in range(n)
        )
        return Placement(s.name, origin, d, g.base_height, patch, slots)
    raise Blocked(f"no free strip to assemble {s.name}")


def _finish_structure(world: WorldState, sel: Selection) -> WorldState:
    patch = sel.placement.patch
    cells = patch.footprint()
    if world.robot.cell in cells:
        raise Blocked("robot stands on the structure footprint")
    for it in world.inventory.items:
        if world.map.cell_at(it.x, it.y) in cells:
            raise Blocked("structure footprint covers an inventory item")
    placed = PlacedStructure(sel.structure.name, sel.structure.kind, sel.placement.origin, cells, sel.structure.module_count)
    links = world.links + (world.pending_link,) if world.pending_link else world.links
    out = replace(world, assembly=None, placed=world.placed + (placed,), links=links, pending_link=None)
    return _resegment(out, apply_patch(world.map, patch))


def _pick_up(world: WorldState, action: Action) -> WorldState:
    if world.robot.carrying is not None:
        raise HandsFull(f"already carrying {world.robot.carrying}")
    pos = world.robot.position
    items = [
        (math.hypot(it.x - pos[0], it.y - pos[1]), i)
        for i, it in enumerate(world.inventory.items)
        if it.kind.value == action.kind
    ]
    if not items:
        raise MissingItem(f"no {action.kind} left in the inventory")
    _, idx = min(items)
    item = world.inventory.items[idx]
    moved, there = _approach(world, [item.position])
    if not there:
        return _tick(moved, "pickUp", False)
    robot = replace(world.robot, carrying=item.kind.value)
    return _tick(replace(world, robot=robot, inventory=world.inventory.without(idx)), "pickUp", True)


def _place(world: WorldState, action: Action) -> WorldState:
    sel = _selection(world, action)
    if world.robot.carrying != action.kind:
        raise NotCarrying(f"place({action.kind}) while carrying {world.robot.carrying}")
    assembly = world.assembly
    if assembly is None:
        site = sel.placement if sel.structure.kind == "ramp" else _assembly_site(world, sel)
        assembly = Assembly(sel.structure.name, (), site)
    if action.slot != len(assembly.pieces):
        raise ActionError(f"slot {action.slot} placed out of order")
    point = assembly.site.slots[action.slot]
    staged = replace(world, assembly=assembly)
    moved, there = _approach(staged, [point], assembly.site.footprint)
    if not there:
        return _tick(moved, "place", False)
    assembly = replace(assembly, pieces=assembly.pieces + ((action.kind, action.slot),))
    robot = replace(world.robot, carrying=None)
    out = replace(staged, robot=robot, assembly=assembly)
    if sel.structure.kind == "ramp" and len(assembly.pieces) == sel.structure.module_count:
        out = _finish_structure(out, sel)
    return _tick(out, "place", True)


def _footprint_points(world: WorldState, cells) -> list:
    return [world.map.cell_center(*c) for c in sorted(cells)]


def _transport(world: WorldState, action: Action) -> WorldState:
    sel = _selection(world, action)
    a = world.assembly
    if a is None or len(a.pieces) != sel.structure.module_count:
        raise ActionError(f"{sel.structure.name} is not assembled")
    if not a.carried:
        if world.robot.carrying is not None:
            raise HandsFull(f"already carrying {world.robot.carrying}")
        moved, there = _approach(world, _footprint_points(world, a.site.footprint), a.site.footprint)
        if not there:
            return _tick(moved, "transport", False)
        robot = replace(world.robot, carrying=f"structure:{a.structure}")
        return _tick(replace(world, robot=robot, assembly=replace(a, carried=True)), "transport", False)
    final = sel.placement.footprint
    moved, there = _approach(world, _footprint_points(world, final), final)
    if there:
        return _tick(world, "transport", True)
    _, arrived = _approach(moved, _footprint_points(moved, final), final)
    return _tick(moved, "transport", arrived)


def _place_bridge(world: WorldState, action: Action) -> WorldState:
    sel = _selection(world, action)
    if world.robot.carrying != f"structure:{sel.structure.name}":
        raise NotCarrying(f"placeBridge while carrying {world.robot.carrying}")
    final = sel.placement.footprint
    if not _near(world, _footprint_points(world, final), final)(world.robot.cell):
        raise OutOfReach("bridge footprint is out of reach")
    out = _finish_structure(replace(world, robot=replace(world.robot, carrying=None)), sel)
    return _tick(out, "placeBridge", True)


def _interact(world: WorldState, action: Action) -> WorldState:
    t = _target(world, action.target)
    moved, there = _approach(world, [(t.x, t.y)])
    if not there:
        return _tick(moved, action.name, False)
    if action.name == "push":
        out = replace(world, opened=world.opened | {t.name})
        if t.open_patch is not None and t.name not in world.opened:
            cells = t.open_patch.footprint()
            if world.robot.cell in cells:
                raise Blocked(f"robot is in the way of {t.name}")
            for it in world.inventory.items:
                if world.map.cell_at(it.x, it.y) in cells:
                    raise Blocked(f"an inventory item is in the way of {t.name}")
            out = _resegment(out, apply_patch(world.map, t.open_patch))
        return _tick(out, "push", True)
    if action.name == "inspect":
        return _tick(replace(world, inspected=world.inspected | {t.name}), "inspect", True)
    return _tick(world, action.name, True)


def _characterize(world: WorldState, action: Action) -> WorldState:
    scn = world.scenario
    templates = [scn.templates[n] for n in action.options if n in scn.templates]
    result = characterize(world.map, world.segmentation, templates, scn.alpha, n_orientations=scn.n_orientations)
    reason = None if result.features else NO_MATCHING_FEATURE
    return _tick(replace(world, characterization=result, selection=None, infeasible_reason=reason), "characterize", True)


def _select(world: WorldState, action: Action) -> WorldState:
    scn = world.scenario
    names = set(action.options)
    structures = [s for s in scn.structures if s.name in names]
    t = _target(world, action.target)
    env = SensedEnv({}, world.characterization)
    decision = decide_augmentation(
        env,
        world.inventory,
        world.robot,
        (t.x, t.y),
        structures,
        elevation_map=world.map,
        segmentation=world.segmentation,
    )
    if isinstance(decision, Infeasible):
        return _tick(replace(world, selection=decision, infeasible_reason=str(decision.reason)), "selectStructure", True)
    r1, r2 = decision.region_pair
    link = (world.segmentation.region(r1).cells, world.segmentation.region(r2).cells)
    return _tick(
        replace(world, selection=decision.selection, pending_link=link, infeasible_reason=None), "selectStructure", True
    )


_HANDLERS = {
    "pickUp": _pick_up,
    "place": _place,
    "transport": _transport,
    "placeBridge": _place_bridge,
    "push": _interact,
    "inspect": _interact,
    "attach": _interact,
}


def step(world: WorldState, action: Action) -> WorldState:
    """Execute one step of ``action``; returns a new world, never mutates ``world``.

    ``world.action_complete`` tells whether the action finished and
    ``world.last_event`` names what happened (``reconfigure`` when the robot
    had to change configuration first).
    """
    name = action.name
    if action.is_terminal:
        return _tick(world, name, False, 0)
    if name == "explore":
        return _tick(replace(world, explored=True), "explore", True)
    if name == "characterize":
        return _characterize(world, action)
    if name == "selectStructure":
        return _select(world, action)
    if action.spec is None:
        raise ActionError(f"action {name!r} has no behaviour spec")
    match = find_behavior(action.spec, world.scenario.design_library, world.robot.configuration)
    if not match:
        raise ActionError(f"no behaviour performs {action.spec}")
    if match.needs_reconfiguration:
        if world.robot.carrying is not None and world.robot.carrying.startswith("structure:"):
            raise HandsFull("cannot reconfigure while carrying a structure")
        robot = replace(world.robot, configuration=match.configuration.name)
        return _tick(replace(world, robot=robot), f"reconfigure({match.configuration.name})", False, RECONFIGURE_COST)
    if name in ("drive", "climb", "cross"):
        return _locomote(world, action, match.behavior)
    handler = _HANDLERS.get(name)
    if handler is None:
        raise ActionError(f"unsupported action {name!r}")
    return handler(world, action)


# ---------------------------------------------------------------------------
# sensing and missions


def sense(world: WorldState, propositions) -> dict:
    """Ground-truth valuation of the named propositions (unknown names are left out)."""
    out = {}
    for p in propositions:
        if p == ACTION_COMPLETE:
            out[p] = world.action_complete
        elif p == FEATURE_AVAILABLE:
            out[p] = bool(world.characterization and world.characterization.features)
        elif p.startswith("selected:"):
            sel = world.selection
            out[p] = isinstance(sel, Selection) and sel.structure.name == p.split(":", 1)[1]
        elif p.startswith("visible:"):
            out[p] = world.explored and p.split(":", 1)[1] in world.scenario.targets
        elif p.startswith("open:"):
            out[p] = p.split(":", 1)[1] in world.opened
        elif p.startswith("reachable:"):
            name = p.split(":", 1)[1]
            t = world.scenario.targets.get(name)
            if t is None:
                out[p] = False
            else:
                goal = world.map.cell_at(t.x, t.y)
                out[p] = _bfs(world, lambda c: c == goal, _mode_for(world, None)) is not None
    return out


@dataclass(frozen=True)
class TraceRecord:
    step: int
    state: int
    state_name: str
    action: str
    world_hash: str

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "state": self.state,
            "state_name": self.state_name,
            "action": self.action,
            "world_hash": self.world_hash,
        }


@dataclass(frozen=True, eq=False)
class MissionResult:
    outcome: str
    reason: Optional[str]
    trace: tuple
    final_state: int
    world: WorldState = field(repr=False)
    controller: Controller = field(repr=False)
    error: Optional[str] = None

    @property
    def success(self) -> bool:
        return self.outcome == "success"

    def actions(self, collapse: bool = True) -> list:
        """Action names along the trace, collapsing repeats of the same state."""
        out = []
        last = None
        for rec in self.trace:
            name = rec.action.split("(", 1)[0]
            key = (rec.state, name)
            if collapse and key == last:
                continue
            out.append(name)
            last = key
        return out

    def trace_hash(self) -> str:
        h = hashlib.sha256()
        for rec in self.trace:
            h.update(json.dumps(rec.to_dict(), sort_keys=True).encode())
        return h.hexdigest()

    def to_dict(self) -> dict:
        return {
            "outcome": self.outcome,
            "reason": self.reason,
            "error": self.error,
            "final_state": self.final_state,
            "steps": len(self.trace),
            "clock": self.world.clock,
            "trace_hash": self.trace_hash(),
            "actions": self.actions(),
            "placed_structures": [p.name for p in self.world.placed],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def trace_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in self.trace)


def run_mission(scenario, step_budget: Optional[int] = None, on_step: Optional[Callable] = None) -> MissionResult:
    """Synthesize the scenario's controller and run it to a terminal state or the step budget."""
    scn = scenario if isinstance(scenario, Scenario) else load_scenario(scenario)
    budget = scn.step_budget if step_budget is None else step_budget
    ctrl = synthesize(scn.task, scn.design_library, scn.structures, targets=tuple(scn.targets))
    world = initial_world(scn)
    state = ctrl.initial
    trace = []
    outcome, reason, error = "stuck", None, None
    for k in range(budget + 1):
        st = ctrl.state(state)
        if st.action.is_terminal:
            trace.append(TraceRecord(k, state, st.name, st.action.name, world_hash(world)))
            if st.action.name == "done":
                outcome = "success"
            else:
                outcome, reason = "infeasible", world.infeasible_reason or "infeasible"
            break
        if k == budget:
            trace.append(TraceRecord(k, state, st.name, "budget exhausted", world_hash(world)))
            reason = f"step budget {budget} exhausted"
            break
        try:
            world = step(world, st.action)
        except ActionError as exc:
            trace.append(TraceRecord(k, state, st.name, f"{st.action.name}!", world_hash(world)))
            reason, error = exc.kind, str(exc)
            break
        trace.append(TraceRecord(k, state, st.name, world.last_event, world_hash(world)))
        if on_step is not None:
            on_step(trace[-1], world)
        facts = sense(world, ctrl.propositions(state))
        try:
            state = ctrl.step(state, facts)
        except ExecutionError as exc:
            reason, error = "execution error", str(exc)
            break
    return MissionResult(outcome, reason, tuple(trace), state, world, ctrl, error)


# ---------------------------------------------------------------------------
# rendering

_HEIGHT_GLYPHS = "0123456789abcdefghijklmnopqrstuvwxyz"
HEIGHT_BIN = 0.04


def _height_glyph(h: Optional[float]) -> str:
    if h is None:
        return "?"
    b = int(math.floor(h / HEIGHT_BIN + _EPS))
    return _HEIGHT_GLYPHS[b] if 0 <= b < len(_HEIGHT_GLYPHS) else "#"


def _overlay(world: WorldState) -> dict:
    marks = {}
    if world.characterization is not None:
        for f in world.characterization.features:
            marks[world.map.cell_at(f.pose.x, f.pose.y)] = "*"
    for p in world.placed:
        for c in p.cells:
            marks[c] = "=" if p.kind == "bridge" else "/"
    if world.assembly is not None and not world.assembly.carried:
        for i, _ in enumerate(world.assembly.pieces):
            x, y = world.assembly.site.slots[i]
            marks[world.map.cell_at(x, y)] = "+"
    for it in world.inventory.items:
        marks[world.map.cell_at(it.x, it.y)] = "W" if it.kind is ModuleKind.WEDGE else "B"
    marks[world.robot.cell] = "R"
    return marks


def render(world: WorldState) -> str:
    """ASCII frame: one glyph per cell, height bins of 0.04 m (0-9, a-z), ``?`` Unknown.

    Overlays: ``R`` robot, ``W``/``B`` wedge/block, ``+`` piece being
    assembled, ``=`` bridge, ``/`` ramp, ``*`` characterized feature.
    """
    H, W = world.map.shape
    marks = _overlay(world)
    lines = []
    for r in range(H):
        lines.append("".join(marks.get((r, c)) or _height_glyph(world.map.height_at(r, c)) for c in range(W)))
    return "\n".join(lines) + "\n"


def render_map(emap: ElevationMap) -> str:
    """Height glyphs only, for a bare map."""
    return "".join(
        "".join(_height_glyph(emap.height_at(r, c)) for c in range(emap.width)) + "\n" for r in range(emap.height)
    )


_COLOURS = {"R": (220, 30, 30), "W": (40, 80, 220), "B": (40, 160, 220), "+": (120, 60, 200), "=": (30, 170, 60), "/": (30, 170, 60), "*": (240, 190, 20)}


def render_ppm(world: WorldState, scale: int = 4) -> bytes:
    """Binary PPM (P6): grey by height (0 to 0.64 m), black Unknown, coloured overlays."""
    H, W = world.map.shape
    marks = _overlay(world)
    img = np.zeros((H, W, 3), dtype=np.uint8)
    h = world.map.heights
    grey = np.where(np.isnan(h), 0, 60 + 195 * np.clip(np.nan_to_num(h) / 0.64, 0, 1)).astype(np.uint8)
    img[...] = grey[..., None]
    for (r, c), g in marks.items():
        img[r, c] = _COLOURS[g]
    img = np.repeat(np.repeat(img, scale, axis=0), scale, axis=1)
    return f"P6\n{W * scale} {H * scale}\n255\n".encode() + img.tobytes()
