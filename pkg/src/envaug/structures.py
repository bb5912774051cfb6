"""Buildable structures (ramps and bridges) made from passive blocks and wedges.

Geometry conventions
--------------------
Blocks are 0.08 m cubes.  Wedges share the block footprint and carry a 45
degree incline.  A ramp of height ``k`` modules is a staircase with one wedge
per course: position ``p`` (0 is farthest from the ledge) holds ``p`` blocks
topped by a wedge, so it needs ``k`` wedges and ``k(k-1)/2`` blocks.  A
bridge of ``n`` modules is a wedge, ``n - 2`` blocks and a wedge laid end to
end; its deck is ``0.08 * n`` long and at most 0.48 m.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .characterizer import DetectedFeature, direction
from .controller import Action, Controller, ControllerBuilder
from .design_library import ActionSpec
from .elevation_map import DomainError, ElevationMap, HeightPatch, Segmentation
from .templates import FeatureTemplate, read_template

__all__ = [
    "MODULE_SIZE",
    "MAX_BRIDGE_LENGTH",
    "BRIDGE_BEARING",
    "ModuleKind",
    "Structure",
    "Piece",
    "InventoryItem",
    "Inventory",
    "FeatureGeometry",
    "Placement",
    "Selection",
    "Infeasible",
    "NO_MATCHING_FEATURE",
    "INSUFFICIENT_MODULES",
    "CONSTRAINT_VIOLATED",
    "measure_feature",
    "plan_placement",
    "select_structure",
    "generate_patch",
    "assembly_plan_for",
    "load_structure_library",
    "read_structure_library",
]

MODULE_SIZE = 0.08
MAX_BRIDGE_LENGTH = 0.48
# deck overlap required on each side of a gap
BRIDGE_BEARING = 0.04
# allowed mismatch between a ledge rise and a ramp height, or between bridged plateaus
LEVEL_TOLERANCE = 0.02
_EPS = 1e-9

NO_MATCHING_FEATURE = "no matching feature"
INSUFFICIENT_MODULES = "insufficient modules"
CONSTRAINT_VIOLATED = "constraint violated"

PICK_SPEC = ActionSpec("pickUp", "object")
PLACE_SPEC = ActionSpec("place", "object")
TRANSPORT_SPEC = ActionSpec("drive", "flat")


class ModuleKind(str, Enum):
    BLOCK = "block"
    WEDGE = "wedge"

    @property
    def mass(self) -> float:
        return 0.162 if self is ModuleKind.BLOCK else 0.142

    @property
    def dimensions(self) -> tuple:
        """(length, width, height) in meters; a wedge's top is a 45 degree incline."""
        return (MODULE_SIZE, MODULE_SIZE, MODULE_SIZE)

    @property
    def incline(self) -> float:
        return math.pi / 4 if self is ModuleKind.WEDGE else 0.0


@dataclass(frozen=True)
class Piece:
    kind: ModuleKind
    slot: int
    position: int
    course: int


@dataclass(frozen=True)
class Structure:
    name: str
    kind: str
    template: FeatureTemplate
    size: int

    def __post_init__(self):
        if self.kind not in ("ramp", "bridge"):
            raise ValueError(f"unknown structure kind {self.kind!r}")
        if self.kind == "ramp" and self.size < 1:
            raise DomainError(f"ramp {self.name!r}: height must be at least one module")
        if self.kind == "bridge":
            if self.size < 2:
                raise DomainError(f"bridge {self.name!r}: needs at least two modules")
            if self.deck_length > MAX_BRIDGE_LENGTH + _EPS:
                raise DomainError(
                    f"bridge {self.name!r}: deck {self.deck_length:.3f} m exceeds {MAX_BRIDGE_LENGTH} m"
                )

    @classmethod
    def ramp(cls, name: str, template: FeatureTemplate, height_modules: int) -> "Structure":
        return cls(name, "ramp", template, height_modules)

    @classmethod
    def bridge(cls, name: str, template: FeatureTemplate, deck_modules: int) -> "Structure":
        return cls(name, "bridge", template, deck_modules)

    @property
    def height(self) -> float:
        return self.size * MODULE_SIZE if self.kind == "ramp" else 0.0

    @property
    def deck_length(self) -> float:
        return self.size * MODULE_SIZE if self.kind == "bridge" else 0.0

    @property
    def footprint_length(self) -> float:
        return self.size * MODULE_SIZE

    @property
    def required_modules(self) -> dict:
        if self.kind == "ramp":
            k = self.size
            return {ModuleKind.WEDGE: k, ModuleKind.BLOCK: k * (k - 1) // 2}
        return {ModuleKind.WEDGE: 2, ModuleKind.BLOCK: self.size - 2}

    @property
    def module_count(self) -> int:
        return sum(self.required_modules.values())

    @property
    def traversal(self) -> ActionSpec:
        """Action the robot uses to get across the finished structure."""
        if self.kind == "ramp":
            return ActionSpec("climb", "incline45", {"max_climb_angle": math.pi / 4})
        return ActionSpec("cross", "structure")

    def pieces(self) -> tuple:
        """Pieces in a buildable order; every piece rests on already placed ones."""
        if self.kind == "bridge":
            n = self.size
            kinds = [ModuleKind.WEDGE] + [ModuleKind.BLOCK] * (n - 2) + [ModuleKind.WEDGE]
            return tuple(Piece(kind, i, i, 0) for i, kind in enumerate(kinds))
        k = self.size
        stack = []
        for p in range(k):
            for c in range(p):
                stack.append((c, p, ModuleKind.BLOCK))
            stack.append((p, p, ModuleKind.WEDGE))
        # lowest course first, and within a course the pieces nearest the ledge first
        stack.sort(key=lambda e: (e[0], -e[1]))
        return tuple(Piece(kind, i, p, c) for i, (c, p, kind) in enumerate(stack))


@dataclass(frozen=True)
class InventoryItem:
    kind: ModuleKind
    x: float
    y: float

    def __post_init__(self):
        object.__setattr__(self, "kind", ModuleKind(self.kind))

    @property
    def position(self) -> tuple:
        return (self.x, self.y)

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "x": self.x, "y": self.y}


@dataclass(frozen=True)
class Inventory:
    items: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))

    @classmethod
    def of(cls, *entries) -> "Inventory":
        return cls(tuple(InventoryItem(ModuleKind(k), x, y) for k, x, y in entries))

    def counts(self) -> dict:
        out = {ModuleKind.BLOCK: 0, ModuleKind.WEDGE: 0}
        for it in self.items:
            out[it.kind] += 1
        return out

    def covers(self, required: dict) -> bool:
        have = self.counts()
        return all(have.get(k, 0) >= n for k, n in required.items())

    def without(self, index: int) -> "Inventory":
        return Inventory(self.items[:index] + self.items[index + 1 :])

    def check_bounds(self, emap: ElevationMap) -> list:
        return [i for i, it in enumerate(self.items) if not emap.contains(it.x, it.y)]

    def __len__(self):
        return len(self.items)


@dataclass(frozen=True)
class FeatureGeometry:
    """What lies along a feature's axis: where region 1 ends and region 2 starts."""

    near_edge: tuple
    far_edge: tuple
    direction: tuple
    gap: float
    rise: float
    base_height: float


@dataclass(frozen=True, eq=False)
class Placement:
    structure: str
    origin: tuple
    direction: tuple
    base_height: float
    patch: HeightPatch
    slots: tuple

    @property
    def footprint(self) -> frozenset:
        return self.patch.footprint()


@dataclass(frozen=True)
class Selection:
    structure: Structure
    feature: DetectedFeature
    geometry: FeatureGeometry
    placement: Placement

    @property
    def region_pair(self) -> tuple:
        return self.feature.region_pair


@dataclass(frozen=True)
class Infeasible:
    reason: str
    detail: str = ""

    def __bool__(self):
        return False

    def __str__(self):
        return self.reason + (f": {self.detail}" if self.detail else "")


# ---------------------------------------------------------------------------
# geometry


def measure_feature(
    emap: ElevationMap, segmentation: Segmentation, feature: DetectedFeature, template: FeatureTemplate
) -> Optional[FeatureGeometry]:
    """Walk the feature axis from its entry end to its exit end.

    Returns ``None`` when the axis never passes from region 1 into region 2.
    """
    r1, r2 = feature.region_pair
    d = direction(feature.pose.theta)
    res = emap.resolution
    half = template.length / 2.0
    n = int(math.floor(half / res + _EPS))
    ts = [i * res for i in range(-n, n + 1)]
    regions = []
    for t in ts:
        x = feature.pose.x + t * d[0]
        y = feature.pose.y + t * d[1]
        if not emap.contains(x, y):
            regions.append(None)
            continue
        regions.append(segmentation.cell_to_region(*emap.cell_at(x, y)))
    first_r2 = None
    seen_r1 = False
    for i, rid in enumerate(regions):
        if rid == r1:
            seen_r1 = True
        elif rid == r2 and seen_r1:
            first_r2 = i
            break
    if first_r2 is None:
        return None
    last_r1 = max(i for i in range(first_r2) if regions[i] == r1)
    t_near = ts[last_r1] + res / 2.0
    t_far = ts[first_r2] - res / 2.0
    point = lambda t: (feature.pose.x + t * d[0], feature.pose.y + t * d[1])  # noqa: E731
    mean = segmentation.mean_heights
    return FeatureGeometry(
        near_edge=point(t_near),
        far_edge=point(t_far),
        direction=d,
        gap=max(0.0, t_far - t_near),
        rise=float(mean[r2] - mean[r1]),
        base_height=float(mean[r1]),
    )


def rasterize_strip(emap: ElevationMap, origin, d, u_range, v_range, height_of) -> HeightPatch:
    ox, oy = origin
    nx, ny = -d[1], d[0]
    (u0, u1), (v0, v1) = u_range, v_range
    corners = [(ox + u * d[0] + v * nx, oy + u * d[1] + v * ny) for u in (u0, u1) for v in (v0, v1)]
    for cx, cy in corners:
        if not emap.contains(cx, cy):
            raise DomainError(f"structure footprint corner ({cx:.3f}, {cy:.3f}) lies outside the map")
    res = emap.resolution
    H = emap.height
    xs = [c[0] for c in corners]
    ys = [c[1] for c in corners]
    col_lo = max(int(math.floor(min(xs) / res)) - 1, 0)
    col_hi = min(int(math.ceil(max(xs) / res)) + 1, emap.width - 1)
    row_lo = max(H - 1 - int(math.ceil(max(ys) / res)) - 1, 0)
    row_hi = min(H - 1 - int(math.floor(min(ys) / res)) + 1, H - 1)
    cells = {}
    for row in range(row_lo, row_hi + 1):
        for col in range(col_lo, col_hi + 1):
            px, py = emap.cell_center(row, col)
            u = (px - ox) * d[0] + (py - oy) * d[1]
            v = (px - ox) * nx + (py - oy) * ny
            if u0 - _EPS <= u < u1 - _EPS and v0 - _EPS <= v < v1 - _EPS:
                cells[(row, col)] = height_of(u)
    return HeightPatch.from_cells(cells)


def plan_placement(structure: Structure, geometry: FeatureGeometry, emap: ElevationMap) -> Placement:
    """Footprint, heights and piece positions of ``structure`` at a measured feature."""
    d = geometry.direction
    base = geometry.base_height
    half_w = MODULE_SIZE / 2.0
    if structure.kind == "ramp":
        if structure.size < 1:
            raise DomainError("ramp height must be at least one module")
        top = structure.height
        origin = geometry.near_edge
        length = structure.footprint_length

        def ramp_height(u):
            return base + min(max(u + length, 0.0), top)

        patch = rasterize_strip(emap, origin, d, (-length, 0.0), (-half_w, half_w), ramp_height)
        slots = []
        for piece in structure.pieces():
            u = -(structure.size - piece.position - 0.5) * MODULE_SIZE
            slots.append((origin[0] + u * d[0], origin[1] + u * d[1]))
        return Placement(structure.name, origin, d, base, patch, tuple(slots))

    length = structure.deck_length
    origin = (
        (geometry.near_edge[0] + geometry.far_edge[0]) / 2.0,
        (geometry.near_edge[1] + geometry.far_edge[1]) / 2.0,
    )
    patch = rasterize_strip(emap, origin, d, (-length / 2.0, length / 2.0), (-half_w, half_w), lambda u: base)
    return Placement(structure.name, origin, d, base, patch, ())


def generate_patch(
    structure: Structure, feature: DetectedFeature, geometry: FeatureGeometry, emap: ElevationMap
) -> HeightPatch:
    """Height patch that ``structure`` imposes when built at ``feature``."""
    problem = _geometry_problem(structure, geometry)
    if problem:
        raise DomainError(f"{structure.name} cannot be built at this feature: {problem}")
    return plan_placement(structure, geometry, emap).patch


def _geometry_problem(structure: Structure, g: FeatureGeometry) -> Optional[str]:
    if structure.kind == "ramp":
        if g.gap > _EPS:
            return f"ledge has a {g.gap:.3f} m gap in front of it"
        if abs(g.rise - structure.height) > LEVEL_TOLERANCE:
            return f"ledge rise {g.rise:.3f} m != ramp height {structure.height:.3f} m"
        return None
    if structure.deck_length > MAX_BRIDGE_LENGTH + _EPS:
        return f"deck {structure.deck_length:.3f} m exceeds {MAX_BRIDGE_LENGTH} m"
    if g.gap <= _EPS:
        return "no gap to bridge"
    if abs(g.rise) > LEVEL_TOLERANCE:
        return f"plateaus differ by {g.rise:.3f} m"
    if g.gap + 2 * BRIDGE_BEARING > structure.deck_length + _EPS:
        return f"gap {g.gap:.3f} m too wide for a {structure.deck_length:.3f} m deck"
    return None


def _placement_problem(placement: Placement, structure, feature, seg: Segmentation, inventory, emap) -> Optional[str]:
    r1, r2 = feature.region_pair
    cells = placement.footprint
    if not cells:
        return "empty footprint"
    labels = {seg.cell_to_region(r, c) for r, c in cells}
    if structure.kind == "ramp":
        if labels != {r1}:
            return "ramp footprint leaves the low region"
    else:
        if not labels <= {r1, r2, None} or r1 not in labels or r2 not in labels:
            return "deck does not rest on both regions"
    if inventory is not None:
        for it in inventory.items:
            if emap.cell_at(it.x, it.y) in cells:
                return "footprint covers an inventory item"
    return None


# ---------------------------------------------------------------------------
# selection


def select_structure(
    features: Sequence[DetectedFeature],
    inventory: Inventory,
    robot,
    goal: tuple,
    library: Sequence[Structure],
    *,
    elevation_map: ElevationMap,
    segmentation: Segmentation,
):
    """Choose the structure/feature pair to build.

    Valid pairs have a matching template, satisfiable module requirements,
    a buildable geometry and (when a robot is given) an entry region the
    robot currently stands in.  The valid pair nearest ``goal`` wins, ties
    broken by the canonical feature order and then library order.
    Returns a :class:`Selection` or :class:`Infeasible`.
    """
    robot_region = None
    if robot is not None:
        rx, ry = robot.position
        robot_region = segmentation.cell_to_region(*elevation_map.cell_at(rx, ry))

    best = None
    best_key = None
    saw_feature = False
    geometry_ok = False
    details = []
    for lib_index, structure in enumerate(library):
        candidates = [f for f in features if f.template_name == structure.template.name]
        if not candidates:
            continue
        saw_feature = True
        for feature in candidates:
            if robot_region is not None and feature.region_pair[0] != robot_region:
                details.append(f"{structure.name}: feature starts outside the robot's region")
                continue
            geometry = measure_feature(elevation_map, segmentation, feature, structure.template)
            if geometry is None:
                details.append(f"{structure.name}: feature axis does not link its regions")
                continue
            problem = _geometry_problem(structure, geometry)
            if problem is None:
                try:
                    placement = plan_placement(structure, geometry, elevation_map)
                except DomainError as exc:
                    problem = str(exc)
                else:
                    problem = _placement_problem(
                        placement, structure, feature, segmentation, inventory, elevation_map
                    )
            if problem:
                details.append(f"{structure.name}: {problem}")
                continue
            geometry_ok = True
            if not inventory.covers(structure.required_modules):
                details.append(f"{structure.name}: needs {_fmt_modules(structure.required_modules)}")
                continue
            key = (
                math.hypot(feature.pose.x - goal[0], feature.pose.y - goal[1]),
                feature.sort_key(),
                lib_index,
            )
            if best_key is None or key < best_key:
                best_key = key
                best = Selection(structure, feature, geometry, placement)
    if best is not None:
        return best
    detail = details[0] if details else ""
    if not saw_feature:
        return Infeasible(NO_MATCHING_FEATURE)
    if geometry_ok:
        return Infeasible(INSUFFICIENT_MODULES, detail)
    return Infeasible(CONSTRAINT_VIOLATED, detail)


def _fmt_modules(req: dict) -> str:
    return ", ".join(f"{n} {k.value}{'s' if n != 1 else ''}" for k, n in req.items() if n)


# ---------------------------------------------------------------------------
# assembly plans


def assembly_plan_for(
    structure: Structure, inventory: Optional[Inventory] = None, feature: Optional[DetectedFeature] = None
) -> Controller:
    """Construction controller: pick/place every piece, then (bridges) move it into place.

    Placement poses are bound at run time from the selected feature, so the
    same plan serves any feature.  ``inventory`` is only checked.
    """
    if inventory is not None and not inventory.covers(structure.required_modules):
        raise DomainError(f"inventory cannot supply {_fmt_modules(structure.required_modules)}")
    b = ControllerBuilder()
    target = None if feature is None else f"{feature.pose.x:.3f},{feature.pose.y:.3f}"
    prev = None
    for piece in structure.pieces():
        pick = b.add(Action("pickUp", PICK_SPEC, kind=piece.kind.value, structure=structure.name))
        place = b.add(
            Action("place", PLACE_SPEC, target=target, kind=piece.kind.value, slot=piece.slot, structure=structure.name)
        )
        if prev is not None:
            b.until_complete(prev, pick)
        b.until_complete(pick, place)
        prev = place
    if structure.kind == "bridge":
        move = b.add(Action("transport", TRANSPORT_SPEC, target=target, structure=structure.name))
        drop = b.add(Action("placeBridge", PLACE_SPEC, target=target, structure=structure.name))
        b.until_complete(prev, move)
        b.until_complete(move, drop)
        prev = drop
    done = b.add(Action("done"))
    b.until_complete(prev, done)
    return b.build()


# ---------------------------------------------------------------------------
# library files


def load_structure_library(text: str, base_dir=".", templates: Optional[dict] = None) -> tuple:
    """Parse a ``.slib`` JSON array; template paths resolve against ``base_dir``."""
    doc = json.loads(text)
    if not isinstance(doc, list):
        raise ValueError("structure library must be a JSON array")
    out = []
    cache = dict(templates or {})
    for entry in doc:
        path = Path(base_dir) / entry["template_file"]
        key = str(path)
        if key not in cache:
            cache[key] = read_template(path)
        template = cache[key]
        params = entry.get("params", {})
        if entry["kind"] == "ramp":
            out.append(Structure.ramp(entry["name"], template, int(params["height_modules"])))
        elif entry["kind"] == "bridge":
            out.append(Structure.bridge(entry["name"], template, int(params["deck_modules"])))
        else:
            raise ValueError(f"unknown structure kind {entry['kind']!r}")
    names = [s.name for s in out]
    if len(set(names)) != len(names):
        raise ValueError("duplicate structure names")
    return tuple(out)


def read_structure_library(path) -> tuple:
    path = Path(path)
    return load_structure_library(path.read_text(encoding="utf-8"), path.parent)


def modules_in(structures: Sequence[Structure]) -> int:
    return sum(s.module_count for s in structures)


def footprint_cells(patch: HeightPatch) -> np.ndarray:
    return np.array(sorted(patch.footprint()), dtype=np.int64).reshape(-1, 2)
