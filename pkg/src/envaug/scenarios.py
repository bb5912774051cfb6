"""Builders for the shipped demonstration scenarios.

Both worlds are desk-scale reconstructions at 0.04 m resolution.  Their
exact dimensions are not published, so table sizes and drawer heights are
plausible choices around the published facts: a 0.16 m gap between two
tables, and a 0.16 m drawer ledge that a ramp of two module heights climbs.

``python -m envaug.scenarios`` rewrites the files under ``data/``.
"""

from __future__ import annotations

import json
import math
import sys
from pathlib import Path

import numpy as np

from .assets import DATA_DIR
from .elevation_map import ElevationMap, HeightPatch, write_map

RESOLUTION = 0.04

# bridge scenario
TABLE_HEIGHT = 0.30
GAP_COLS = (18, 22)

# drawer scenario
CABINET_HEIGHT = 0.60
DRAWER_HEIGHT = 0.16
DRAWER_ROWS = (6, 12)
DRAWER_COLS = (10, 20)
EMPTY_DRAWER_FLOOR = 0.02


def bridge_map() -> ElevationMap:
    """Two 0.30 m tables, 0.72 m deep each, separated by a 0.16 m gap."""
    h = np.full((20, 40), TABLE_HEIGHT)
    h[:, GAP_COLS[0] : GAP_COLS[1]] = math.nan
    return ElevationMap(RESOLUTION, h)


def drawer_map() -> ElevationMap:
    """Floor with a 0.60 m cabinet along the top edge; drawers closed."""
    h = np.zeros((30, 30))
    h[0:6, 8:22] = CABINET_HEIGHT
    return ElevationMap(RESOLUTION, h)


def drawer_patch(empty: bool = False) -> HeightPatch:
    """Heights of the bottom drawer once pulled out.

    A filled drawer is a solid 0.16 m block.  An empty one is a one-cell rim
    around a floor only 0.02 m high, which no ledge template accepts.
    """
    r0, r1 = DRAWER_ROWS
    c0, c1 = DRAWER_COLS
    h = np.full((r1 - r0, c1 - c0), DRAWER_HEIGHT)
    if empty:
        h[1:, 1:-1] = EMPTY_DRAWER_FLOOR
    return HeightPatch(r0, c0, h)


def _patch_json(p: HeightPatch) -> dict:
    return {"row": p.row, "col": p.col, "heights": [[float(v) for v in row] for row in p.heights]}


_TEMPLATES = [
    "../templates/ledge-h1.ftpl",
    "../templates/ledge-h2.ftpl",
    "../templates/gap.ftpl",
    "../templates/gap-wide.ftpl",
]

BRIDGE_TASK = {
    "goals": [
        {
            "verb": "cross",
            "environment_class": "flat",
            "required_limits": {"max_gap_width": 0.16},
            "target": "far_table",
            "guards": ["visible:pink_zone"],
        },
        {"verb": "drive", "environment_class": "flat", "target": "pink_zone"},
    ]
}

DRAWER_TASK = {
    "goals": [
        {"verb": "drive", "environment_class": "flat", "target": "drawer1_front", "guards": ["visible:drawer1"]},
        {"verb": "push", "environment_class": "object", "target": "drawer1"},
        {
            "verb": "climb",
            "environment_class": "ledge",
            "required_limits": {"max_ledge_height": 0.16},
            "target": "drawer1_top",
        },
        {"verb": "push", "environment_class": "object", "target": "drawer2"},
        {"verb": "inspect", "environment_class": "object", "target": "drawer2"},
    ]
}


def _scenario(name, description, map_file, task_file, robot, inventory, targets) -> dict:
    return {
        "name": name,
        "description": description,
        "map": f"../maps/{map_file}",
        "templates": list(_TEMPLATES),
        "design_library": "../design.dlib",
        "structure_library": "../library.slib",
        "task": f"../tasks/{task_file}",
        "robot": robot,
        "inventory": inventory,
        "named_targets": targets,
        "params": {"alpha": 0.95, "height_tolerance": 0.04, "step_budget": 10000},
    }


def bridge_scenario() -> dict:
    return _scenario(
        "bridge-gap",
        "Reconstruction: two tables 0.16 m apart; two wedges and one block on the near table.",
        "bridge.emap",
        "bridge.task",
        {"x": 0.20, "y": 0.40, "heading": 0.0, "configuration": "manipulator"},
        [
            {"kind": "wedge", "x": 0.20, "y": 0.70},
            {"kind": "wedge", "x": 0.30, "y": 0.70},
            {"kind": "block", "x": 0.40, "y": 0.70},
        ],
        {"far_table": {"x": 1.20, "y": 0.40}, "pink_zone": {"x": 1.40, "y": 0.40}},
    )


def drawer_scenario(empty: bool = False) -> dict:
    name = "drawer-empty" if empty else "drawer"
    what = "an empty bottom drawer" if empty else "a full bottom drawer"
    return _scenario(
        name,
        f"Reconstruction: desk drawers with {what}; two wedges and one block on the floor.",
        "drawer.emap",
        "drawer.task",
        {"x": 0.60, "y": 0.20, "heading": 1.5707963267948966, "configuration": "driver"},
        [
            {"kind": "wedge", "x": 0.20, "y": 0.20},
            {"kind": "wedge", "x": 0.20, "y": 0.30},
            {"kind": "block", "x": 1.00, "y": 0.20},
        ],
        {
            "drawer1_front": {"x": 0.60, "y": 0.50},
            "drawer1": {"x": 0.60, "y": 0.66, "open_patch": _patch_json(drawer_patch(empty))},
            "drawer1_top": {"x": 0.60, "y": 0.84},
            "drawer2": {"x": 0.60, "y": 0.98},
        },
    )


def write_assets(root: Path = DATA_DIR) -> list:
    root = Path(root)
    written = []

    def dump(rel, text):
        p = root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(text, encoding="utf-8")
        written.append(p)

    write_map(bridge_map(), root / "maps" / "bridge.emap")
    write_map(drawer_map(), root / "maps" / "drawer.emap")
    written += [root / "maps" / "bridge.emap", root / "maps" / "drawer.emap"]
    dump("tasks/bridge.task", json.dumps(BRIDGE_TASK, indent=2) + "\n")
    dump("tasks/drawer.task", json.dumps(DRAWER_TASK, indent=2) + "\n")
    dump("scenarios/bridge-gap.scn", json.dumps(bridge_scenario(), indent=2) + "\n")
    dump("scenarios/drawer.scn", json.dumps(drawer_scenario(False), indent=2) + "\n")
    dump("scenarios/drawer-empty.scn", json.dumps(drawer_scenario(True), indent=2) + "\n")
    return written


if __name__ == "__main__":
    for p in write_assets(Path(sys.argv[1]) if len(sys.argv) > 1 else DATA_DIR):
        print(p)
