"""``envaug`` command line.

Exit codes: 0 success, 1 domain failure (mission Infeasible or Stuck,
scenario violations), 2 usage, parse or I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .assets import DESIGN_LIBRARY, STRUCTURE_LIBRARY
from .characterizer import characterize, result_to_json
from .design_library import read_design_library
from .elevation_map import MapFormatError, SegmentationParams, read_map, segment_traversable
from .planner import SynthesisError, read_task, synthesize
from .simulator import ScenarioError, initial_world, load_scenario, render, render_ppm, render_map, run_mission, validate_scenario
from .structures import read_structure_library
from .templates import TemplateFormatError, read_template


class UsageError(Exception):
    pass


def _emit(text: str, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def cmd_segment(args) -> int:
    emap = read_map(args.map)
    seg = segment_traversable(emap, SegmentationParams(args.height_tolerance, args.min_region_cells))
    doc = {
        "width": emap.width,
        "height": emap.height,
        "resolution": emap.resolution,
        "regions": [
            {"id": r.id, "cells": len(r.cells), "mean_height": float(f"{r.mean_height:.9g}")} for r in seg.regions
        ],
        "labels": seg.labels.tolist(),
    }
    _emit(_dumps(doc), args.out)
    return 0


def cmd_characterize(args) -> int:
    emap = read_map(args.map)
    templates = [read_template(p) for p in args.template]
    seg = segment_traversable(emap, SegmentationParams(args.height_tolerance, 1))
    result = characterize(
        emap,
        seg,
        templates,
        args.alpha,
        n_orientations=args.orientations,
        maxima_only=args.maxima_only,
        n_jobs=args.threads,
    )
    _emit(result_to_json(result) + "\n", args.out)
    return 0


def cmd_plan(args) -> int:
    if args.scenario:
        scn = load_scenario(args.scenario)
        task, library, structures, targets = scn.task, scn.design_library, scn.structures, tuple(scn.targets)
    elif args.task:
        task = read_task(args.task)
        library = read_design_library(args.design_library)
        structures = read_structure_library(args.structure_library)
        targets = None
    else:
        raise UsageError("plan needs --scenario or --task")
    ctrl = synthesize(task, library, structures, targets)
    text = ctrl.to_dot() if args.format == "dot" else _dumps(ctrl.to_dict())
    _emit(text, args.out)
    return 0


def cmd_simulate(args) -> int:
    scn = load_scenario(args.scenario)
    frames = Path(args.frames) if args.frames else None
    on_step = None
    if frames is not None:
        frames.mkdir(parents=True, exist_ok=True)

        def on_step(rec, world):
            (frames / f"frame_{rec.step:05d}.txt").write_text(render(world), encoding="utf-8")

    result = run_mission(scn, step_budget=args.budget, on_step=on_step)
    if args.trace:
        Path(args.trace).write_text(result.trace_jsonl(), encoding="utf-8")
    _emit(result.to_json() + "\n", args.out)
    return 0 if result.success else 1


def cmd_render(args) -> int:
    if args.scenario:
        world = initial_world(load_scenario(args.scenario))
    elif args.map:
        _emit(_render_doc(render_map(read_map(args.map)), args), args.out)
        return 0
    else:
        raise UsageError("render needs --scenario or --map")
    if args.ppm:
        Path(args.ppm).write_bytes(render_ppm(world, args.scale))
    _emit(_render_doc(render(world), args), args.out)
    return 0


def _render_doc(text: str, args) -> str:
    if args.format == "json":
        rows = text.splitlines()
        return _dumps({"height": len(rows), "width": len(rows[0]) if rows else 0, "rows": rows})
    return text


def cmd_validate(args) -> int:
    violations = validate_scenario(args.scenario)
    doc = {
        "scenario": str(args.scenario),
        "violations": violations,
        "summary": f"{len(violations)} violation{'s' if len(violations) != 1 else ''}",
    }
    _emit(_dumps(doc), args.out)
    return 0 if not violations else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="envaug", description="Terrain characterization and augmentation planning.")
    p.add_argument(
        "--version", action="version", version=json.dumps({"name": "envaug", "version": __version__})
    )
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("segment", help="split a map into flat traversable regions")
    s.add_argument("--map", required=True)
    s.add_argument("--height-tolerance", type=float, default=0.02)
    s.add_argument("--min-region-cells", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_segment)

    s = sub.add_parser("characterize", help="scan a map for feature templates")
    s.add_argument("--map", required=True)
    s.add_argument("--template", action="append", required=True)
    s.add_argument("--alpha", type=float, default=0.95)
    s.add_argument("--orientations", type=int, default=8)
    s.add_argument("--height-tolerance", type=float, default=0.02)
    s.add_argument("--maxima-only", action="store_true")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--out")
    s.set_defaults(func=cmd_characterize)

    s = sub.add_parser("plan", help="synthesize a controller for a task")
    s.add_argument("--scenario")
    s.add_argument("--task")
    s.add_argument("--design-library", default=str(DESIGN_LIBRARY))
    s.add_argument("--structure-library", default=str(STRUCTURE_LIBRARY))
    s.add_argument("--format", choices=("json", "dot"), default="json")
    s.add_argument("--out")
    s.set_defaults(func=cmd_plan)

    s = sub.add_parser("simulate", help="run a scenario's mission")
    s.add_argument("--scenario", required=True)
    s.add_argument("--trace")
    s.add_argument("--frames")
    s.add_argument("--budget", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("render", help="draw a map or a scenario's start state")
    s.add_argument("--scenario")
    s.add_argument("--map")
    s.add_argument("--ppm")
    s.add_argument("--scale", type=int, default=4)
    s.add_argument("--format", choices=("text", "json"), default="text")
    s.add_argument("--out")
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("validate", help="check a scenario's cross-references")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (OSError, ValueError, MapFormatError, TemplateFormatError, ScenarioError, SynthesisError, KeyError) as exc:
        sys.stderr.write(f"envaug {args.command}: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
