"""Locations of the data files shipped with the package."""

from __future__ import annotations

from pathlib import Path

DATA_DIR = Path(__file__).resolve().parent / "data"
TEMPLATE_DIR = DATA_DIR / "templates"
SCENARIO_DIR = DATA_DIR / "scenarios"
SCHEMA_DIR = DATA_DIR / "schemas"

STRUCTURE_LIBRARY = DATA_DIR / "library.slib"
DESIGN_LIBRARY = DATA_DIR / "design.dlib"


def data_path(*parts) -> Path:
    return DATA_DIR.joinpath(*parts)


def shipped_templates() -> dict:
    from .templates import read_template

    out = {}
    for path in sorted(TEMPLATE_DIR.glob("*.ftpl")):
        t = read_template(path)
        out[t.name] = t
    return out


def scenario_path(name: str) -> Path:
    return SCENARIO_DIR / f"{name}.scn"
