"""Brute-force reference for the characterization scan, plus a map family.

Nothing here calls into :mod:`envaug.characterizer` or the map sampler; the
sampling, likelihood formulas, region linking and thresholding are written
out again from their definitions, one candidate at a time.  Only the plain
data types (maps, segmentations, templates, features) are shared.

Run ``python -m envaug.oracle`` to print an :class:`OracleReport` as JSON.
"""

from __future__ import annotations

import itertools
import json
import math
import sys
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .characterizer import CandidatePose, CharacterizationResult, DetectedFeature
from .elevation_map import ElevationMap, Segmentation
from .templates import Constant, FeatureTemplate, GaussianKernel, LogisticFall, LogisticRise

MAX_ORACLE_DIM = 64
_EPS = 1e-9


# -- likelihoods, straight from the formulas ---------------------------------


def _likelihood(fn, h: float) -> float:
    if isinstance(fn, GaussianKernel):
        v = math.exp(-((h - fn.mu) ** 2) / (2.0 * fn.sigma ** 2))
    elif isinstance(fn, LogisticRise):
        z = fn.k * (h - fn.x0)
        v = 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))
    elif isinstance(fn, LogisticFall):
        z = -fn.k * (h - fn.x0)
        v = 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))
    elif isinstance(fn, Constant):
        v = fn.p
    else:
        raise TypeError(f"unknown likelihood {fn!r}")
    return max(v, 1e-300)


# -- geometry -----------------------------------------------------------------


def _snap(f: float) -> float:
    r = round(f)
    return float(r) if abs(f - r) < _EPS else f


def _trig(theta: float) -> tuple[float, float]:
    c, s = math.cos(theta), math.sin(theta)
    out = []
    for v in (c, s):
        if abs(v) < 1e-12:
            v = 0.0
        elif abs(abs(v) - 1.0) < 1e-12:
            v = math.copysign(1.0, v)
        elif abs(abs(v) - math.sqrt(0.5)) < 1e-12:
            v = math.copysign(math.sqrt(0.5), v)
        out.append(v)
    return out[0], out[1]


def _inside(emap, x, y) -> bool:
    return -_EPS <= x <= emap.width * emap.resolution + _EPS and -_EPS <= y <= emap.height * emap.resolution + _EPS


def _cell_of(emap, x, y):
    # boundary points go to the +x column and the +y row
    col = math.floor(_snap(x / emap.resolution))
    row = emap.height - 1 - math.floor(_snap(y / emap.resolution))
    return min(max(row, 0), emap.height - 1), min(max(col, 0), emap.width - 1)


def _bilinear(emap, grid, x, y):
    """Height at (x, y) or None when any cell with positive weight is Unknown."""
    W, H, res = emap.width, emap.height, emap.resolution
    u = min(max(_snap(x / res - 0.5), 0.0), W - 1.0)
    v = min(max(_snap(H - 0.5 - y / res), 0.0), H - 1.0)
    c0, r0 = int(math.floor(u)), int(math.floor(v))
    tx, ty = u - c0, v - r0
    total = 0.0
    for r, wr in ((r0, 1.0 - ty), (min(r0 + 1, H - 1), ty)):
        for c, wc in ((c0, 1.0 - tx), (min(c0 + 1, W - 1), tx)):
            w = wr * wc
            if w <= 0.0:
                continue
            h = grid[r][c]
            if h != h:
                return None
            total += w * h
    return total


def _end_region(emap, labels, points):
    ids = []
    for x, y in points:
        if not _inside(emap, x, y):
            ids.append(-1)
            continue
        r, c = _cell_of(emap, x, y)
        ids.append(int(labels[r][c]))
    counts = {}
    for i in ids:
        if i >= 0:
            counts[i] = counts.get(i, 0) + 1
    if not counts:
        return -1
    return min(counts, key=lambda i: (-counts[i], i))


def oracle_characterize(
    emap: ElevationMap,
    segmentation: Segmentation,
    templates,
    alpha: float,
    n_orientations: int = 8,
    on_candidate=None,
) -> CharacterizationResult:
    """Triple loop over templates, orientations and cell centres.

    ``on_candidate(name, x, y, theta)`` is called for every pose visited.
    """
    if emap.width > MAX_ORACLE_DIM or emap.height > MAX_ORACLE_DIM:
        raise ValueError(f"oracle refuses maps larger than {MAX_ORACLE_DIM}x{MAX_ORACLE_DIM}")
    labels = segmentation.labels.tolist()
    grid = emap.heights.tolist()
    means = [r.mean_height for r in segmentation.regions]
    features = []
    for t in templates:
        m = t.rows * t.cols
        thr = 1.0
        for _ in range(m):
            thr *= alpha
        local = []
        for i in range(m):
            a = (i // t.cols - (t.rows - 1) / 2.0) * t.cell_size
            b = (i % t.cols - (t.cols - 1) / 2.0) * t.cell_size
            local.append((a, b))
        for k in range(n_orientations):
            theta = 2.0 * math.pi * k / n_orientations
            c, s = _trig(theta)
            rot = [(a * c - b * s, a * s + b * c) for a, b in local]
            for row in range(emap.height):
                for col in range(emap.width):
                    x = (col + 0.5) * emap.resolution
                    y = (emap.height - row - 0.5) * emap.resolution
                    if on_candidate is not None:
                        on_candidate(t.name, x, y, theta)
                    pts = [(x + ox, y + oy) for ox, oy in rot]
                    r1 = _end_region(emap, labels, [pts[i] for i in t.entry_cells])
                    r2 = _end_region(emap, labels, [pts[i] for i in t.exit_cells])
                    if r1 < 0 or r2 < 0 or r1 == r2:
                        continue
                    base = means[r1]
                    score = 1.0
                    for i, fn in enumerate(t.grid):
                        px, py = pts[i]
                        if not _inside(emap, px, py):
                            score = None
                            break
                        h = _bilinear(emap, grid, px, py)
                        if isinstance(fn, Constant):
                            score *= _likelihood(fn, 0.0)
                            continue
                        if h is None:
                            score = None
                            break
                        score *= _likelihood(fn, h - base)
                    if score is not None and score > thr:
                        features.append(DetectedFeature(t.name, CandidatePose(x, y, theta), score, (r1, r2), base))
    return CharacterizationResult(tuple(features), alpha)


# -- deterministic map family --------------------------------------------------


@dataclass(frozen=True)
class MapSpec:
    """Integer recipe for a synthetic map.

    ``plateaus`` bands are laid side by side across the split axis; band ``i``
    stands ``i * step_units`` units of 0.04 m above the first.  Consecutive
    bands are separated by ``gap_cells`` Unknown cells.
    """

    rows: int
    cols: int
    plateaus: int = 1
    step_units: int = 0
    gap_cells: int = 0
    vertical_split: bool = True
    resolution_units: int = 1
    base_units: int = 0

    @property
    def resolution(self) -> float:
        return 0.04 * self.resolution_units


def gen_random_map(spec: MapSpec) -> ElevationMap:
    if not (1 <= spec.rows <= MAX_ORACLE_DIM and 1 <= spec.cols <= MAX_ORACLE_DIM):
        raise ValueError("dimensions must be within 1..64")
    n = spec.cols if spec.vertical_split else spec.rows
    usable = n - spec.gap_cells * (spec.plateaus - 1)
    if usable < spec.plateaus:
        raise ValueError("bands do not fit")
    band = [usable // spec.plateaus + (1 if i < usable % spec.plateaus else 0) for i in range(spec.plateaus)]
    profile = []
    for i, w in enumerate(band):
        if i:
            profile += [math.nan] * spec.gap_cells
        profile += [round(0.04 * (spec.base_units + i * spec.step_units), 10)] * w
    line = np.array(profile)
    if spec.vertical_split:
        grid = np.tile(line, (spec.rows, 1))
    else:
        grid = np.tile(line[::-1, None], (1, spec.cols))
    return ElevationMap(spec.resolution, grid)


def enumerate_map_family() -> Iterator[MapSpec]:
    """The fixed family used for oracle equivalence (213 maps)."""
    for plateaus, step, gap, vertical, res_units, size, base in itertools.product(
        (1, 2, 3), (0, 2, 4), (0, 4), (True, False), (1, 2), ((9, 12), (14, 16)), (0, 5)
    ):
        if plateaus == 1 and (step or gap):
            continue
        rows, cols = size if vertical else size[::-1]
        yield MapSpec(rows, cols, plateaus, step, gap, vertical, res_units, base)
    # a handful of larger maps, including one at the 64x64 limit
    for plateaus, step, gap in ((2, 4, 0), (2, 0, 4), (3, 2, 2), (2, 2, 0)):
        yield MapSpec(24, 30, plateaus, step, gap, True, 1)
    yield MapSpec(64, 64, 2, 4, 4, True, 1)


# -- comparison ----------------------------------------------------------------


@dataclass
class OracleReport:
    case_count: int = 0
    mismatches: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.mismatches

    def to_json(self) -> str:
        return json.dumps({"case_count": self.case_count, "mismatches": self.mismatches, "passed": self.passed}, indent=2)


def _key(f: DetectedFeature):
    return (f.template_name, f.pose.x, f.pose.y, f.pose.theta, f.region_pair)


def compare(expected: CharacterizationResult, actual: CharacterizationResult, tol: float = 1e-12):
    """List of human-readable differences (empty when equal)."""
    exp = {_key(f): f for f in expected.features}
    act = {_key(f): f for f in actual.features}
    diffs = []
    for k in sorted(exp.keys() - act.keys()):
        diffs.append(f"missing {k}")
    for k in sorted(act.keys() - exp.keys()):
        diffs.append(f"unexpected {k}")
    for k in sorted(exp.keys() & act.keys()):
        a, b = exp[k], act[k]
        if abs(a.score - b.score) > tol or abs(a.base_height - b.base_height) > tol:
            diffs.append(f"score {k}: {a.score!r} vs {b.score!r}")
    return diffs


def run_oracle_report(templates, alphas=(0.90, 0.95, 0.99), seg_params=None) -> OracleReport:
    from .characterizer import characterize
    from .elevation_map import SegmentationParams, segment_traversable

    seg_params = seg_params or SegmentationParams(0.02, 1)
    report = OracleReport()
    for spec in enumerate_map_family():
        emap = gen_random_map(spec)
        seg = segment_traversable(emap, seg_params)
        for alpha in alphas:
            expected = oracle_characterize(emap, seg, templates, alpha)
            actual = characterize(emap, seg, templates, alpha)
            report.case_count += 1
            for d in compare(expected, actual):
                report.mismatches.append({"map": spec.__dict__, "alpha": alpha, "diff": d})
    return report


def main(argv=None) -> int:
    from .assets import shipped_templates

    report = run_oracle_report(list(shipped_templates().values()))
    sys.stdout.write(report.to_json() + "\n")
    return 0 if report.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
