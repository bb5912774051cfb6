"""Exhaustive template scan over an elevation map.

Every map cell centre is tried as a template centre under each orientation
of a fixed grid.  A candidate is kept when

* the product of its per-cell likelihoods is strictly greater than
  ``alpha ** M`` (M = number of template cells), and
* its entry cells and exit cells sit on two different traversable regions.

Heights are scored relative to the mean height of the entry region.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .elevation_map import DomainError, ElevationMap, Segmentation, sample_heights, snap_index
from .templates import Constant, FeatureTemplate

__all__ = [
    "CandidatePose",
    "DetectedFeature",
    "CharacterizationResult",
    "NoMatch",
    "orientation_grid",
    "direction",
    "threshold",
    "match_at",
    "characterize",
    "count_candidates",
    "features_to_json",
    "result_to_json",
    "DEFAULT_ALPHA",
    "DEFAULT_ORIENTATIONS",
]

DEFAULT_ALPHA = 0.95
DEFAULT_ORIENTATIONS = 8

_SQRT_HALF = math.sqrt(0.5)
_EXACT_DIRECTIONS = {
    0: (1.0, 0.0),
    1: (_SQRT_HALF, _SQRT_HALF),
    2: (0.0, 1.0),
    3: (-_SQRT_HALF, _SQRT_HALF),
    4: (-1.0, 0.0),
    5: (-_SQRT_HALF, -_SQRT_HALF),
    6: (0.0, -1.0),
    7: (_SQRT_HALF, -_SQRT_HALF),
}


def orientation_grid(n: int = DEFAULT_ORIENTATIONS) -> tuple[float, ...]:
    if n < 1:
        raise ValueError("need at least one orientation")
    return tuple(2.0 * math.pi * k / n for k in range(n))


def direction(theta: float) -> tuple[float, float]:
    """Unit vector for ``theta``; exact for multiples of 45 degrees."""
    eighths = theta / (math.pi / 4.0)
    k = round(eighths)
    if abs(eighths - k) < 1e-9:
        return _EXACT_DIRECTIONS[k % 8]
    return math.cos(theta), math.sin(theta)


def threshold(alpha: float, m: int) -> float:
    # sequential product, bit-identical to a score whose every cell equals alpha
    return math.prod([float(alpha)] * m)


@dataclass(frozen=True, order=True)
class CandidatePose:
    x: float
    y: float
    theta: float


@dataclass(frozen=True)
class DetectedFeature:
    template_name: str
    pose: CandidatePose
    score: float
    region_pair: tuple
    base_height: float

    def sort_key(self):
        return (self.template_name, self.pose.x, self.pose.y, self.pose.theta)

    def to_dict(self) -> dict:
        return {
            "template": self.template_name,
            "x": _fmt(self.pose.x),
            "y": _fmt(self.pose.y),
            "theta": _fmt(self.pose.theta),
            "score": _fmt(self.score),
            "region1": int(self.region_pair[0]),
            "region2": int(self.region_pair[1]),
            "base_height": _fmt(self.base_height),
        }


@dataclass(frozen=True)
class CharacterizationResult:
    features: tuple
    alpha: float = DEFAULT_ALPHA
    region_links: dict = field(default_factory=dict)

    def __post_init__(self):
        feats = tuple(sorted(self.features, key=DetectedFeature.sort_key))
        object.__setattr__(self, "features", feats)
        if not self.region_links:
            links = {}
            for f in feats:
                r1, r2 = links.setdefault(f.template_name, ([], []))
                r1.append(f.region_pair[0])
                r2.append(f.region_pair[1])
            object.__setattr__(
                self, "region_links", {k: (tuple(a), tuple(b)) for k, (a, b) in links.items()}
            )

    def for_template(self, name: str) -> tuple:
        return tuple(f for f in self.features if f.template_name == name)

    def __len__(self):
        return len(self.features)


@dataclass(frozen=True)
class NoMatch:
    reason: str

    def __bool__(self):
        return False


def _fmt(v: float) -> float:
    return float(f"{v:.9g}")


def features_to_json(features: Sequence[DetectedFeature]) -> str:
    return json.dumps({"features": [f.to_dict() for f in features]}, indent=2, sort_keys=False)


def result_to_json(result: CharacterizationResult) -> str:
    return features_to_json(result.features)


# ---------------------------------------------------------------------------


def _world_offsets(template: FeatureTemplate, theta: float) -> tuple[np.ndarray, np.ndarray]:
    c, s = direction(theta)
    off = template.offsets()
    along, lateral = off[:, 0], off[:, 1]
    return along * c - lateral * s, along * s + lateral * c


def _region_lookup(emap: ElevationMap, labels: np.ndarray, xs, ys):
    """Region id of the map cell containing each point (-1 outside or none)."""
    res = emap.resolution
    H, W = emap.shape
    fx = snap_index(xs / res)
    fy = snap_index(ys / res)
    col = np.clip(np.floor(fx).astype(np.intp), 0, W - 1)
    row = np.clip(H - 1 - np.floor(fy).astype(np.intp), 0, H - 1)
    xmax, ymax = emap.extent
    outside = (xs < -1e-9) | (xs > xmax + 1e-9) | (ys < -1e-9) | (ys > ymax + 1e-9)
    return np.where(outside, -1, labels[row, col])


def _majority(ids: np.ndarray) -> np.ndarray:
    """Per-column most frequent non-negative id, ties to the lowest id.

    ``ids`` has shape ``(k, n)``; returns ``(n,)`` with -1 where all are -1.
    """
    k = ids.shape[0]
    best = np.full(ids.shape[1], -1, dtype=np.int64)
    best_count = np.zeros(ids.shape[1], dtype=np.int64)
    for i in range(k):
        cand = ids[i]
        count = (ids == cand[None, :]).sum(axis=0)
        better = (cand >= 0) & ((count > best_count) | ((count == best_count) & ((best < 0) | (cand < best))))
        best = np.where(better, cand, best)
        best_count = np.where(better, count, best_count)
    return best


def _scan(emap, seg, template, theta, xs, ys, thr):
    """Score one template at one orientation for all centres in ``xs``/``ys``.

    Returns ``(accepted_mask, scores, r1, r2, base)`` over the flattened centres.
    """
    dx, dy = _world_offsets(template, theta)
    labels = seg.labels
    means = seg.mean_heights

    entry = np.array(template.entry_cells)
    exit_ = np.array(template.exit_cells)
    r1 = _majority(_region_lookup(emap, labels, xs[None, :] + dx[entry, None], ys[None, :] + dy[entry, None]))
    r2 = _majority(_region_lookup(emap, labels, xs[None, :] + dx[exit_, None], ys[None, :] + dy[exit_, None]))
    ok = (r1 >= 0) & (r2 >= 0) & (r1 != r2)
    base = np.where(r1 >= 0, means[np.maximum(r1, 0)] if len(means) else 0.0, np.nan)

    score = np.ones(xs.shape, dtype=np.float64)
    for i, fn in enumerate(template.grid):
        vals, unknown, outside = sample_heights(emap, xs + dx[i], ys + dy[i])
        ok &= ~outside
        if isinstance(fn, Constant):
            lik = fn.evaluate(vals)
        else:
            ok &= ~unknown
            lik = fn.evaluate(np.where(unknown | outside, 0.0, vals - np.nan_to_num(base)))
        score = score * lik
    accepted = ok & (score > thr)
    return accepted, score, r1, r2, base


def _centres(emap: ElevationMap):
    H, W = emap.shape
    rows, cols = np.divmod(np.arange(H * W), W)
    xs = (cols + 0.5) * emap.resolution
    ys = (H - rows - 0.5) * emap.resolution
    return xs, ys


def characterize(
    emap: ElevationMap,
    segmentation: Segmentation,
    templates: Sequence[FeatureTemplate],
    alpha: float = DEFAULT_ALPHA,
    *,
    n_orientations: int = DEFAULT_ORIENTATIONS,
    maxima_only: bool = False,
    n_jobs: int = 1,
) -> CharacterizationResult:
    """Find every pose at which a template matches and links two regions."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if segmentation.labels.shape != emap.shape:
        raise ValueError("segmentation does not belong to this map")
    if not templates:
        return CharacterizationResult((), alpha)

    xs, ys = _centres(emap)
    thetas = orientation_grid(n_orientations)
    jobs = [(t, th) for t in templates for th in thetas]

    def run(job):
        template, theta = job
        thr = threshold(alpha, template.n_cells)
        accepted, score, r1, r2, base = _scan(emap, segmentation, template, theta, xs, ys, thr)
        out = []
        for idx in np.flatnonzero(accepted):
            out.append(
                DetectedFeature(
                    template.name,
                    CandidatePose(float(xs[idx]), float(ys[idx]), theta),
                    float(score[idx]),
                    (int(r1[idx]), int(r2[idx])),
                    float(base[idx]),
                )
            )
        return out

    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            chunks = list(pool.map(run, jobs))
    else:
        chunks = [run(j) for j in jobs]
    features = [f for chunk in chunks for f in chunk]
    if maxima_only:
        features = _local_maxima(features, emap.resolution)
    return CharacterizationResult(tuple(features), alpha)


def _local_maxima(features, resolution):
    """Drop features beaten by a neighbour (same template and regions, within one cell)."""
    keep = []
    reach = resolution * 1.5
    for f in features:
        beaten = any(
            g.score > f.score
            and g.template_name == f.template_name
            and g.region_pair == f.region_pair
            and abs(g.pose.x - f.pose.x) <= reach
            and abs(g.pose.y - f.pose.y) <= reach
            for g in features
        )
        if not beaten:
            keep.append(f)
    return keep


def match_at(
    emap: ElevationMap,
    template: FeatureTemplate,
    pose: CandidatePose,
    base_height: float,
):
    """Score a single pose; returns the product or :class:`NoMatch`."""
    if not emap.contains(pose.x, pose.y):
        raise DomainError(f"pose ({pose.x}, {pose.y}) outside the map")
    dx, dy = _world_offsets(template, pose.theta)
    score = 1.0
    for i, fn in enumerate(template.grid):
        val, unknown, outside = sample_heights(emap, pose.x + dx[i], pose.y + dy[i])
        if outside:
            return NoMatch(f"cell {i} falls outside the map")
        if isinstance(fn, Constant):
            score *= float(fn.evaluate(0.0))
            continue
        if unknown:
            return NoMatch(f"cell {i} samples an Unknown height")
        score *= float(fn.evaluate(float(val) - base_height))
    return score


def count_candidates(emap: ElevationMap, templates: Sequence, n_orientations: int = DEFAULT_ORIENTATIONS) -> int:
    return emap.width * emap.height * n_orientations * len(templates)


def feature_direction(feature: DetectedFeature) -> tuple[float, float]:
    return direction(feature.pose.theta)


def nearest(features: Sequence[DetectedFeature], x: float, y: float) -> Optional[DetectedFeature]:
    if not features:
        return None
    return min(features, key=lambda f: (math.hypot(f.pose.x - x, f.pose.y - y), f.sort_key()))
