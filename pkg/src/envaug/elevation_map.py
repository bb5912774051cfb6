"""2.5D elevation maps: storage, text I/O, sampling, segmentation and patching.

Heights are stored as a ``(height, width)`` float array in meters with NaN
marking Unknown cells.  Row 0 is the top of the map (max y); column 0 is the
left edge (x = 0).  The centre of cell ``(row, col)`` sits at::

    x = (col + 0.5) * resolution
    y = (height - row - 0.5) * resolution
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

__all__ = [
    "ElevationMap",
    "Region",
    "Segmentation",
    "SegmentationParams",
    "HeightPatch",
    "MapFormatError",
    "DomainError",
    "load_map",
    "dump_map",
    "read_map",
    "write_map",
    "sample_height",
    "sample_heights",
    "segment_traversable",
    "apply_patch",
    "snap_index",
]

# Fractional grid coordinates closer than this to an integer are snapped onto it.
SNAP_EPS = 1e-9
# Slack added to height comparisons so that 0.06 - 0.02 still counts as 0.04.
HEIGHT_EPS = 1e-9


class MapFormatError(ValueError):
    """Raised when map text does not follow the ``.emap`` format."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DomainError(ValueError):
    """Raised for queries or mutations outside the map extent."""


def snap_index(f):
    """Snap values within ``SNAP_EPS`` of an integer onto that integer."""
    r = np.round(f)
    return np.where(np.abs(f - r) < SNAP_EPS, r, f)


@dataclass(frozen=True, eq=False)
class ElevationMap:
    resolution: float
    heights: np.ndarray

    def __post_init__(self):
        res = float(self.resolution)
        if not (res > 0 and math.isfinite(res)):
            raise ValueError(f"resolution must be a positive finite number, got {self.resolution!r}")
        arr = np.array(self.heights, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ValueError(f"heights must be a non-empty 2-D array, got shape {arr.shape}")
        if np.isinf(arr).any():
            raise ValueError("heights must be finite or NaN (Unknown)")
        arr.setflags(write=False)
        object.__setattr__(self, "resolution", res)
        object.__setattr__(self, "heights", arr)

    @property
    def width(self) -> int:
        return self.heights.shape[1]

    @property
    def height(self) -> int:
        return self.heights.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.heights.shape

    @property
    def extent(self) -> tuple[float, float]:
        """World size ``(x_max, y_max)`` in meters."""
        return self.width * self.resolution, self.height * self.resolution

    @property
    def known(self) -> np.ndarray:
        return ~np.isnan(self.heights)

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.height and 0 <= col < self.width

    def contains(self, x: float, y: float) -> bool:
        xmax, ymax = self.extent
        return -SNAP_EPS <= x <= xmax + SNAP_EPS and -SNAP_EPS <= y <= ymax + SNAP_EPS

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (col + 0.5) * self.resolution, (self.height - row - 0.5) * self.resolution

    def cell_at(self, x: float, y: float) -> tuple[int, int]:
        """Cell containing a world point.

        A point lying exactly on a cell boundary belongs to the cell on its
        +x side (column) and +y side (row); points on the outer edge are
        clamped inward.
        """
        if not self.contains(x, y):
            raise DomainError(f"point ({x}, {y}) lies outside the map extent {self.extent}")
        fx = float(snap_index(x / self.resolution))
        fy = float(snap_index(y / self.resolution))
        col = min(max(int(math.floor(fx)), 0), self.width - 1)
        row = min(max(self.height - 1 - int(math.floor(fy)), 0), self.height - 1)
        return row, col

    def height_at(self, row: int, col: int) -> Optional[float]:
        h = self.heights[row, col]
        return None if math.isnan(h) else float(h)

    def with_heights(self, heights: np.ndarray) -> "ElevationMap":
        return ElevationMap(self.resolution, heights)

    def __eq__(self, other):
        if not isinstance(other, ElevationMap):
            return NotImplemented
        return (
            self.resolution == other.resolution
            and self.shape == other.shape
            and bool(np.array_equal(self.heights, other.heights, equal_nan=True))
        )

    def __hash__(self):
        return hash((self.resolution, self.shape, self.heights.tobytes()))

    def __repr__(self):
        return f"ElevationMap(resolution={self.resolution}, width={self.width}, height={self.height})"


# ---------------------------------------------------------------------------
# text format


def _float_token(value: float) -> str:
    if math.isnan(value):
        return "nan"
    # repr gives the shortest string that round-trips
    return repr(float(value))


def dump_map(emap: ElevationMap) -> str:
    lines = [f"resolution {_float_token(emap.resolution)}", f"{emap.width} {emap.height}"]
    for row in emap.heights:
        lines.append(" ".join(_float_token(v) for v in row))
    return "\n".join(lines) + "\n"


def load_map(text: str) -> ElevationMap:
    """Parse ``.emap`` text into an :class:`ElevationMap`."""
    lines = [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())]
    lines = [(n, ln) for n, ln in lines if ln and not ln.startswith("#")]
    if len(lines) < 2:
        raise MapFormatError("missing header", lines[0][0] if lines else 1)

    n, head = lines[0]
    parts = head.split()
    if len(parts) != 2 or parts[0] != "resolution":
        raise MapFormatError("expected 'resolution <float>'", n)
    try:
        resolution = float(parts[1])
    except ValueError:
        raise MapFormatError(f"bad resolution {parts[1]!r}", n) from None
    if not (resolution > 0 and math.isfinite(resolution)):
        raise MapFormatError("resolution must be positive", n)

    n, dims = lines[1]
    parts = dims.split()
    try:
        width, height = (int(p) for p in parts)
    except ValueError:
        raise MapFormatError("expected '<width> <height>'", n) from None
    if width <= 0 or height <= 0:
        raise MapFormatError("width and height must be positive", n)

    rows = lines[2:]
    if len(rows) != height:
        at = rows[height][0] if len(rows) > height else (rows[-1][0] + 1 if rows else n + 1)
        raise MapFormatError(f"expected {height} rows, found {len(rows)}", at)

    heights = np.empty((height, width))
    for r, (n, ln) in enumerate(rows):
        tokens = ln.split()
        if len(tokens) != width:
            raise MapFormatError(f"expected {width} values, found {len(tokens)}", n)
        for c, tok in enumerate(tokens):
            if tok.lower() == "nan":
                heights[r, c] = np.nan
                continue
            try:
                v = float(tok)
            except ValueError:
                raise MapFormatError(f"non-numeric token {tok!r}", n) from None
            if not math.isfinite(v):
                raise MapFormatError(f"non-finite height {tok!r}", n)
            heights[r, c] = v
    return ElevationMap(resolution, heights)


def read_map(path) -> ElevationMap:
    with open(path, encoding="utf-8") as fh:
        return load_map(fh.read())


def write_map(emap: ElevationMap, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_map(emap))


# ---------------------------------------------------------------------------
# sampling


def sample_heights(emap: ElevationMap, xs, ys):
    """Vectorised bilinear sampling.

    Returns ``(values, unknown, outside)`` arrays broadcast from ``xs``/``ys``.
    A sample is Unknown when any cell with a non-zero interpolation weight is
    Unknown; ``values`` is NaN there and at points outside the extent.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    xs, ys = np.broadcast_arrays(xs, ys)
    res = emap.resolution
    W, H = emap.width, emap.height
    xmax, ymax = emap.extent
    outside = (xs < -SNAP_EPS) | (xs > xmax + SNAP_EPS) | (ys < -SNAP_EPS) | (ys > ymax + SNAP_EPS)

    u = np.clip(snap_index(xs / res - 0.5), 0.0, W - 1)
    v = np.clip(snap_index(H - 0.5 - ys / res), 0.0, H - 1)
    c0 = np.floor(u).astype(np.intp)
    r0 = np.floor(v).astype(np.intp)
    tx = u - c0
    ty = v - r0
    c1 = np.minimum(c0 + 1, W - 1)
    r1 = np.minimum(r0 + 1, H - 1)

    grid = emap.heights
    filled = np.nan_to_num(grid, nan=0.0)
    unk = np.isnan(grid)

    w00 = (1 - tx) * (1 - ty)
    w01 = tx * (1 - ty)
    w10 = (1 - tx) * ty
    w11 = tx * ty
    values = (
        w00 * filled[r0, c0] + w01 * filled[r0, c1] + w10 * filled[r1, c0] + w11 * filled[r1, c1]
    )
    unknown = (
        ((w00 > 0) & unk[r0, c0])
        | ((w01 > 0) & unk[r0, c1])
        | ((w10 > 0) & unk[r1, c0])
        | ((w11 > 0) & unk[r1, c1])
    )
    values = np.where(unknown | outside, np.nan, values)
    return values, unknown & ~outside, outside


def sample_height(emap: ElevationMap, x: float, y: float) -> Optional[float]:
    """Bilinear height at world point ``(x, y)``; ``None`` when Unknown."""
    if not emap.contains(x, y):
        raise DomainError(f"point ({x}, {y}) lies outside the map extent {emap.extent}")
    value, unknown, _ = sample_heights(emap, x, y)
    if unknown:
        return None
    return float(value)


# ---------------------------------------------------------------------------
# segmentation


@dataclass(frozen=True)
class SegmentationParams:
    height_tolerance: float = 0.02
    min_region_cells: int = 1

    def __post_init__(self):
        if not self.height_tolerance > 0:
            raise ValueError("height_tolerance must be > 0")
        if int(self.min_region_cells) < 1:
            raise ValueError("min_region_cells must be >= 1")

    @classmethod
    def for_footprint(cls, footprint: tuple[float, float], resolution: float, height_tolerance=0.02):
        area = footprint[0] * footprint[1]
        cells = max(1, math.ceil(area / (resolution * resolution) - 1e-9))
        return cls(height_tolerance, cells)


@dataclass(frozen=True)
class Region:
    id: int
    cells: frozenset
    mean_height: float

    def __len__(self):
        return len(self.cells)


@dataclass(frozen=True, eq=False)
class Segmentation:
    """Regions plus a ``(height, width)`` label grid (-1 = no region)."""

    regions: tuple
    labels: np.ndarray = field(repr=False)

    def __post_init__(self):
        labels = np.array(self.labels, dtype=np.int64, copy=True)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "regions", tuple(self.regions))

    def cell_to_region(self, row: int, col: int) -> Optional[int]:
        rid = int(self.labels[row, col])
        return None if rid < 0 else rid

    def region(self, rid: int) -> Region:
        return self.regions[rid]

    @property
    def mean_heights(self) -> np.ndarray:
        return np.array([r.mean_height for r in self.regions], dtype=np.float64)

    def partition(self) -> set:
        """Region cell-sets, independent of id numbering."""
        return {r.cells for r in self.regions}

    def __eq__(self, other):
        if not isinstance(other, Segmentation):
            return NotImplemented
        return self.regions == other.regions and np.array_equal(self.labels, other.labels)


def segment_traversable(emap: ElevationMap, params: SegmentationParams = SegmentationParams()) -> Segmentation:
    """Split the map into flat 4-connected regions.

    Neighbouring known cells join when their heights differ by at most
    ``params.height_tolerance``.  Components smaller than
    ``params.min_region_cells`` are dropped.  Seeds are taken in row-major
    order so ids are stable.
    """
    H, W = emap.shape
    grid = emap.heights
    tol = params.height_tolerance + HEIGHT_EPS
    visited = np.isnan(grid).copy()
    labels = np.full((H, W), -1, dtype=np.int64)
    rows = grid.tolist()
    regions = []

    for r0 in range(H):
        for c0 in range(W):
            if visited[r0, c0]:
                continue
            visited[r0, c0] = True
            comp = [(r0, c0)]
            queue = deque(comp)
            while queue:
                r, c = queue.popleft()
                h = rows[r][c]
                for rr, cc in ((r - 1, c), (r, c + 1), (r + 1, c), (r, c - 1)):
                    if 0 <= rr < H and 0 <= cc < W and not visited[rr, cc]:
                        if abs(rows[rr][cc] - h) <= tol:
                            visited[rr, cc] = True
                            comp.append((rr, cc))
                            queue.append((rr, cc))
            if len(comp) < params.min_region_cells:
                continue
            rid = len(regions)
            idx = tuple(np.array(comp).T)
            labels[idx] = rid
            regions.append(Region(rid, frozenset(comp), float(np.mean(grid[idx]))))
    return Segmentation(tuple(regions), labels)


# ---------------------------------------------------------------------------
# patches


@dataclass(frozen=True, eq=False)
class HeightPatch:
    """Heights anchored at map cell ``(row, col)``; NaN entries are not covered."""

    row: int
    col: int
    heights: np.ndarray

    def __post_init__(self):
        arr = np.array(self.heights, dtype=np.float64, copy=True)
        if arr.size == 0:
            arr = arr.reshape(0, 0)
        if arr.ndim != 2:
            raise ValueError("patch heights must be 2-D")
        covered = arr[~np.isnan(arr)]
        if np.isinf(covered).any() or (covered < 0).any():
            raise ValueError("patch heights must be finite and >= 0")
        arr.setflags(write=False)
        object.__setattr__(self, "heights", arr)

    @classmethod
    def empty(cls) -> "HeightPatch":
        return cls(0, 0, np.empty((0, 0)))

    @classmethod
    def from_cells(cls, cells: dict) -> "HeightPatch":
        if not cells:
            return cls.empty()
        rs = [r for r, _ in cells]
        cs = [c for _, c in cells]
        r0, c0 = min(rs), min(cs)
        arr = np.full((max(rs) - r0 + 1, max(cs) - c0 + 1), np.nan)
        for (r, c), h in cells.items():
            arr[r - r0, c - c0] = h
        return cls(r0, c0, arr)

    def cells(self) -> dict:
        out = {}
        for i, j in zip(*np.nonzero(~np.isnan(self.heights))):
            out[(self.row + int(i), self.col + int(j))] = float(self.heights[i, j])
        return out

    def footprint(self) -> frozenset:
        return frozenset(self.cells())

    @property
    def is_empty(self) -> bool:
        return not (~np.isnan(self.heights)).any()


def apply_patch(emap: ElevationMap, patch: HeightPatch) -> ElevationMap:
    """Return a new map where covered cells take ``max(existing, patch)``.

    Unknown cells under the patch take the patch height.
    """
    if patch.is_empty:
        return emap
    ph, pw = patch.heights.shape
    if patch.row < 0 or patch.col < 0 or patch.row + ph > emap.height or patch.col + pw > emap.width:
        raise DomainError(
            f"patch at ({patch.row}, {patch.col}) size {ph}x{pw} exceeds map {emap.height}x{emap.width}"
        )
    out = emap.heights.copy()
    window = out[patch.row : patch.row + ph, patch.col : patch.col + pw]
    covered = ~np.isnan(patch.heights)
    window[covered] = np.fmax(window[covered], patch.heights[covered])
    return emap.with_heights(out)


def region_cells_union(seg: Segmentation, ids: Iterable[int]) -> frozenset:
    out = set()
    for rid in ids:
        out |= seg.regions[rid].cells
    return frozenset(out)
