"""scikit-learn style wrappers around segmentation and characterization.

``X`` is an :class:`~envaug.elevation_map.ElevationMap` or a 2-D array of
heights (NaN = Unknown), in which case ``resolution`` supplies the cell size.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .characterizer import DEFAULT_ALPHA, DEFAULT_ORIENTATIONS, characterize
from .elevation_map import ElevationMap, SegmentationParams, segment_traversable
from .templates import FeatureTemplate


def check_elevation_map(X, resolution: float = 0.04) -> ElevationMap:
    """Coerce ``X`` to an :class:`ElevationMap`, validating shape and values."""
    if isinstance(X, ElevationMap):
        return X
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2 or 0 in arr.shape:
        raise ValueError(f"expected a non-empty 2-D height grid, got shape {arr.shape}")
    if np.isinf(arr).any():
        raise ValueError("heights must be finite or NaN")
    return ElevationMap(float(resolution), arr)


def check_templates(templates) -> tuple:
    if templates is None:
        return ()
    if isinstance(templates, FeatureTemplate):
        templates = [templates]
    out = tuple(templates)
    for t in out:
        if not isinstance(t, FeatureTemplate):
            raise TypeError(f"expected FeatureTemplate, got {type(t).__name__}")
    return out


class TerrainSegmenter(TransformerMixin, BaseEstimator):
    """Segment a map into flat regions; ``transform`` returns the label grid."""

    def __init__(self, height_tolerance: float = 0.02, min_region_cells: int = 1, resolution: float = 0.04):
        self.height_tolerance = height_tolerance
        self.min_region_cells = min_region_cells
        self.resolution = resolution

    def _params(self) -> SegmentationParams:
        return SegmentationParams(self.height_tolerance, self.min_region_cells)

    def fit(self, X, y=None):
        emap = check_elevation_map(X, self.resolution)
        self.segmentation_ = segment_traversable(emap, self._params())
        self.n_regions_ = len(self.segmentation_.regions)
        self.shape_ = emap.shape
        return self

    def transform(self, X):
        check_is_fitted(self, "segmentation_")
        emap = check_elevation_map(X, self.resolution)
        return segment_traversable(emap, self._params()).labels.copy()


class FeatureCharacterizer(BaseEstimator):
    """Template scan as an estimator.

    ``fit`` stores the templates; ``predict`` returns the detected features
    of a map, ``score_map`` the best score per cell.
    """

    def __init__(
        self,
        templates=None,
        alpha: float = DEFAULT_ALPHA,
        n_orientations: int = DEFAULT_ORIENTATIONS,
        height_tolerance: float = 0.02,
        resolution: float = 0.04,
        n_jobs: int = 1,
    ):
        self.templates = templates
        self.alpha = alpha
        self.n_orientations = n_orientations
        self.height_tolerance = height_tolerance
        self.resolution = resolution
        self.n_jobs = n_jobs

    def fit(self, X=None, y=None):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if int(self.n_orientations) < 1:
            raise ValueError("n_orientations must be >= 1")
        self.templates_ = check_templates(self.templates)
        return self

    def characterize(self, X):
        check_is_fitted(self, "templates_")
        emap = check_elevation_map(X, self.resolution)
        seg = segment_traversable(emap, SegmentationParams(self.height_tolerance, 1))
        return characterize(
            emap, seg, self.templates_, self.alpha, n_orientations=self.n_orientations, n_jobs=self.n_jobs
        )

    def predict(self, X) -> list:
        return list(self.characterize(X).features)

    def score_map(self, X) -> np.ndarray:
        """Highest accepted score at each cell centre (0 where nothing matched)."""
        emap = check_elevation_map(X, self.resolution)
        out = np.zeros(emap.shape)
        for f in self.characterize(emap).features:
            r, c = emap.cell_at(f.pose.x, f.pose.y)
            out[r, c] = max(out[r, c], f.score)
        return out
