"""Terrain characterization and environment augmentation for modular robots."""

__version__ = "0.1.0"

from .characterizer import CharacterizationResult, DetectedFeature, characterize  # noqa: E402
from .elevation_map import ElevationMap, SegmentationParams, segment_traversable  # noqa: E402
from .estimators import FeatureCharacterizer, TerrainSegmenter, check_elevation_map  # noqa: E402

__all__ = [
    "__version__",
    "ElevationMap",
    "SegmentationParams",
    "segment_traversable",
    "characterize",
    "CharacterizationResult",
    "DetectedFeature",
    "TerrainSegmenter",
    "FeatureCharacterizer",
    "check_elevation_map",
]
