"""Crowd counting on gigapixel images by iterative zooming and refinement."""

from .counters import DownsampleCounter, GigaZoomCounter, SlidingWindowCounter
from .density_map import DensityMap, GridRect, read_dmap, total_count, write_dmap
from .estimators import (
    CountingEstimator,
    DegradationParams,
    DensityEstimator,
    EstimatorError,
    EstimatorRequest,
    ExternalEstimator,
    OracleEstimator,
)
from .geometry import PixelRect, Resolution
from .pipeline import GigaZoomConfig, MultiRegionConfig, backward_pass, forward_pass, gigazoom
from .scene import Scene, SceneParams, generate_scene, ground_truth_density, region_head_count
from .schedule import ZoomSchedule, exponential_schedule, linear_schedule
from .tiled_image import GigaImage, Patch, build_tiled, read_region

__version__ = "0.1.0"

__all__ = [
    "CountingEstimator",
    "DegradationParams",
    "DensityEstimator",
    "DensityMap",
    "DownsampleCounter",
    "EstimatorError",
    "EstimatorRequest",
    "ExternalEstimator",
    "GigaImage",
    "GigaZoomConfig",
    "GigaZoomCounter",
    "GridRect",
    "MultiRegionConfig",
    "OracleEstimator",
    "Patch",
    "PixelRect",
    "Resolution",
    "Scene",
    "SceneParams",
    "SlidingWindowCounter",
    "ZoomSchedule",
    "backward_pass",
    "build_tiled",
    "exponential_schedule",
    "forward_pass",
    "generate_scene",
    "gigazoom",
    "ground_truth_density",
    "linear_schedule",
    "read_dmap",
    "read_region",
    "region_head_count",
    "total_count",
    "write_dmap",
]
