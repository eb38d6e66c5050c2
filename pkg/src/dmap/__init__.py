"""Occupancy mapping with a decremental unknown-space octree and an occupied-voxel hash grid."""

from .depth_image import DepthImage, DepthImageSpec, compute_resolution, rasterize
from .determination import (
    CellRegion,
    OccupancyState,
    ProjectionRadius,
    determine_occupancy,
    determine_single_pixel,
)
from .engine import CellState, DMap, Mode, UpdateStats
from .geometry import InvalidParameterError, ScanFrame, SensorModel, SensorPose
from .grid import OccupiedGrid, ProbabilityParams, VoxelKey, voxel_hash
from .octree import MapConfig, SensingArea, UnknownOctree
from .segtree2d import PixelRect, RangeAggregate, SegTree2D

__all__ = [
    "CellRegion",
    "CellState",
    "DMap",
    "DepthImage",
    "DepthImageSpec",
    "InvalidParameterError",
    "MapConfig",
    "Mode",
    "OccupancyState",
    "OccupiedGrid",
    "PixelRect",
    "ProbabilityParams",
    "ProjectionRadius",
    "RangeAggregate",
    "ScanFrame",
    "SegTree2D",
    "SensingArea",
    "SensorModel",
    "SensorPose",
    "UnknownOctree",
    "UpdateStats",
    "VoxelKey",
    "compute_resolution",
    "determine_occupancy",
    "determine_single_pixel",
    "rasterize",
    "voxel_hash",
]
