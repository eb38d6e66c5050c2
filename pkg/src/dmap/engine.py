"""Hybrid occupancy map: hash grid for occupied space, octree for unknown space."""

from __future__ import annotations

import enum
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .depth_image import DepthImageSpec, compute_resolution, rasterize, sensing_points_mask
from .geometry import InvalidParameterError, ScanFrame, SensorModel
from .grid import OccupiedGrid, ProbabilityParams
from .octree import MapConfig, SensingArea, UnknownOctree, encode_keys
from .segtree2d import SegTree2D

# bytes per record used for the deterministic memory estimate
NODE_BYTES = 8 * 4 + 3 * 8 + 1 + 1 + 8 + 1
VOXEL_BYTES = 3 * 8 + 8
BUCKET_BYTES = 16


class CellState(enum.IntEnum):
    Unknown = 0
    Free = 1
    Occupied = 2


class Mode(str, enum.Enum):
    removal = "removal"
    probability = "probability"


@dataclass
class UpdateStats:
    n_points: int = 0
    visited_nodes: int = 0
    removed_volume: float = 0.0
    rasterize_time: float = 0.0
    build_tree_time: float = 0.0
    octree_time: float = 0.0
    grid_time: float = 0.0
    total_time: float = 0.0
    octree_nodes: int = 0
    grid_voxels: int = 0
    memory_bytes: int = 0
    slid: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class DMap:
    config: MapConfig
    sensor: SensorModel
    mode: Mode = Mode.removal
    gamma: float = 1.0
    probability: ProbabilityParams | None = None
    slide_threshold: float | None = None
    unknown: UnknownOctree = field(init=False)
    occupied: OccupiedGrid = field(init=False)
    spec: DepthImageSpec = field(init=False)
    update_log: list[UpdateStats] = field(init=False, default_factory=list)
    last_timestamp: float | None = field(init=False, default=None)

    def __post_init__(self) -> None:
        self.mode = Mode(self.mode)
        if self.mode is Mode.probability:
            if self.probability is None:
                self.probability = ProbabilityParams.depth_camera()
            if self.slide_threshold is not None:
                raise InvalidParameterError("region sliding is only supported in removal mode")
        elif self.probability is not None:
            raise InvalidParameterError("probability parameters need probability mode")
        if self.slide_threshold is not None and not self.slide_threshold > 0:
            raise InvalidParameterError("slide threshold must be positive")
        self.unknown = UnknownOctree.init(self.config)
        self.occupied = OccupiedGrid(self.config.resolution, self.probability)
        self.spec = compute_resolution(self.config.resolution, self.sensor, self.gamma)

    # ------------------------------------------------------------ updates
    def _check_order(self, scan: ScanFrame) -> None:
        if self.last_timestamp is not None and scan.timestamp < self.last_timestamp:
            raise InvalidParameterError(
                f"scan timestamp {scan.timestamp} precedes the previous scan ({self.last_timestamp})"
            )
        self.last_timestamp = scan.timestamp

    def _window_points(self, scan: ScanFrame) -> np.ndarray:
        pts = scan.points[sensing_points_mask(scan, self.sensor)]
        keys = self.unknown.keys_for(pts)
        side = 1 << self.unknown.root_level
        inside = np.all((keys >= 0) & (keys < side), axis=1)
        return pts[inside]

    def update(self, scan: ScanFrame) -> UpdateStats:
        """Integrate one registered scan."""
        if self.mode is Mode.probability:
            return self.update_probabilistic(scan)
        self._check_order(scan)
        stats = UpdateStats(n_points=len(scan))
        t_start = time.perf_counter()

        t = time.perf_counter()
        hits = self._window_points(scan)
        self.occupied.insert_points(hits)
        stats.grid_time = time.perf_counter() - t

        self._update_octree(scan, stats)
        t = time.perf_counter()
        stats.removed_volume += self.unknown.carve(hits)
        stats.octree_time += time.perf_counter() - t

        self._maybe_slide(scan, stats)
        return self._finish(stats, t_start)

    def update_probabilistic(self, scan: ScanFrame) -> UpdateStats:
        """Integrate a scan as log-odds evidence; no octree node is ever deleted."""
        if self.mode is not Mode.probability:
            raise InvalidParameterError("probabilistic updates need probability mode")
        self._check_order(scan)
        stats = UpdateStats(n_points=len(scan))
        t_start = time.perf_counter()

        t = time.perf_counter()
        hits = self._window_points(scan)
        keys = np.unique(self.occupied.keys_of(hits), axis=0)
        self.occupied.insert_keys(keys)
        hit_keys = np.sort(encode_keys(keys - self.unknown.origin))
        stats.grid_time = time.perf_counter() - t

        self._update_octree(scan, stats, hit_keys=hit_keys)
        return self._finish(stats, t_start)

    def _update_octree(self, scan: ScanFrame, stats: UpdateStats, hit_keys=None) -> None:
        t = time.perf_counter()
        image = rasterize(scan, self.spec, self.sensor)
        stats.rasterize_time = time.perf_counter() - t

        t = time.perf_counter()
        seg = SegTree2D.build(image)
        stats.build_tree_time = time.perf_counter() - t

        t = time.perf_counter()
        area = SensingArea(scan.pose, self.sensor)
        prob = self.mode is Mode.probability
        visited, removed = self.unknown.update(
            area, seg, image,
            probability_mode=prob,
            l_free=self.probability.l_miss if prob else 0.0,
            hit_keys=hit_keys,
        )
        stats.octree_time = time.perf_counter() - t
        stats.visited_nodes = visited
        stats.removed_volume = removed

    def _maybe_slide(self, scan: ScanFrame, stats: UpdateStats) -> None:
        if self.slide_threshold is None:
            return
        offset = np.linalg.norm(scan.pose.translation - self.unknown.window_center)
        if offset > self.slide_threshold:
            self.slide(scan.pose.translation)
            stats.slid = True

    def _finish(self, stats: UpdateStats, t_start: float) -> UpdateStats:
        stats.total_time = time.perf_counter() - t_start
        stats.octree_nodes = self.unknown.node_count
        stats.grid_voxels = len(self.occupied)
        stats.memory_bytes = self.memory_estimate()
        self.update_log.append(stats)
        return stats

    def slide(self, new_center) -> None:
        """Re-centre the mapping window, dropping everything that leaves it."""
        if self.mode is not Mode.removal:
            raise InvalidParameterError("region sliding is only supported in removal mode")
        self.unknown = self.unknown.slide(new_center)
        lo = self.unknown.origin
        self.occupied.remove_outside(lo, lo + (1 << self.unknown.root_level))

    # ------------------------------------------------------------ queries
    def memory_estimate(self) -> int:
        return (
            self.unknown.node_count * NODE_BYTES
            + len(self.occupied) * VOXEL_BYTES
            + self.occupied.n_buckets * BUCKET_BYTES
        )

    def unknown_volume(self) -> float:
        return self.unknown.unknown_volume()

    def _combined_logodds(self, keys: np.ndarray):
        unknown, lsum, seen = self.unknown.query_keys(keys - self.unknown.origin)
        grid_l = self.occupied.logodds_many(keys)
        in_grid = self.occupied.contains_many(keys)
        total = self.probability.clamp(lsum + grid_l)
        side = 1 << self.unknown.root_level
        rel = keys - self.unknown.origin
        inside = np.all((rel >= 0) & (rel < side), axis=1)
        observed = inside & (seen | in_grid)
        return total, observed

    def query_keys(self, keys: np.ndarray) -> np.ndarray:
        """Tri-state codes (see :class:`CellState`) for world lattice keys."""
        keys = np.asarray(keys, dtype=np.int64).reshape(-1, 3)
        out = np.zeros(len(keys), dtype=np.int8)
        if self.mode is Mode.removal:
            unknown = self.unknown.query_keys(keys - self.unknown.origin)[0]
            occ = self.occupied.contains_many(keys)
            out[~unknown] = CellState.Free
            out[~unknown & occ] = CellState.Occupied
            return out
        total, observed = self._combined_logodds(keys)
        out[observed & (total < 0)] = CellState.Free
        occ = observed & (total >= self.probability.l_occupied) & (total > 0)
        out[occ] = CellState.Occupied
        return out

    def query_many(self, points: np.ndarray) -> np.ndarray:
        return self.query_keys(self.occupied.keys_of(points))

    def query(self, point) -> CellState:
        return CellState(int(self.query_many(np.asarray(point, dtype=np.float64)[None, :])[0]))

    def probability_keys(self, keys: np.ndarray) -> np.ndarray:
        """Occupancy probability per key; 0.5 where nothing was observed."""
        keys = np.asarray(keys, dtype=np.int64).reshape(-1, 3)
        if self.mode is Mode.removal:
            codes = self.query_keys(keys)
            return np.select([codes == CellState.Free, codes == CellState.Occupied], [0.0, 1.0], 0.5)
        total, observed = self._combined_logodds(keys)
        return np.where(observed, 1.0 / (1.0 + np.exp(-total)), 0.5)
