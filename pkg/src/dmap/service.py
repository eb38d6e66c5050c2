"""HTTP service hosting long-lived maps.

Maps live in process memory keyed by id.  Updates on one map are serialized
by a per-map lock; requests on different maps run concurrently.
"""

from __future__ import annotations

import math
import threading
import uuid
from typing import Literal

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel, Field

from .accuracy import AccuracyParams, f_of_gamma, gamma_for_accuracy, simulate_f
from .determination import ProjectionRadius
from .engine import CellState, DMap
from .geometry import InvalidParameterError, ScanFrame, SensorModel, SensorPose
from .grid import ProbabilityParams
from .io import export_snapshot
from .octree import MapConfig

Vec3 = tuple[float, float, float]


class SensorIn(BaseModel):
    detection_range: float
    fov_h_deg: float = 360.0
    fov_v_deg: float
    angular_resolution_deg: float

    def model(self) -> SensorModel:
        return SensorModel(self.detection_range, math.radians(self.fov_h_deg),
                           math.radians(self.fov_v_deg), math.radians(self.angular_resolution_deg))


class MapCreate(BaseModel):
    resolution: float
    bbox_min: Vec3
    bbox_max: Vec3
    sensor: SensorIn
    initial_cell_size: float = 5.0
    epsilon: float = 0.8
    projection_radius: Literal["half_side", "circumradius"] = "half_side"
    mode: Literal["removal", "probability"] = "removal"
    probability: Literal["depth_camera", "lidar"] = "depth_camera"
    gamma: float | None = None
    omega: float | None = None
    slide_threshold: float | None = None


class MapCreated(BaseModel):
    map_id: str
    gamma: float
    image_width: int
    image_height: int


class ScanIn(BaseModel):
    timestamp: float = 0.0
    translation: Vec3
    rotation: tuple[float, float, float, float] = Field(description="unit quaternion (w, x, y, z)")
    points: list[Vec3]


class StatsOut(BaseModel):
    n_points: int
    visited_nodes: int
    removed_volume: float
    rasterize_time: float
    build_tree_time: float
    octree_time: float
    grid_time: float
    total_time: float
    octree_nodes: int
    grid_voxels: int
    memory_bytes: int
    slid: bool


class PointsIn(BaseModel):
    points: list[Vec3]


class StatesOut(BaseModel):
    states: list[Literal["Unknown", "Free", "Occupied"]]


class ProbabilitiesOut(BaseModel):
    probabilities: list[float]


class SimulateIn(BaseModel):
    detection_range: float = 50.0
    resolution: float = 0.1
    alpha_fov_deg: float = 15.0
    gamma: float = 2.0
    seed: int = 0
    n_cells: int = Field(200_000, gt=0, le=5_000_000)


class _Slot:
    def __init__(self, m: DMap):
        self.map = m
        self.lock = threading.Lock()


def create_app() -> FastAPI:
    app = FastAPI(title="dmap", version="0.1.0")
    maps: dict[str, _Slot] = {}
    registry = threading.Lock()

    def slot(map_id: str) -> _Slot:
        with registry:
            s = maps.get(map_id)
        if s is None:
            raise HTTPException(404, f"no map {map_id!r}")
        return s

    def bad(exc: Exception):
        return HTTPException(422, str(exc))

    @app.post("/maps", response_model=MapCreated, status_code=201)
    def create_map(req: MapCreate):
        try:
            sensor = req.sensor.model()
            gamma = req.gamma
            if req.omega is not None:
                if gamma is not None:
                    raise InvalidParameterError("give gamma or omega, not both")
                gamma = gamma_for_accuracy(req.omega, AccuracyParams(min(sensor.fov_v / 2, math.pi / 2)))
            cfg = MapConfig(req.resolution, np.array(req.bbox_min), np.array(req.bbox_max),
                            req.initial_cell_size, req.epsilon, ProjectionRadius[req.projection_radius])
            prob = None
            if req.mode == "probability":
                prob = ProbabilityParams.lidar() if req.probability == "lidar" else ProbabilityParams.depth_camera()
            m = DMap(cfg, sensor, req.mode, 1.0 if gamma is None else gamma, prob, req.slide_threshold)
        except InvalidParameterError as exc:
            raise bad(exc) from None
        map_id = uuid.uuid4().hex
        with registry:
            maps[map_id] = _Slot(m)
        return MapCreated(map_id=map_id, gamma=m.gamma, image_width=m.spec.width, image_height=m.spec.height)

    @app.delete("/maps/{map_id}", status_code=204)
    def delete_map(map_id: str):
        with registry:
            if maps.pop(map_id, None) is None:
                raise HTTPException(404, f"no map {map_id!r}")

    @app.post("/maps/{map_id}/scans", response_model=StatsOut)
    def add_scan(map_id: str, scan: ScanIn):
        s = slot(map_id)
        try:
            pose = SensorPose.from_unnormalized(scan.translation, scan.rotation)
            frame = ScanFrame(pose, np.array(scan.points, dtype=np.float64).reshape(-1, 3), scan.timestamp)
            with s.lock:
                stats = s.map.update(frame)
        except InvalidParameterError as exc:
            raise bad(exc) from None
        return StatsOut(**stats.as_dict())

    @app.post("/maps/{map_id}/query", response_model=StatesOut)
    def query(map_id: str, req: PointsIn):
        s = slot(map_id)
        pts = np.array(req.points, dtype=np.float64).reshape(-1, 3)
        with s.lock:
            codes = s.map.query_many(pts)
        return StatesOut(states=[CellState(int(c)).name for c in codes])

    @app.post("/maps/{map_id}/probability", response_model=ProbabilitiesOut)
    def probability(map_id: str, req: PointsIn):
        s = slot(map_id)
        pts = np.array(req.points, dtype=np.float64).reshape(-1, 3)
        with s.lock:
            p = s.map.probability_keys(s.map.occupied.keys_of(pts))
        return ProbabilitiesOut(probabilities=p.tolist())

    @app.get("/maps/{map_id}/snapshot", response_class=PlainTextResponse)
    def snapshot(map_id: str):
        s = slot(map_id)
        with s.lock:
            return export_snapshot(s.map)

    @app.get("/maps/{map_id}/stats", response_model=list[StatsOut])
    def stats(map_id: str):
        s = slot(map_id)
        with s.lock:
            return [StatsOut(**u.as_dict()) for u in s.map.update_log]

    @app.get("/accuracy/f")
    def accuracy_f(gamma: float, alpha_fov_deg: float = 15.0):
        try:
            p = AccuracyParams(math.radians(alpha_fov_deg))
            return {"gamma": gamma, "f": f_of_gamma(gamma, p), "gamma0": p.gamma0, "A": p.A}
        except InvalidParameterError as exc:
            raise bad(exc) from None

    @app.get("/accuracy/gamma")
    def accuracy_gamma(omega: float, alpha_fov_deg: float = 15.0):
        try:
            p = AccuracyParams(math.radians(alpha_fov_deg))
            return {"omega": omega, "gamma": gamma_for_accuracy(omega, p)}
        except InvalidParameterError as exc:
            raise bad(exc) from None

    @app.post("/accuracy/simulate")
    def accuracy_simulate(req: SimulateIn):
        try:
            a = math.radians(req.alpha_fov_deg)
            out = simulate_f(req.detection_range, req.resolution, a, req.gamma, req.seed, req.n_cells)
            return {"gamma": req.gamma, "f_analytic": f_of_gamma(req.gamma, AccuracyParams(a)),
                    "f_empirical": out.f_empirical, "V_I": out.V_I, "V": out.V}
        except InvalidParameterError as exc:
            raise bad(exc) from None

    return app


app = create_app()
