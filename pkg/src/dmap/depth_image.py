"""Spherical depth-image rasterization of a registered scan."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import InvalidParameterError, ScanFrame, SensorModel

EMPTY = np.inf


@dataclass(frozen=True)
class DepthImageSpec:
    psi_map: float
    psi_I: float
    relax_factor: float
    width: int
    height: int
    theta_min: float
    phi_min: float
    panoramic: bool = False

    def pixel_center(self, u: int, v: int) -> tuple[float, float]:
        return (
            self.theta_min + (u + 0.5) * self.psi_I,
            self.phi_min + (v + 0.5) * self.psi_I,
        )


def compute_resolution(d: float, sensor: SensorModel, gamma: float = 1.0) -> DepthImageSpec:
    """Image geometry for map resolution ``d``.

    The map-derived angular resolution is the angle subtended by a cell of
    side ``d`` at the detection range; it is floored by the sensor's own
    angular resolution and then scaled by the relax factor ``gamma``.
    """
    R = sensor.detection_range
    if not d > 0:
        raise InvalidParameterError("map resolution must be positive")
    if not gamma > 0:
        raise InvalidParameterError("relax factor must be positive")
    if d > 2 * R:
        raise InvalidParameterError("map resolution exceeds the sensing diameter")
    psi_map = 2.0 * math.asin(d / (2.0 * R))
    psi_I = gamma * max(psi_map, sensor.angular_resolution)
    return DepthImageSpec(
        psi_map=psi_map,
        psi_I=psi_I,
        relax_factor=gamma,
        width=max(1, math.ceil(sensor.fov_h / psi_I)),
        height=max(1, math.ceil(sensor.fov_v / psi_I)),
        theta_min=-sensor.fov_h / 2.0,
        phi_min=-sensor.fov_v / 2.0,
        panoramic=sensor.panoramic,
    )


@dataclass(frozen=True)
class DepthImage:
    """Per-pixel minimum range (``EMPTY`` where nothing landed).

    ``point_hit`` keeps the world-frame point that produced each pixel's
    depth; it backs the sub-pixel traversal test.  Arrays are (height, width).
    """

    spec: DepthImageSpec
    depth: np.ndarray
    point_hit: np.ndarray
    origin: np.ndarray

    @property
    def filled(self) -> np.ndarray:
        return np.isfinite(self.depth)


def spherical(points_sensor: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(r, azimuth, elevation) of sensor-frame points."""
    x, y, z = points_sensor[:, 0], points_sensor[:, 1], points_sensor[:, 2]
    r = np.sqrt(x * x + y * y + z * z)
    theta = np.arctan2(y, x)
    with np.errstate(invalid="ignore", divide="ignore"):
        phi = np.arcsin(np.clip(z / r, -1.0, 1.0))
    return r, theta, phi


def pixel_indices(
    theta: np.ndarray, phi: np.ndarray, spec: DepthImageSpec
) -> tuple[np.ndarray, np.ndarray]:
    u = np.floor((theta - spec.theta_min) / spec.psi_I).astype(np.int64)
    v = np.floor((phi - spec.phi_min) / spec.psi_I).astype(np.int64)
    if spec.panoramic:
        u %= spec.width
    else:
        # closed FoV boundary: the far edge belongs to the last column/row
        u = np.minimum(u, spec.width - 1)
    v = np.minimum(v, spec.height - 1)
    return u, v


def in_range(r: np.ndarray, sensor: SensorModel) -> np.ndarray:
    # returns placed exactly at the detection range must survive float rounding
    return r <= sensor.detection_range * (1.0 + 1e-12)


def in_fov(theta: np.ndarray, phi: np.ndarray, sensor: SensorModel) -> np.ndarray:
    ok = np.abs(phi) <= sensor.fov_v / 2.0
    if not sensor.panoramic:
        ok &= np.abs(theta) <= sensor.fov_h / 2.0
    return ok


def rasterize(cloud: ScanFrame, spec: DepthImageSpec, sensor: SensorModel) -> DepthImage:
    """Project a world-frame scan into a depth image keeping the nearest return per pixel."""
    H, W = spec.height, spec.width
    depth = np.full((H, W), EMPTY)
    hit = np.full((H, W, 3), np.nan)
    origin = cloud.pose.translation.copy()
    pts = cloud.points
    if len(pts) == 0:
        return DepthImage(spec, depth, hit, origin)

    r, theta, phi = spherical(cloud.pose.world_to_sensor(pts))
    keep = (r > 0) & in_range(r, sensor) & in_fov(theta, phi, sensor)
    if not keep.any():
        return DepthImage(spec, depth, hit, origin)
    pts, r, theta, phi = pts[keep], r[keep], theta[keep], phi[keep]
    u, v = pixel_indices(theta, phi, spec)
    pix = v * W + u

    # nearest return per pixel; ties broken by coordinates so the result does
    # not depend on input order
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0], r, pix))
    pix_sorted = pix[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = pix_sorted[1:] != pix_sorted[:-1]
    sel = order[first]
    flat_depth = depth.reshape(-1)
    flat_hit = hit.reshape(-1, 3)
    flat_depth[pix[sel]] = r[sel]
    flat_hit[pix[sel]] = pts[sel]
    return DepthImage(spec, depth, hit, origin)


def sensing_points_mask(cloud: ScanFrame, sensor: SensorModel) -> np.ndarray:
    """Points that fall inside the sensing area (range and FoV)."""
    if len(cloud.points) == 0:
        return np.zeros(0, dtype=bool)
    r, theta, phi = spherical(cloud.pose.world_to_sensor(cloud.points))
    return (r > 0) & in_range(r, sensor) & in_fov(theta, phi, sensor)


__all__ = [
    "EMPTY",
    "DepthImage",
    "DepthImageSpec",
    "compute_resolution",
    "in_fov",
    "in_range",
    "pixel_indices",
    "rasterize",
    "sensing_points_mask",
    "spherical",
]
