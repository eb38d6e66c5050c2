"""Sensor model, poses and scan frames shared by every stage of the pipeline."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


class InvalidParameterError(ValueError):
    """Raised when a configuration value violates its documented domain."""


@dataclass(frozen=True)
class SensorModel:
    """Range sensor description.

    ``fov_h`` and ``fov_v`` are full angular extents in radians; the
    horizontal field of view is centred on the sensor +x axis and the vertical
    one on the sensor xy-plane.
    """

    detection_range: float
    fov_h: float
    fov_v: float
    angular_resolution: float

    def __post_init__(self) -> None:
        if not self.detection_range > 0:
            raise InvalidParameterError("detection range must be positive")
        if not 0 < self.fov_h <= TWO_PI + 1e-12:
            raise InvalidParameterError("horizontal FoV must lie in (0, 2*pi]")
        if not 0 < self.fov_v <= math.pi + 1e-12:
            raise InvalidParameterError("vertical FoV must lie in (0, pi]")
        if not self.angular_resolution > 0:
            raise InvalidParameterError("angular resolution must be positive")

    @property
    def panoramic(self) -> bool:
        return self.fov_h >= TWO_PI - 1e-12


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a unit quaternion given as (w, x, y, z)."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_yaw_pitch_roll(yaw: float, pitch: float = 0.0, roll: float = 0.0) -> np.ndarray:
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    return np.array(
        [
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        ]
    )


@dataclass(frozen=True)
class SensorPose:
    """World-from-sensor rigid transform; ``rotation`` is a (w, x, y, z) quaternion."""

    translation: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self) -> None:
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        q = np.asarray(self.rotation, dtype=np.float64).reshape(4)
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise InvalidParameterError("pose quaternion must have unit norm")
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", q)

    @classmethod
    def from_unnormalized(cls, translation, rotation) -> "SensorPose":
        q = np.asarray(rotation, dtype=np.float64)
        n = np.linalg.norm(q)
        if not n > 0 or not np.isfinite(n):
            raise InvalidParameterError("quaternion must be finite and nonzero")
        # leave already-unit quaternions bit-exact so file round trips are stable
        if abs(n - 1.0) > 1e-15:
            q = q / n
        return cls(np.asarray(translation, dtype=np.float64), q)

    @classmethod
    def identity(cls) -> "SensorPose":
        return cls(np.zeros(3))

    @property
    def matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def world_to_sensor(self, points: np.ndarray) -> np.ndarray:
        # row vectors: (p - t) @ R == (R^T (p - t))^T
        return (np.asarray(points, dtype=np.float64) - self.translation) @ self.matrix


@dataclass
class ScanFrame:
    """One sensor pose and its registered point cloud (world frame, shape (n, 3))."""

    pose: SensorPose
    points: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.size == 0:
            pts = np.zeros((0, 3))
        self.points = pts.reshape(-1, 3)

    def __len__(self) -> int:
        return len(self.points)
