"""Occupancy-state determination of cube cells against a depth image.

A cell is projected to the image through its inscribed sphere (or its
circumsphere, see ``ProjectionRadius``), the covered pixel rectangle is
queried on the segment tree, and the depth range of the rectangle is compared
with the depth range the cell spans along the viewing ray.

Cells whose silhouette is narrower than one pixel cannot be judged from the
pixel rectangle; for them the stored returns of the (at most 2x2) pixels under
the silhouette are tested for actually passing through the cube.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .depth_image import DepthImage, DepthImageSpec
from .geometry import InvalidParameterError, SensorPose
from .segtree2d import PixelRect, RangeAggregate, SegTree2D, query_wrapped

UNKNOWN = 0
KNOWN = 1
UNDETERMINED = 2


class OccupancyState(enum.IntEnum):
    Unknown = UNKNOWN
    Known = KNOWN
    Undetermined = UNDETERMINED


class ProjectionRadius(enum.Enum):
    half_side = 1.0
    circumradius = math.sqrt(3.0)


@dataclass(frozen=True)
class CellRegion:
    center: np.ndarray
    size: float

    def __post_init__(self) -> None:
        if not self.size > 0:
            raise InvalidParameterError("cell size must be positive")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(3))


@dataclass(frozen=True)
class DepthInterval:
    box_min: float
    box_max: float


@dataclass(frozen=True)
class DeterminationResult:
    state: OccupancyState
    completeness: float
    aggregate: RangeAggregate


@dataclass(frozen=True)
class CellProjection:
    r: float
    theta: float
    phi: float
    interval: DepthInterval
    rect: PixelRect


def project_cell(
    cell: CellRegion,
    pose: SensorPose,
    spec: DepthImageSpec,
    projection_radius: ProjectionRadius = ProjectionRadius.half_side,
) -> CellProjection | None:
    """Spherical position, depth interval and covered pixel rectangle of a cell.

    The rectangle is in image-frame indices before clipping or wrapping.
    Returns None when the cell is too close to the sensor to be projected
    (centre at the origin, or the projection sphere engulfs the sensor).
    """
    v = pose.world_to_sensor(cell.center[None, :])[0]
    r = float(np.linalg.norm(v))
    k = projection_radius.value * cell.size / (2.0 * r) if r > 0 else math.inf
    if r == 0 or k > 1.0:
        return None
    theta = math.atan2(v[1], v[0])
    phi = math.asin(max(-1.0, min(1.0, v[2] / r)))
    a = math.asin(k)
    x = (theta - spec.theta_min) / spec.psi_I
    y = (phi - spec.phi_min) / spec.psi_I
    w = a / spec.psi_I
    rect = PixelRect(math.floor(x - w), math.ceil(x + w), math.floor(y - w), math.ceil(y + w))
    half = cell.size / 2.0
    return CellProjection(r, theta, phi, DepthInterval(r - half, r + half), rect)


@nb.njit(cache=True, inline="always")
def _segment_hits_cube(ox, oy, oz, px, py, pz, cx, cy, cz, h):
    """Does the segment o->p intersect the closed cube centred at c with half side h?"""
    t0 = 0.0
    t1 = 1.0
    o = (ox, oy, oz)
    dv = (px - ox, py - oy, pz - oz)
    c = (cx, cy, cz)
    for k in range(3):
        lo = c[k] - h
        hi = c[k] + h
        if dv[k] == 0.0:
            if o[k] < lo or o[k] > hi:
                return False
        else:
            inv = 1.0 / dv[k]
            ta = (lo - o[k]) * inv
            tb = (hi - o[k]) * inv
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
            if t0 > t1:
                return False
    return True


@nb.njit(cache=True)
def classify(dmin, dmax, dsum, alpha, box_min, box_max, eps):
    if dsum == 0:
        return UNKNOWN
    if alpha > eps:
        if dmax < box_min:
            return UNKNOWN
        if dmin > box_max:
            return KNOWN
        return UNDETERMINED
    if dmax < box_min:
        return UNKNOWN
    return UNDETERMINED


@nb.njit(cache=True)
def determine_cell(
    cx, cy, cz, L,
    rot, trans,
    psi, theta_min, phi_min, panoramic,
    tmin, tmax, tsum, depth, hit,
    eps, radius_scale,
):
    """Kernel behind ``determine_occupancy``.

    Returns (state, completeness, dMin, dMax, dSum).
    """
    h = 0.5 * L
    ox = trans[0]
    oy = trans[1]
    oz = trans[2]
    if abs(ox - cx) <= h and abs(oy - cy) <= h and abs(oz - cz) <= h:
        return UNDETERMINED, 0.0, np.inf, -np.inf, 0
    dx = cx - ox
    dy = cy - oy
    dz = cz - oz
    vx = rot[0, 0] * dx + rot[1, 0] * dy + rot[2, 0] * dz
    vy = rot[0, 1] * dx + rot[1, 1] * dy + rot[2, 1] * dz
    vz = rot[0, 2] * dx + rot[1, 2] * dy + rot[2, 2] * dz
    r = math.sqrt(vx * vx + vy * vy + vz * vz)
    k = radius_scale * L / (2.0 * r)
    if k > 1.0:
        return UNDETERMINED, 0.0, np.inf, -np.inf, 0
    theta = math.atan2(vy, vx)
    sp = max(-1.0, min(1.0, vz / r))
    phi = math.asin(sp)
    box_min = r - h
    box_max = r + h
    H, W = depth.shape

    # silhouette width of the world-aligned cube along the image tangents
    st = math.sin(theta)
    ct = math.cos(theta)
    cp = math.cos(phi)
    wh = 0.0
    wv = 0.0
    for i in range(3):
        eh = -st * rot[i, 0] + ct * rot[i, 1]
        ev = -sp * ct * rot[i, 0] - sp * st * rot[i, 1] + cp * rot[i, 2]
        wh += abs(eh)
        wv += abs(ev)
    ang_v = L * wv / r
    ang_h = L * wh / (r * cp) if cp > 1e-12 else np.inf
    x = (theta - theta_min) / psi
    y = (phi - phi_min) / psi

    if ang_h < psi and ang_v < psi:
        u0 = math.floor(x - 0.5 * ang_h / psi)
        u1 = math.floor(x + 0.5 * ang_h / psi)
        v0 = math.floor(y - 0.5 * ang_v / psi)
        v1 = math.floor(y + 0.5 * ang_v / psi)
        mn = np.inf
        mx = -np.inf
        cnt = 0
        for vv in range(v0, v1 + 1):
            if vv < 0 or vv >= H:
                continue
            for uu in range(u0, u1 + 1):
                col = uu
                if panoramic:
                    col = uu % W
                elif uu < 0 or uu >= W:
                    continue
                dpix = depth[vv, col]
                if not dpix < np.inf:
                    continue
                if _segment_hits_cube(ox, oy, oz, hit[vv, col, 0], hit[vv, col, 1],
                                      hit[vv, col, 2], cx, cy, cz, h):
                    cnt += 1
                    mn = min(mn, dpix)
                    mx = max(mx, dpix)
        if cnt == 0:
            return UNKNOWN, 0.0, mn, mx, 0
        return classify(mn, mx, cnt, 1.0, box_min, box_max, 0.0), 1.0, mn, mx, cnt

    a = math.asin(k) / psi
    xL = math.floor(x - a)
    xR = math.ceil(x + a)
    yL = math.floor(y - a)
    yR = math.ceil(y + a)
    ncol = xR - xL + 1
    if panoramic and ncol > W:
        ncol = W
    proj = ncol * (yR - yL + 1)
    mn, mx, s, _ = query_wrapped(tmin, tmax, tsum, xL, xR, yL, yR, panoramic)
    alpha = s / proj
    return classify(mn, mx, s, alpha, box_min, box_max, eps), alpha, mn, mx, s


@nb.njit(cache=True)
def crossed_by_return(cx, cy, cz, L, rot, trans, psi, theta_min, phi_min, panoramic, depth, hit):
    """Does any stored return's segment from the sensor touch the cube?

    Scans the pixels under the cube's circumsphere.  Cells too close to the
    sensor to project are taken as crossed.  A return that only grazes a face
    (e.g. lands on a surface lying on the cell boundary) does not count.
    """
    h = 0.5 * L
    h_open = h * (1.0 - 1e-9)
    ox = trans[0]
    oy = trans[1]
    oz = trans[2]
    dx = cx - ox
    dy = cy - oy
    dz = cz - oz
    vx = rot[0, 0] * dx + rot[1, 0] * dy + rot[2, 0] * dz
    vy = rot[0, 1] * dx + rot[1, 1] * dy + rot[2, 1] * dz
    vz = rot[0, 2] * dx + rot[1, 2] * dy + rot[2, 2] * dz
    r = math.sqrt(vx * vx + vy * vy + vz * vz)
    k = math.sqrt(3.0) * h / r if r > 0 else np.inf
    if k >= 1.0:
        return True
    H, W = depth.shape
    theta = math.atan2(vy, vx)
    phi = math.asin(max(-1.0, min(1.0, vz / r)))
    a = math.asin(k)
    x = (theta - theta_min) / psi
    y = (phi - phi_min) / psi
    # horizontal extent widens with 1/cos(phi) away from the equator
    cp = math.cos(phi)
    ah = a / (psi * cp) if cp > 1e-12 else W
    u0 = math.floor(x - ah)
    u1 = math.floor(x + ah)
    if panoramic and u1 - u0 + 1 > W:
        u0 = 0
        u1 = W - 1
    v0 = max(0, math.floor(y - a / psi))
    v1 = min(H - 1, math.floor(y + a / psi))
    for vv in range(v0, v1 + 1):
        for uu in range(u0, u1 + 1):
            col = uu
            if panoramic:
                col = uu % W
            elif uu < 0 or uu >= W:
                continue
            if not depth[vv, col] < np.inf:
                continue
            if _segment_hits_cube(ox, oy, oz, hit[vv, col, 0], hit[vv, col, 1], hit[vv, col, 2],
                                  cx, cy, cz, h_open):
                return True
    return False


@nb.njit(cache=True)
def determine_many(
    centers, L, rot, trans, psi, theta_min, phi_min, panoramic,
    tmin, tmax, tsum, depth, hit, eps, radius_scale,
):
    n = centers.shape[0]
    out = np.empty(n, dtype=np.int8)
    for i in range(n):
        out[i] = determine_cell(
            centers[i, 0], centers[i, 1], centers[i, 2], L, rot, trans,
            psi, theta_min, phi_min, panoramic, tmin, tmax, tsum, depth, hit,
            eps, radius_scale,
        )[0]
    return out


def _check_eps(eps: float) -> None:
    if not 0 < eps <= 1:
        raise InvalidParameterError("completeness threshold must lie in (0, 1]")


def determine_occupancy(
    cell: CellRegion,
    pose: SensorPose,
    tree: SegTree2D,
    image: DepthImage,
    eps: float = 0.8,
    projection_radius: ProjectionRadius = ProjectionRadius.half_side,
) -> DeterminationResult:
    """Classify a cell as Unknown, Known or Undetermined for the current scan."""
    _check_eps(eps)
    spec = image.spec
    c = cell.center
    state, alpha, mn, mx, s = determine_cell(
        c[0], c[1], c[2], cell.size, pose.matrix, pose.translation,
        spec.psi_I, spec.theta_min, spec.phi_min, spec.panoramic,
        tree.tmin, tree.tmax, tree.tsum, image.depth, image.point_hit,
        eps, projection_radius.value,
    )
    return DeterminationResult(OccupancyState(state), float(alpha), RangeAggregate(float(mn), float(mx), int(s)))


def determine_single_pixel(cell: CellRegion, pose: SensorPose, image: DepthImage) -> DeterminationResult:
    """Sub-pixel case: judge the cell from the returns whose rays cross it.

    No crossing return leaves the cell Unknown; otherwise the depth comparison
    is applied to the crossing returns with the observation taken as complete.
    """
    spec = image.spec
    c = cell.center
    h = cell.size / 2.0
    box = project_cell(cell, pose, spec)
    if box is None:
        return DeterminationResult(OccupancyState.Undetermined, 0.0, RangeAggregate.empty())
    x = (box.theta - spec.theta_min) / spec.psi_I
    y = (box.phi - spec.phi_min) / spec.psi_I
    H, W = image.depth.shape
    u, v = math.floor(x), math.floor(y)
    if spec.panoramic:
        u %= W
    if not (0 <= u < W and 0 <= v < H) or not math.isfinite(image.depth[v, u]):
        return DeterminationResult(OccupancyState.Unknown, 0.0, RangeAggregate.empty())
    p = image.point_hit[v, u]
    o = pose.translation
    if not _segment_hits_cube(o[0], o[1], o[2], p[0], p[1], p[2], c[0], c[1], c[2], h):
        return DeterminationResult(OccupancyState.Unknown, 0.0, RangeAggregate.empty())
    dpix = float(image.depth[v, u])
    state = classify(dpix, dpix, 1, 1.0, box.interval.box_min, box.interval.box_max, 0.0)
    return DeterminationResult(OccupancyState(state), 1.0, RangeAggregate(dpix, dpix, 1))


__all__ = [
    "CellProjection",
    "CellRegion",
    "DepthInterval",
    "DeterminationResult",
    "OccupancyState",
    "PixelRect",
    "ProjectionRadius",
    "classify",
    "crossed_by_return",
    "determine_cell",
    "determine_many",
    "determine_occupancy",
    "determine_single_pixel",
    "project_cell",
]
