"""Synthetic scenes and scans: boxes and triangles, exact ray intersection."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import InvalidParameterError, ScanFrame, SensorModel, SensorPose, quat_from_yaw_pitch_roll


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self) -> None:
        lo = np.asarray(self.lo, dtype=np.float64).reshape(3)
        hi = np.asarray(self.hi, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(hi > lo)):
            raise InvalidParameterError("box needs finite corners with hi > lo")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)


@dataclass
class Scene:
    bounds_lo: np.ndarray
    bounds_hi: np.ndarray
    boxes: list[Box] = field(default_factory=list)
    triangles: np.ndarray = field(default_factory=lambda: np.zeros((0, 3, 3)))

    def __post_init__(self) -> None:
        self.bounds_lo = np.asarray(self.bounds_lo, dtype=np.float64).reshape(3)
        self.bounds_hi = np.asarray(self.bounds_hi, dtype=np.float64).reshape(3)
        self.triangles = np.asarray(self.triangles, dtype=np.float64).reshape(-1, 3, 3)
        if not np.all(np.isfinite(self.triangles)):
            raise InvalidParameterError("triangle vertices must be finite")

    def inside_solid(self, p) -> bool:
        p = np.asarray(p, dtype=np.float64)
        return any(bool(np.all(p > b.lo) and np.all(p < b.hi)) for b in self.boxes)

    # text format, one primitive per line:
    #   bounds x0 y0 z0 x1 y1 z1
    #   box    x0 y0 z0 x1 y1 z1
    #   tri    ax ay az bx by bz cx cy cz
    def dumps(self) -> str:
        fmt = lambda v: " ".join(repr(float(x)) for x in v)  # noqa: E731
        lines = [f"bounds {fmt(self.bounds_lo)} {fmt(self.bounds_hi)}"]
        lines += [f"box {fmt(b.lo)} {fmt(b.hi)}" for b in self.boxes]
        lines += [f"tri {fmt(t.reshape(-1))}" for t in self.triangles]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Scene":
        bounds = None
        boxes: list[Box] = []
        tris: list[list[float]] = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            kind, *rest = line.split()
            try:
                vals = [float(v) for v in rest]
            except ValueError as exc:
                raise InvalidParameterError(f"line {lineno}: {exc}") from None
            want = {"bounds": 6, "box": 6, "tri": 9}.get(kind)
            if want is None:
                raise InvalidParameterError(f"line {lineno}: unknown primitive {kind!r}")
            if len(vals) != want:
                raise InvalidParameterError(f"line {lineno}: {kind} needs {want} numbers")
            if kind == "bounds":
                bounds = (vals[:3], vals[3:])
            elif kind == "box":
                boxes.append(Box(vals[:3], vals[3:]))
            else:
                tris.append(vals)
        if bounds is None:
            raise InvalidParameterError("scene has no bounds line")
        return cls(bounds[0], bounds[1], boxes, np.array(tris).reshape(-1, 3, 3))

    @classmethod
    def load(cls, path) -> "Scene":
        return cls.loads(Path(path).read_text())

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())


def room_scene(size=(20.0, 20.0, 4.0), wall: float = 0.2) -> Scene:
    """Closed room with five interior boxes of assorted sizes."""
    sx, sy, sz = size
    w = wall
    boxes = [
        Box([-w, -w, -w], [sx + w, sy + w, 0.0]),  # floor
        Box([-w, -w, sz], [sx + w, sy + w, sz + w]),  # ceiling
        Box([-w, -w, 0.0], [0.0, sy + w, sz]),
        Box([sx, -w, 0.0], [sx + w, sy + w, sz]),
        Box([0.0, -w, 0.0], [sx, 0.0, sz]),
        Box([0.0, sy, 0.0], [sx, sy + w, sz]),
    ]
    s = np.array([sx / 20.0, sy / 20.0, sz / 4.0])
    interior = [
        ([3.0, 3.0, 0.0], [5.0, 6.0, 1.5]),
        ([12.0, 4.0, 0.0], [13.0, 9.0, 3.0]),
        ([7.0, 13.0, 0.0], [10.0, 15.0, 1.0]),
        ([15.0, 14.0, 0.0], [17.5, 16.5, 2.2]),
        ([8.5, 8.0, 0.0], [10.0, 9.5, 4.0]),
    ]
    boxes += [Box(np.array(lo) * s, np.array(hi) * s) for lo, hi in interior]
    return Scene([-w, -w, -w], [sx + w, sy + w, sz + w], boxes)


def wall_scene(distance: float = 5.0, half_extent: float = 50.0) -> Scene:
    """A single wall plane x = distance, as two triangles."""
    d, e = distance, half_extent
    tris = np.array([
        [[d, -e, -e], [d, e, -e], [d, e, e]],
        [[d, -e, -e], [d, e, e], [d, -e, e]],
    ])
    return Scene([-e, -e, -e], [e, e, e], [], tris)


def ray_directions(sensor: SensorModel, psi: float | None = None) -> np.ndarray:
    """Unit sensor-frame directions on the FoV grid with pitch ``psi``."""
    psi = sensor.angular_resolution if psi is None else psi
    W = max(1, math.ceil(sensor.fov_h / psi - 1e-9))
    H = max(1, math.ceil(sensor.fov_v / psi - 1e-9))
    th = -sensor.fov_h / 2 + (np.arange(W) + 0.5) * (sensor.fov_h / W)
    ph = -sensor.fov_v / 2 + (np.arange(H) + 0.5) * (sensor.fov_v / H)
    TH, PH = np.meshgrid(th, ph)
    TH, PH = TH.ravel(), PH.ravel()
    return np.stack([np.cos(PH) * np.cos(TH), np.cos(PH) * np.sin(TH), np.sin(PH)], axis=1)


def _ray_boxes(o: np.ndarray, dirs: np.ndarray, boxes: list[Box]) -> np.ndarray:
    """Nearest positive entry distance per ray over all boxes (slab method)."""
    best = np.full(len(dirs), np.inf)
    if not boxes:
        return best
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
    for b in boxes:
        with np.errstate(invalid="ignore"):
            t1 = (b.lo - o) * inv
            t2 = (b.hi - o) * inv
        # a zero direction component inside the slab gives nan: the slab is no constraint there
        lo_t = np.where(np.isnan(t1), -np.inf, np.minimum(t1, t2))
        hi_t = np.where(np.isnan(t1), np.inf, np.maximum(t1, t2))
        tn = lo_t.max(axis=1)
        tf = hi_t.min(axis=1)
        ok = (tn <= tf) & (tn > 0)
        best = np.where(ok & (tn < best), tn, best)
    return best


def _ray_triangles(o: np.ndarray, dirs: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Nearest positive hit distance per ray over all triangles (Moller-Trumbore)."""
    best = np.full(len(dirs), np.inf)
    for a, b, c in tris:
        e1, e2 = b - a, c - a
        pvec = np.cross(dirs, e2)
        det = pvec @ e1
        ok = np.abs(det) > 1e-15
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        tvec = o - a
        u = (pvec @ tvec) * inv
        q = np.cross(tvec, e1)
        v = (dirs @ q) * inv
        t = (q @ e2) * inv
        hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
        best = np.where(hit & (t < best), t, best)
    return best


def generate_scan(
    scene: Scene,
    pose: SensorPose,
    sensor: SensorModel,
    noise_sigma: float = 0.0,
    seed: int | None = 0,
    timestamp: float = 0.0,
) -> ScanFrame:
    """Cast one ray per FoV grid direction and keep the hits within range."""
    if noise_sigma < 0:
        raise InvalidParameterError("noise sigma must be nonnegative")
    o = pose.translation
    if scene.inside_solid(o):
        raise InvalidParameterError("sensor pose lies inside solid geometry")
    if not scene.boxes and len(scene.triangles) == 0:
        return ScanFrame(pose, np.zeros((0, 3)), timestamp)
    dirs = ray_directions(sensor) @ pose.matrix.T
    t = np.minimum(_ray_boxes(o, dirs, scene.boxes), _ray_triangles(o, dirs, scene.triangles))
    keep = t <= sensor.detection_range
    t, dirs = t[keep], dirs[keep]
    if noise_sigma > 0:
        t = t + np.random.default_rng(seed).normal(0.0, noise_sigma, size=len(t))
        ok = (t > 0) & (t <= sensor.detection_range)
        t, dirs = t[ok], dirs[ok]
    return ScanFrame(pose, o + t[:, None] * dirs, timestamp)


def worst_case_scan(
    kind: str, sensor: SensorModel, d: float, r_min: float | None = None, pose: SensorPose | None = None
) -> ScanFrame:
    """Adversarial scans, one point per pixel centre of the depth image for resolution ``d``.

    ``spherical`` puts every return at the detection range R; ``serrated``
    alternates between a near range and R on neighbouring pixels.  When the
    sensor's own angular resolution sets the image pitch, the point count does
    not depend on ``d``.
    """
    from .depth_image import compute_resolution

    pose = SensorPose.identity() if pose is None else pose
    R = sensor.detection_range
    spec = compute_resolution(d, sensor)
    W, H = spec.width, spec.height
    th = spec.theta_min + (np.arange(W) + 0.5) * spec.psi_I
    ph = spec.phi_min + (np.arange(H) + 0.5) * spec.psi_I
    TH, PH = np.meshgrid(th, ph)
    keep = (np.abs(PH) <= sensor.fov_v / 2) & (np.abs(TH) <= sensor.fov_h / 2)
    u, v = np.meshgrid(np.arange(W), np.arange(H))
    TH, PH, u, v = TH[keep], PH[keep], u[keep], v[keep]
    dirs = np.stack([np.cos(PH) * np.cos(TH), np.cos(PH) * np.sin(TH), np.sin(PH)], axis=1)
    if kind == "spherical":
        r = np.full(len(dirs), R)
    elif kind == "serrated":
        near = min(R, 4.0 * d) if r_min is None else r_min
        if not 0 < near <= R:
            raise InvalidParameterError("near range must lie in (0, R]")
        r = np.where((u + v) % 2 == 0, near, R)
    else:
        raise InvalidParameterError(f"unknown worst-case kind {kind!r}")
    return ScanFrame(pose, pose.translation + (r[:, None] * dirs) @ pose.matrix.T)


@dataclass(frozen=True)
class TrajectorySpec:
    """Polyline through ``waypoints`` sampled at ``n_scans`` evenly spaced poses, heading along the path."""

    waypoints: np.ndarray
    n_scans: int

    def poses(self) -> list[SensorPose]:
        w = np.asarray(self.waypoints, dtype=np.float64).reshape(-1, 3)
        if len(w) < 2 or self.n_scans < 1:
            raise InvalidParameterError("need at least two waypoints and one scan")
        seg = np.linalg.norm(np.diff(w, axis=0), axis=1)
        cum = np.r_[0.0, np.cumsum(seg)]
        out = []
        for s in np.linspace(0.0, cum[-1], self.n_scans):
            i = min(int(np.searchsorted(cum, s, side="right")) - 1, len(seg) - 1)
            f = (s - cum[i]) / seg[i] if seg[i] > 0 else 0.0
            p = w[i] + f * (w[i + 1] - w[i])
            delta = w[i + 1] - w[i]
            yaw = math.atan2(delta[1], delta[0])
            out.append(SensorPose(p, quat_from_yaw_pitch_roll(yaw)))
        return out


def room_trajectory(n_scans: int = 50, height: float = 1.5) -> TrajectorySpec:
    pts = [[2.0, 2.0], [10.5, 2.0], [18.0, 2.5], [18.0, 11.0], [11.0, 11.5], [5.0, 11.0], [2.5, 17.5], [13.0, 18.0]]
    return TrajectorySpec(np.array([[x, y, height] for x, y in pts]), n_scans)


def simulate_sequence(
    scene: Scene, trajectory: TrajectorySpec, sensor: SensorModel, noise_sigma: float = 0.0, seed: int = 0
) -> list[ScanFrame]:
    rng = np.random.default_rng(seed)
    return [
        generate_scan(scene, pose, sensor, noise_sigma, int(rng.integers(2**63 - 1)), timestamp=float(i))
        for i, pose in enumerate(trajectory.poses())
    ]
