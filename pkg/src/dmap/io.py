"""File formats: binary scan sequences, run configs, map snapshots, point and state lists.

Scan sequence (``.dseq``, little-endian)::

    magic    4s   b"DMSQ"
    version  u32  1
    header   f64 resolution hint, f64 detection range, f64 horizontal FoV,
             f64 vertical FoV, f64 angular resolution (angles in radians),
             u32 frame count
    frames   f64 timestamp, 7 x f64 pose (tx ty tz qw qx qy qz), u32 n,
             n x 3 f32 points (world frame)

Text scan sequence (for authoring fixtures)::

    sensor <R> <fov_h> <fov_v> <angular_res>     # radians
    resolution <d>
    frame <t> <tx> <ty> <tz> <qw> <qx> <qy> <qz>
    <x> <y> <z>                                  # one line per point
    ...

Map snapshot (text)::

    dmap-snapshot 1
    <key> <value>          # config lines, floats in repr form
    window <ox> <oy> <oz> <root_level>
    unknown <n>
    <cx> <cy> <cz> <level> <logodds> <observed>   # window-relative lattice corners
    occupied <m>
    <nx> <ny> <nz> <logodds>
"""

from __future__ import annotations

import configparser
import io
import math
import struct
import warnings
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .determination import ProjectionRadius
from .engine import DMap, Mode, UpdateStats
from .geometry import InvalidParameterError, ScanFrame, SensorModel, SensorPose
from .grid import OccupiedGrid, ProbabilityParams
from .octree import MapConfig, UnknownOctree

MAGIC = b"DMSQ"
VERSION = 1
_HEADER = struct.Struct("<4sI5dI")
_FRAME = struct.Struct("<8dI")


class DataError(ValueError):
    """Malformed input file."""


@dataclass
class ScanSequence:
    sensor: SensorModel
    resolution_hint: float
    frames: list[ScanFrame]


def write_sequence(path, seq: ScanSequence) -> None:
    s = seq.sensor
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, seq.resolution_hint, s.detection_range,
                              s.fov_h, s.fov_v, s.angular_resolution, len(seq.frames)))
        for f in seq.frames:
            pts = np.ascontiguousarray(f.points, dtype="<f4")
            fh.write(_FRAME.pack(f.timestamp, *f.pose.translation, *f.pose.rotation, len(pts)))
            fh.write(pts.tobytes())


def read_sequence(path) -> ScanSequence:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise DataError("truncated header")
    magic, version, hint, R, fh, fv, ang, count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise DataError(f"bad magic {magic!r}")
    if version != VERSION:
        raise DataError(f"unsupported version {version}")
    try:
        sensor = SensorModel(R, fh, fv, ang)
    except InvalidParameterError as exc:
        raise DataError(f"header: {exc}") from None
    off = _HEADER.size
    frames = []
    for i in range(count):
        if off + _FRAME.size > len(data):
            raise DataError(f"frame {i}: truncated record")
        t, tx, ty, tz, qw, qx, qy, qz, n = _FRAME.unpack_from(data, off)
        off += _FRAME.size
        nbytes = 12 * n
        if off + nbytes > len(data):
            raise DataError(f"frame {i}: expected {n} points, file ends early")
        pts = np.frombuffer(data, dtype="<f4", count=3 * n, offset=off).reshape(n, 3).astype(np.float64)
        off += nbytes
        vals = np.array([t, tx, ty, tz, qw, qx, qy, qz])
        if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(pts))):
            raise DataError(f"frame {i}: non-finite value")
        try:
            pose = SensorPose.from_unnormalized([tx, ty, tz], [qw, qx, qy, qz])
        except InvalidParameterError as exc:
            raise DataError(f"frame {i}: {exc}") from None
        frames.append(ScanFrame(pose, pts, t))
    if off != len(data):
        raise DataError(f"{len(data) - off} trailing bytes after frame {count - 1}")
    return ScanSequence(sensor, hint, frames)


def sequence_to_text(seq: ScanSequence) -> str:
    s = seq.sensor
    out = [f"sensor {s.detection_range!r} {s.fov_h!r} {s.fov_v!r} {s.angular_resolution!r}",
           f"resolution {seq.resolution_hint!r}"]
    for f in seq.frames:
        vals = [f.timestamp, *f.pose.translation, *f.pose.rotation]
        out.append("frame " + " ".join(repr(float(v)) for v in vals))
        out.extend(" ".join(repr(float(v)) for v in p) for p in f.points.astype(np.float32))
    return "\n".join(out) + "\n"


def sequence_from_text(text: str) -> ScanSequence:
    sensor = None
    hint = 0.1
    frames: list[ScanFrame] = []
    cur = None
    pts: list[list[float]] = []

    def flush():
        if cur is not None:
            t, pose = cur
            frames.append(ScanFrame(pose, np.array(pts, dtype=np.float64).reshape(-1, 3), t))

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "sensor":
                sensor = SensorModel(*(float(v) for v in parts[1:5]))
            elif parts[0] == "resolution":
                hint = float(parts[1])
            elif parts[0] == "frame":
                flush()
                v = [float(x) for x in parts[1:9]]
                if len(v) != 8:
                    raise ValueError("frame needs 8 numbers")
                cur, pts = (v[0], SensorPose.from_unnormalized(v[1:4], v[4:8])), []
            else:
                if cur is None:
                    raise ValueError("point before any frame line")
                p = [float(x) for x in parts]
                if len(p) != 3:
                    raise ValueError("point needs 3 numbers")
                pts.append(p)
        except (ValueError, TypeError) as exc:
            raise DataError(f"line {lineno}: {exc}") from None
    flush()
    if sensor is None:
        raise DataError("missing sensor line")
    return ScanSequence(sensor, hint, frames)


def sequence_bounds(seq: ScanSequence, pad: float) -> tuple[np.ndarray, np.ndarray]:
    """Box covering every pose and point of the sequence, padded by ``pad``."""
    chunks = [f.points for f in seq.frames] + [f.pose.translation[None, :] for f in seq.frames]
    allp = np.concatenate(chunks) if chunks else np.zeros((1, 3))
    if len(allp) == 0:
        allp = np.zeros((1, 3))
    return allp.min(axis=0) - pad, allp.max(axis=0) + pad


# ---------------------------------------------------------------- run config
@dataclass
class RunConfig:
    """Key-value run configuration (INI file, section ``[dmap]``); angles in degrees."""

    resolution: float = 0.1
    epsilon: float = 0.8
    initial_cell_size: float = 5.0
    gamma: float = 1.0
    omega: float | None = None
    mode: str = "removal"
    slide_threshold: float | None = None
    projection_radius: str = "half_side"
    probability: str = "depth_camera"
    detection_range: float | None = None
    fov_h_deg: float | None = None
    fov_v_deg: float | None = None
    angular_resolution_deg: float | None = None
    bbox_min: tuple | None = None
    bbox_max: tuple | None = None
    seed: int = 0

    @classmethod
    def load(cls, path) -> "RunConfig":
        cp = configparser.ConfigParser()
        try:
            cp.read_string(Path(path).read_text())
        except configparser.Error as exc:
            raise DataError(f"config: {exc}") from None
        if not cp.has_section("dmap"):
            raise DataError("config: missing [dmap] section")
        cfg = cls()
        known = {f.name: f for f in fields(cls)}
        for key, raw in cp.items("dmap"):
            if key not in known:
                raise DataError(f"config: unknown key {key!r}")
            cfg.set(key, raw)
        cfg.validate()
        return cfg

    def set(self, key: str, raw) -> None:
        if raw is None:
            return
        try:
            if key in ("bbox_min", "bbox_max"):
                vals = tuple(float(v) for v in str(raw).replace(",", " ").split())
                if len(vals) != 3:
                    raise ValueError("needs three numbers")
                setattr(self, key, vals)
            elif key in ("mode", "projection_radius", "probability"):
                setattr(self, key, str(raw).strip())
            elif key == "seed":
                self.seed = int(raw)
            else:
                setattr(self, key, float(raw))
        except ValueError as exc:
            raise DataError(f"config key {key}: {exc}") from None

    def validate(self) -> None:
        if self.mode not in ("removal", "probability"):
            raise DataError(f"config: mode must be removal or probability, got {self.mode!r}")
        if self.projection_radius not in ProjectionRadius.__members__:
            raise DataError(f"config: unknown projection_radius {self.projection_radius!r}")
        if self.probability not in ("depth_camera", "lidar"):
            raise DataError(f"config: probability must be depth_camera or lidar")
        if self.omega is not None and not 0 < self.omega <= 1:
            raise DataError("config: omega must lie in (0, 1]")

    def sensor_for(self, default: SensorModel) -> SensorModel:
        return SensorModel(
            default.detection_range if self.detection_range is None else self.detection_range,
            default.fov_h if self.fov_h_deg is None else math.radians(self.fov_h_deg),
            default.fov_v if self.fov_v_deg is None else math.radians(self.fov_v_deg),
            default.angular_resolution if self.angular_resolution_deg is None
            else math.radians(self.angular_resolution_deg),
        )

    def map_config(self, bbox_min, bbox_max) -> MapConfig:
        lo = bbox_min if self.bbox_min is None else self.bbox_min
        hi = bbox_max if self.bbox_max is None else self.bbox_max
        return MapConfig(self.resolution, np.asarray(lo, dtype=np.float64), np.asarray(hi, dtype=np.float64),
                         self.initial_cell_size, self.epsilon, ProjectionRadius[self.projection_radius])

    def probability_params(self) -> ProbabilityParams | None:
        if self.mode != "probability":
            return None
        return ProbabilityParams.lidar() if self.probability == "lidar" else ProbabilityParams.depth_camera()


# ---------------------------------------------------------------- snapshots
def _f(v) -> str:
    return repr(float(v))


def export_snapshot(m: DMap) -> str:
    out = io.StringIO()
    c, s = m.config, m.sensor
    out.write("dmap-snapshot 1\n")
    out.write(f"mode {m.mode.value}\n")
    out.write(f"resolution {_f(c.resolution)}\n")
    out.write(f"epsilon {_f(c.epsilon)}\n")
    out.write(f"initial_cell_size {_f(c.initial_cell_size)}\n")
    out.write(f"projection_radius {c.projection_radius.name}\n")
    out.write(f"bbox_min {' '.join(_f(v) for v in c.bbox_min)}\n")
    out.write(f"bbox_max {' '.join(_f(v) for v in c.bbox_max)}\n")
    out.write(f"gamma {_f(m.gamma)}\n")
    out.write(f"sensor {_f(s.detection_range)} {_f(s.fov_h)} {_f(s.fov_v)} {_f(s.angular_resolution)}\n")
    if m.probability is not None:
        p = m.probability
        vals = [p.p_hit, p.p_miss, p.p_occupied, p.p_min, p.p_max]
        out.write("probability " + " ".join("none" if v is None else _f(v) for v in vals) + "\n")
    t = m.unknown
    out.write(f"window {t.origin[0]} {t.origin[1]} {t.origin[2]} {t.root_level}\n")
    corners, levels, lsum, obs = t.leaves()
    order = np.lexsort((corners[:, 2], corners[:, 1], corners[:, 0], levels))
    out.write(f"unknown {len(order)}\n")
    for i in order:
        cx, cy, cz = corners[i]
        out.write(f"{cx} {cy} {cz} {levels[i]} {_f(lsum[i])} {int(obs[i])}\n")
    keys = m.occupied.sorted_keys()
    vals = m.occupied.logodds_many(keys)
    out.write(f"occupied {len(keys)}\n")
    for k, v in zip(keys.tolist(), vals.tolist()):
        out.write(f"{k[0]} {k[1]} {k[2]} {_f(v)}\n")
    return out.getvalue()


def import_snapshot(text: str) -> DMap:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "dmap-snapshot 1":
        raise DataError("not a dmap snapshot")
    head: dict[str, list[str]] = {}
    i = 1
    try:
        while i < len(lines) and not lines[i].startswith("unknown "):
            key, *rest = lines[i].split()
            head[key] = rest
            i += 1
        n_unknown = int(lines[i].split()[1])
        rows = [lines[i + 1 + j].split() for j in range(n_unknown)]
        i += 1 + n_unknown
        if not lines[i].startswith("occupied "):
            raise ValueError("missing occupied section")
        n_occ = int(lines[i].split()[1])
        orows = [lines[i + 1 + j].split() for j in range(n_occ)]
        if i + 1 + n_occ != len(lines):
            raise ValueError("trailing lines")

        config = MapConfig(
            float(head["resolution"][0]),
            np.array([float(v) for v in head["bbox_min"]]),
            np.array([float(v) for v in head["bbox_max"]]),
            float(head["initial_cell_size"][0]),
            float(head["epsilon"][0]),
            ProjectionRadius[head["projection_radius"][0]],
        )
        sensor = SensorModel(*(float(v) for v in head["sensor"]))
        prob = None
        if "probability" in head:
            vals = [None if v == "none" else float(v) for v in head["probability"]]
            prob = ProbabilityParams(*vals)
        m = DMap(config, sensor, Mode(head["mode"][0]), float(head["gamma"][0]), prob)
        ox, oy, oz, root_level = (int(v) for v in head["window"])
        corners = np.array([[int(r[0]), int(r[1]), int(r[2])] for r in rows], dtype=np.int64).reshape(-1, 3)
        levels = np.array([int(r[3]) for r in rows], dtype=np.int64)
        lsum = np.array([float(r[4]) for r in rows])
        obs = np.array([r[5] == "1" for r in rows], dtype=bool)
        okeys = np.array([[int(r[0]), int(r[1]), int(r[2])] for r in orows], dtype=np.int64).reshape(-1, 3)
        ovals = np.array([float(r[3]) for r in orows])
    except (KeyError, IndexError, ValueError, InvalidParameterError) as exc:
        raise DataError(f"snapshot: {exc}") from None
    # leaves in depth-first order rebuild the same child layout every time
    m.unknown = UnknownOctree.from_leaves(config, np.array([ox, oy, oz]), root_level, corners, levels, lsum, obs)
    grid = OccupiedGrid(config.resolution, prob)
    grid.insert_keys(okeys, delta=0.0)
    if prob is not None:
        grid.set_logodds(okeys, ovals)
    m.occupied = grid
    return m


def write_stats_csv(path, log: list[UpdateStats]) -> None:
    cols = [f.name for f in fields(UpdateStats)]
    with open(path, "w") as fh:
        fh.write("scan," + ",".join(cols) + "\n")
        for i, s in enumerate(log):
            d = s.as_dict()
            fh.write(f"{i}," + ",".join(str(int(d[c])) if isinstance(d[c], bool) else repr(d[c]) for c in cols) + "\n")


def read_stats_csv(path) -> list[dict]:
    import csv

    with open(path) as fh:
        return [dict(r) for r in csv.DictReader(fh)]


# ---------------------------------------------------------------- points / states
def read_points(path) -> np.ndarray:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)  # empty file
            pts = np.loadtxt(path, dtype=np.float64, ndmin=2, comments="#")
    except ValueError as exc:
        raise DataError(f"points file: {exc}") from None
    if pts.size == 0:
        return np.zeros((0, 3))
    if pts.shape[1] != 3:
        raise DataError("points file needs three columns")
    return pts


def write_states(path, states) -> None:
    from .engine import CellState

    Path(path).write_text("".join(f"{CellState(int(s)).name}\n" for s in states))
