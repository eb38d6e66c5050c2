"""Reference occupancy grid built by voxel ray traversal (3-D DDA)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np
from sklearn.metrics import roc_auc_score

from .engine import CellState, DMap
from .geometry import InvalidParameterError, ScanFrame
from .grid import ProbabilityParams

UNKNOWN = int(CellState.Unknown)
FREE = int(CellState.Free)
OCCUPIED = int(CellState.Occupied)


@nb.njit(cache=True)
def _flat(k0, k1, k2, shape):
    if k0 < 0 or k1 < 0 or k2 < 0 or k0 >= shape[0] or k1 >= shape[1] or k2 >= shape[2]:
        return -1
    return (k0 * shape[1] + k1) * shape[2] + k2


@nb.njit(cache=True)
def traverse(o, p, d, lo, shape, out):
    """Write the flat indices of the voxels strictly before p's voxel on the segment o->p.

    Voxels outside the grid get -1.  Returns the number of steps taken, which is
    the Manhattan distance between the end voxel keys, so the walk always lands
    exactly on the end voxel even under floating-point drift.
    """
    k = np.empty(3, np.int64)
    e = np.empty(3, np.int64)
    step = np.empty(3, np.int64)
    tmax = np.empty(3)
    tdelta = np.empty(3)
    remaining = np.empty(3, np.int64)
    for a in range(3):
        k[a] = math.floor(o[a] / d)
        e[a] = math.floor(p[a] / d)
        delta = p[a] - o[a]
        remaining[a] = abs(e[a] - k[a])
        if delta > 0:
            step[a] = 1
            tmax[a] = ((k[a] + 1) * d - o[a]) / delta
            tdelta[a] = d / delta
        elif delta < 0:
            step[a] = -1
            tmax[a] = (k[a] * d - o[a]) / delta
            tdelta[a] = -d / delta
        else:
            step[a] = 0
            tmax[a] = np.inf
            tdelta[a] = np.inf
    n = remaining[0] + remaining[1] + remaining[2]
    for i in range(n):
        out[i] = _flat(k[0] - lo[0], k[1] - lo[1], k[2] - lo[2], shape)
        best = -1
        for a in range(3):
            if remaining[a] > 0 and (best < 0 or tmax[a] < tmax[best]):
                best = a
        k[best] += step[best]
        tmax[best] += tdelta[best]
        remaining[best] -= 1
    return n


@nb.njit(cache=True)
def raycast_kernel(state, logodds, free_stamp, hit_stamp, batch, points, origin, R, d, lo,
                   log_mode, l_hit, l_miss, l_min, l_max):
    shape = state.shape
    flat_state = state.reshape(-1)
    flat_l = logodds.reshape(-1)
    n = points.shape[0]
    end = np.empty((n, 3))
    is_hit = np.zeros(n, np.bool_)
    # hits first, so that hit-overrides-free does not depend on ray order
    for i in range(n):
        dx = points[i, 0] - origin[0]
        dy = points[i, 1] - origin[1]
        dz = points[i, 2] - origin[2]
        r = math.sqrt(dx * dx + dy * dy + dz * dz)
        if r > R:
            s = R / r
            end[i, 0] = origin[0] + dx * s
            end[i, 1] = origin[1] + dy * s
            end[i, 2] = origin[2] + dz * s
        else:
            end[i, 0] = points[i, 0]
            end[i, 1] = points[i, 1]
            end[i, 2] = points[i, 2]
            is_hit[i] = True
            f = _flat(math.floor(points[i, 0] / d) - lo[0], math.floor(points[i, 1] / d) - lo[1],
                      math.floor(points[i, 2] / d) - lo[2], shape)
            if f >= 0 and hit_stamp[f] != batch:
                hit_stamp[f] = batch
                if log_mode:
                    flat_l[f] = min(max(flat_l[f] + l_hit, l_min), l_max)
                    flat_state[f] = OCCUPIED if flat_l[f] >= 0 else FREE
                else:
                    flat_state[f] = OCCUPIED

    buf = np.empty(64, np.int64)
    total = 0
    for i in range(n):
        need = 0
        for a in range(3):
            need += abs(math.floor(end[i, a] / d) - math.floor(origin[a] / d))
        if need + 1 > buf.shape[0]:
            buf = np.empty(2 * (need + 1), np.int64)
        m = traverse(origin, end[i], d, lo, shape, buf)
        if not is_hit[i]:
            buf[m] = _flat(math.floor(end[i, 0] / d) - lo[0], math.floor(end[i, 1] / d) - lo[1],
                           math.floor(end[i, 2] / d) - lo[2], shape)
            m += 1
        total += m
        for j in range(m):
            f = buf[j]
            if f < 0 or hit_stamp[f] == batch or free_stamp[f] == batch:
                continue
            free_stamp[f] = batch
            if log_mode:
                flat_l[f] = min(max(flat_l[f] + l_miss, l_min), l_max)
                flat_state[f] = FREE if flat_l[f] < 0 else OCCUPIED
            elif flat_state[f] != OCCUPIED:
                flat_state[f] = FREE
    return total


class DenseOracleGrid:
    """Tri-state voxel grid over a fixed box, updated by ray traversal.

    Set semantics by default: a voxel ever hit stays Occupied, traversed voxels
    become Free.  With ``probability`` given, each voxel instead accumulates
    clamped log-odds (one observation per scan) and its state follows the sign.
    """

    def __init__(self, resolution: float, bbox_min, bbox_max, probability: ProbabilityParams | None = None):
        if not resolution > 0:
            raise InvalidParameterError("resolution must be positive")
        self.resolution = float(resolution)
        self.lo = np.floor(np.asarray(bbox_min, dtype=np.float64) / resolution).astype(np.int64)
        hi = np.ceil(np.asarray(bbox_max, dtype=np.float64) / resolution).astype(np.int64)
        self.shape = tuple(int(v) for v in np.maximum(hi - self.lo, 1))
        self.state = np.zeros(self.shape, dtype=np.int8)
        self.logodds = np.zeros(self.shape, dtype=np.float64)
        self.probability = probability
        n = int(np.prod(self.shape))
        self._free_stamp = np.full(n, -1, dtype=np.int64)
        self._hit_stamp = np.full(n, -1, dtype=np.int64)
        self._batch = 0

    @property
    def hi(self) -> np.ndarray:
        return self.lo + np.array(self.shape)

    def raycast_update(self, scan: ScanFrame, R: float) -> int:
        """Integrate one scan; returns the number of voxels marked by traversal (hits excluded)."""
        pts = np.ascontiguousarray(scan.points, dtype=np.float64)
        prob = self.probability
        if prob is not None:
            lmin = -math.inf if prob.p_min is None else float(prob.clamp(-math.inf))
            lmax = math.inf if prob.p_max is None else float(prob.clamp(math.inf))
            args = (True, prob.l_hit, prob.l_miss, lmin, lmax)
        else:
            args = (False, 0.0, 0.0, 0.0, 0.0)
        total = raycast_kernel(
            self.state, self.logodds, self._free_stamp, self._hit_stamp, self._batch,
            pts, scan.pose.translation.astype(np.float64), float(R), self.resolution, self.lo, *args,
        )
        self._batch += 1
        return int(total)

    def keys(self) -> np.ndarray:
        """World lattice keys of every voxel, in flat (C) order."""
        idx = np.indices(self.shape).reshape(3, -1).T
        return idx + self.lo

    def probabilities(self) -> np.ndarray:
        """Flat occupancy probability; 0.5 for never-observed voxels."""
        p = 1.0 / (1.0 + np.exp(-self.logodds.reshape(-1)))
        return np.where(self.state.reshape(-1) == UNKNOWN, 0.5, p)


@dataclass(frozen=True)
class AgreementReport:
    unknown: float
    free: float
    occupied: float
    n_unknown: int
    n_free: int
    n_occupied: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _ratio(a: int, b: int) -> float:
    return a / b if b else float("nan")


def region_mask(oracle: DenseOracleGrid, region) -> np.ndarray:
    """Flat mask of oracle voxels whose centres lie in the box ``region = (lo, hi)``."""
    if region is None:
        return np.ones(int(np.prod(oracle.shape)), dtype=bool)
    lo, hi = (np.asarray(v, dtype=np.float64) for v in region)
    c = (oracle.keys() + 0.5) * oracle.resolution
    return np.all((c >= lo) & (c <= hi), axis=1)


def compare(dmap: DMap, oracle: DenseOracleGrid, region=None) -> AgreementReport:
    """Per-state agreement of the map with the oracle over the lattice cells in ``region``."""
    if not math.isclose(dmap.config.resolution, oracle.resolution, rel_tol=1e-12):
        raise InvalidParameterError("map and oracle resolutions differ")
    mask = region_mask(oracle, region)
    keys = oracle.keys()[mask]
    ref = oracle.state.reshape(-1)[mask]
    got = dmap.query_keys(keys)
    counts = [int((ref == s).sum()) for s in (UNKNOWN, FREE, OCCUPIED)]
    hits = [int(((ref == s) & (got == s)).sum()) for s in (UNKNOWN, FREE, OCCUPIED)]
    return AgreementReport(
        _ratio(hits[0], counts[0]), _ratio(hits[1], counts[1]), _ratio(hits[2], counts[2]), *counts
    )


def auroc(labels: np.ndarray, scores: np.ndarray) -> float:
    labels = np.asarray(labels, dtype=bool)
    if labels.all() or not labels.any():
        raise InvalidParameterError("AUROC needs both classes")
    return float(roc_auc_score(labels, scores))
