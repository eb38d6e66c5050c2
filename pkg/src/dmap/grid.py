"""Hash-indexed occupied-space grid at the map resolution."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from .geometry import InvalidParameterError

P = 116101
Q = 201326611


class VoxelKey(NamedTuple):
    n_x: int
    n_y: int
    n_z: int

    @classmethod
    def of(cls, point, d: float) -> "VoxelKey":
        x, y, z = point
        return cls(math.floor(x / d), math.floor(y / d), math.floor(z / d))


def voxel_hash(key) -> int:
    """Bucket index ``(P^2 n_z + P n_y + n_x) mod Q`` with a nonnegative remainder."""
    n_x, n_y, n_z = (int(k) for k in key)
    # Python ints never overflow and % already returns a value in [0, Q)
    return (P * P * n_z + P * n_y + n_x) % Q


def voxel_hash_many(keys: np.ndarray) -> np.ndarray:
    """Vectorised bucket index, exact for any int64 key."""
    k = np.asarray(keys, dtype=np.int64).reshape(-1, 3)
    # reduce each term mod Q first so nothing leaves the int64 range
    pp = (P * P) % Q
    t = (pp * (k[:, 2] % Q)) % Q
    t = (t + P * (k[:, 1] % Q)) % Q
    return (t + k[:, 0] % Q) % Q


def _rows(keys: np.ndarray) -> np.ndarray:
    """View each int64 key triple as one 24-byte scalar.

    Byte order is not numeric order, but it is a total order on distinct
    keys, which is all the sorted index needs.
    """
    k = np.ascontiguousarray(np.asarray(keys, dtype=np.int64).reshape(-1, 3))
    return k.view("V24").reshape(-1)


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


@dataclass(frozen=True)
class ProbabilityParams:
    """Log-odds sensor model.  Clamps are optional (None disables them)."""

    p_hit: float = 0.7
    p_miss: float = 0.4
    p_occupied: float = 0.9
    p_min: float | None = None
    p_max: float | None = None

    @classmethod
    def lidar(cls) -> "ProbabilityParams":
        return cls(p_hit=0.9999, p_miss=0.4999, p_occupied=0.5, p_min=0.499, p_max=0.9999)

    @classmethod
    def depth_camera(cls) -> "ProbabilityParams":
        return cls()

    @property
    def l_hit(self) -> float:
        return logit(self.p_hit)

    @property
    def l_miss(self) -> float:
        return logit(self.p_miss)

    @property
    def l_occupied(self) -> float:
        return logit(self.p_occupied)

    def clamp(self, value):
        lo = -math.inf if self.p_min is None else logit(self.p_min)
        hi = math.inf if self.p_max is None else logit(self.p_max)
        return np.clip(value, lo, hi)


class OccupiedGrid:
    """Occupied voxels keyed by lattice index.

    Buckets are addressed by :func:`voxel_hash`; each bucket holds the full
    keys that landed in it, so colliding keys never merge.  Alongside the
    buckets a sorted array of key rows (with a parallel log-odds array)
    serves the vectorised batch operations.  In probability mode every stored
    key carries a log-odds value.
    """

    def __init__(self, resolution: float, probability: ProbabilityParams | None = None):
        self.resolution = resolution
        self.probability = probability
        self._buckets: dict[int, set[tuple[int, int, int]]] = {}
        self._keys = np.zeros((0, 3), dtype=np.int64)
        self._logodds = np.zeros(0, dtype=np.float64)

    def __len__(self) -> int:
        return len(self._keys)

    @property
    def n_buckets(self) -> int:
        return len(self._buckets)

    def bucket(self, h: int) -> list[VoxelKey]:
        return [VoxelKey(*k) for k in sorted(self._buckets.get(h, ()))]

    def keys_of(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return np.floor(pts / self.resolution).astype(np.int64)

    def _locate(self, keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        index = _rows(self._keys)
        q = _rows(keys)
        idx = np.searchsorted(index, q)
        found = idx < len(index)
        found[found] = index[idx[found]] == q[found]
        return idx, found

    def insert_keys(self, keys: np.ndarray, delta: float | None = None) -> int:
        """Insert lattice keys (duplicates count once); returns how many were new.

        In probability mode each distinct key also gets ``delta`` (default
        the hit log-odds) added, then clamped.
        """
        keys = np.asarray(keys, dtype=np.int64).reshape(-1, 3)
        if len(keys) == 0:
            return 0
        keys = np.unique(_rows(keys)).view(np.int64).reshape(-1, 3)
        _, found = self._locate(keys)
        new = keys[~found]
        if len(new):
            for k, h in zip(map(tuple, new.tolist()), voxel_hash_many(new).tolist()):
                self._buckets.setdefault(h, set()).add(k)
            merged = np.concatenate([self._keys, new])
            order = np.argsort(_rows(merged), kind="stable")
            self._keys = merged[order]
            self._logodds = np.concatenate([self._logodds, np.zeros(len(new))])[order]
        if self.probability is not None:
            d = self.probability.l_hit if delta is None else delta
            idx, _ = self._locate(keys)
            self._logodds[idx] = self.probability.clamp(self._logodds[idx] + d)
        return int(len(new))

    def insert_points(self, points: np.ndarray) -> int:
        """Insert the voxels of ``points``.

        A voxel hit several times in one call counts once (one observation per
        scan), matching the per-scan batching of the reference grid.
        """
        return self.insert_keys(self.keys_of(points))

    def add_logodds(self, key, delta: float) -> None:
        if self.probability is None:
            raise ValueError("log-odds updates need probability mode")
        self.insert_keys(np.asarray(key)[None, :], delta)

    def set_logodds(self, keys: np.ndarray, values: np.ndarray) -> None:
        """Overwrite the log-odds of stored keys (used when restoring snapshots)."""
        keys = np.asarray(keys, dtype=np.int64).reshape(-1, 3)
        idx, found = self._locate(keys)
        if not found.all():
            raise KeyError("set_logodds on keys that are not stored")
        self._logodds[idx] = np.asarray(values, dtype=np.float64)

    def __contains__(self, key) -> bool:
        return bool(self.contains_many(np.asarray(key, dtype=np.int64)[None, :])[0])

    def logodds(self, key) -> float:
        return float(self.logodds_many(np.asarray(key, dtype=np.int64)[None, :])[0])

    def is_occupied(self, key) -> bool:
        if self.probability is None:
            return key in self
        return key in self and self.logodds(key) >= self.probability.l_occupied

    def items(self) -> Iterator[tuple[VoxelKey, float]]:
        """Stored keys in lexicographic order with their log-odds."""
        keys = self.sorted_keys()
        vals = self.logodds_many(keys)
        for k, v in zip(keys.tolist(), vals.tolist()):
            yield VoxelKey(*k), v

    def sorted_keys(self) -> np.ndarray:
        """All stored keys as an (n, 3) int64 array in lexicographic order."""
        k = self._keys
        return k[np.lexsort((k[:, 2], k[:, 1], k[:, 0]))]

    def contains_many(self, keys: np.ndarray) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.int64).reshape(-1, 3)
        if len(keys) == 0 or len(self._keys) == 0:
            return np.zeros(len(keys), dtype=bool)
        return self._locate(keys)[1]

    def logodds_many(self, keys: np.ndarray) -> np.ndarray:
        keys = np.asarray(keys, dtype=np.int64).reshape(-1, 3)
        out = np.zeros(len(keys))
        hit = self.contains_many(keys)
        if hit.any():
            idx, _ = self._locate(keys[hit])
            out[hit] = self._logodds[idx]
        return out

    def remove_outside(self, lo: np.ndarray, hi: np.ndarray) -> int:
        """Drop keys outside the half-open lattice box [lo, hi); returns the count removed."""
        keys = self._keys
        keep = np.all((keys >= np.asarray(lo)) & (keys < np.asarray(hi)), axis=1)
        gone = keys[~keep]
        for k, h in zip(map(tuple, gone.tolist()), voxel_hash_many(gone).tolist()):
            b = self._buckets[h]
            b.discard(k)
            if not b:
                del self._buckets[h]
        self._keys = keys[keep]
        self._logodds = self._logodds[keep]
        return int(len(gone))
