"""Static 2-D segment tree (segment tree of segment trees) over a depth image.

Layout: the classic bottom-up array tree in both dimensions.  Row ``i`` of the
storage is outer node ``i`` (leaves at ``H..2H-1``), column ``j`` is inner node
``j`` (leaves at ``W..2W-1``).  Each stored triple is (min depth, max depth,
filled-pixel count) over the node's rectangle; EMPTY pixels contribute the
identity (+inf, -inf, 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np

from .depth_image import DepthImage
from .geometry import InvalidParameterError


@dataclass(frozen=True)
class RangeAggregate:
    dMin: float
    dMax: float
    dSum: int

    @classmethod
    def empty(cls) -> "RangeAggregate":
        return cls(math.inf, -math.inf, 0)

    def merge(self, other: "RangeAggregate") -> "RangeAggregate":
        return RangeAggregate(
            min(self.dMin, other.dMin), max(self.dMax, other.dMax), self.dSum + other.dSum
        )


@dataclass(frozen=True)
class PixelRect:
    """Inclusive pixel bounds; column (x) is azimuth, row (y) is elevation."""

    xL: int
    xR: int
    yL: int
    yR: int

    @property
    def n_pixels(self) -> int:
        return max(0, self.xR - self.xL + 1) * max(0, self.yR - self.yL + 1)


@nb.njit(cache=True)
def _build(depth):
    H, W = depth.shape
    tmin = np.full((2 * H, 2 * W), np.inf)
    tmax = np.full((2 * H, 2 * W), -np.inf)
    tsum = np.zeros((2 * H, 2 * W), dtype=np.int32)
    for i in range(H):
        row = H + i
        for j in range(W):
            v = depth[i, j]
            if v < np.inf:
                tmin[row, W + j] = v
                tmax[row, W + j] = v
                tsum[row, W + j] = 1
        for j in range(W - 1, 0, -1):
            tmin[row, j] = min(tmin[row, 2 * j], tmin[row, 2 * j + 1])
            tmax[row, j] = max(tmax[row, 2 * j], tmax[row, 2 * j + 1])
            tsum[row, j] = tsum[row, 2 * j] + tsum[row, 2 * j + 1]
    for i in range(H - 1, 0, -1):
        for j in range(1, 2 * W):
            tmin[i, j] = min(tmin[2 * i, j], tmin[2 * i + 1, j])
            tmax[i, j] = max(tmax[2 * i, j], tmax[2 * i + 1, j])
            tsum[i, j] = tsum[2 * i, j] + tsum[2 * i + 1, j]
    return tmin, tmax, tsum


@nb.njit(cache=True, inline="always")
def query_rect(tmin, tmax, tsum, xl, xr, yl, yr):
    """Aggregate over rows [yl, yr] x columns [xl, xr] (inclusive, pre-clipped).

    Returns (dMin, dMax, dSum, visited inner nodes).
    """
    H = tmin.shape[0] // 2
    W = tmin.shape[1] // 2
    mn = np.inf
    mx = -np.inf
    s = 0
    visited = 0
    if xl > xr or yl > yr:
        return mn, mx, s, visited
    lo = yl + H
    hi = yr + H + 1
    while lo < hi:
        if lo & 1:
            a = xl + W
            b = xr + W + 1
            while a < b:
                if a & 1:
                    mn = min(mn, tmin[lo, a])
                    mx = max(mx, tmax[lo, a])
                    s += tsum[lo, a]
                    visited += 1
                    a += 1
                if b & 1:
                    b -= 1
                    mn = min(mn, tmin[lo, b])
                    mx = max(mx, tmax[lo, b])
                    s += tsum[lo, b]
                    visited += 1
                a >>= 1
                b >>= 1
            lo += 1
        if hi & 1:
            hi -= 1
            a = xl + W
            b = xr + W + 1
            while a < b:
                if a & 1:
                    mn = min(mn, tmin[hi, a])
                    mx = max(mx, tmax[hi, a])
                    s += tsum[hi, a]
                    visited += 1
                    a += 1
                if b & 1:
                    b -= 1
                    mn = min(mn, tmin[hi, b])
                    mx = max(mx, tmax[hi, b])
                    s += tsum[hi, b]
                    visited += 1
                a >>= 1
                b >>= 1
        lo >>= 1
        hi >>= 1
    return mn, mx, s, visited


@nb.njit(cache=True)
def query_wrapped(tmin, tmax, tsum, xL, xR, yL, yR, panoramic):
    """Query with image-boundary handling.

    Rows are clipped.  Columns are clipped, or taken modulo the width for a
    panoramic image, in which case a seam-crossing range is answered as the
    merge of two sub-rectangles.
    """
    H = tmin.shape[0] // 2
    W = tmin.shape[1] // 2
    yl = max(yL, 0)
    yr = min(yR, H - 1)
    if yl > yr:
        return np.inf, -np.inf, 0, 0
    if panoramic:
        if xR - xL + 1 >= W:
            return query_rect(tmin, tmax, tsum, 0, W - 1, yl, yr)
        xl = xL % W
        xr = xR % W
        if xl <= xr:
            return query_rect(tmin, tmax, tsum, xl, xr, yl, yr)
        m1, M1, s1, v1 = query_rect(tmin, tmax, tsum, xl, W - 1, yl, yr)
        m2, M2, s2, v2 = query_rect(tmin, tmax, tsum, 0, xr, yl, yr)
        return min(m1, m2), max(M1, M2), s1 + s2, v1 + v2
    xl = max(xL, 0)
    xr = min(xR, W - 1)
    if xl > xr:
        return np.inf, -np.inf, 0, 0
    return query_rect(tmin, tmax, tsum, xl, xr, yl, yr)


class SegTree2D:
    """Immutable rectangular min/max/count index over one depth image."""

    def __init__(self, tmin: np.ndarray, tmax: np.ndarray, tsum: np.ndarray, panoramic: bool):
        self.tmin = tmin
        self.tmax = tmax
        self.tsum = tsum
        self.panoramic = panoramic
        self.last_visited = 0

    @classmethod
    def build(cls, image: DepthImage | np.ndarray, panoramic: bool | None = None) -> "SegTree2D":
        if isinstance(image, DepthImage):
            depth = image.depth
            if panoramic is None:
                panoramic = image.spec.panoramic
        else:
            depth = np.asarray(image, dtype=np.float64)
        if depth.ndim != 2 or depth.shape[0] < 1 or depth.shape[1] < 1:
            raise InvalidParameterError("segment tree needs an image of at least 1x1")
        tmin, tmax, tsum = _build(np.ascontiguousarray(depth, dtype=np.float64))
        return cls(tmin, tmax, tsum, bool(panoramic))

    @property
    def height(self) -> int:
        return self.tmin.shape[0] // 2

    @property
    def width(self) -> int:
        return self.tmin.shape[1] // 2

    def root(self) -> RangeAggregate:
        return self.query(PixelRect(0, self.width - 1, 0, self.height - 1))

    def query(self, rect: PixelRect) -> RangeAggregate:
        mn, mx, s, visited = query_wrapped(
            self.tmin, self.tmax, self.tsum, rect.xL, rect.xR, rect.yL, rect.yR, self.panoramic
        )
        self.last_visited = int(visited)
        return RangeAggregate(float(mn), float(mx), int(s))


def brute_force(depth: np.ndarray, rect: PixelRect) -> RangeAggregate:
    """Reference aggregate by scanning every pixel of a non-wrapping rectangle."""
    H, W = depth.shape
    mn, mx, s = math.inf, -math.inf, 0
    for y in range(max(rect.yL, 0), min(rect.yR, H - 1) + 1):
        for x in range(max(rect.xL, 0), min(rect.xR, W - 1) + 1):
            v = depth[y, x]
            if math.isfinite(v):
                mn = min(mn, v)
                mx = max(mx, v)
                s += 1
    return RangeAggregate(mn, mx, s)
