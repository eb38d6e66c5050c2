"""Octree of unknown space.

A node that exists represents unknown space: a leaf is a fully unknown cube,
and a missing child of an internal node is known space.  Updates walk the tree
from the root, split cells that cannot be decided yet and delete cells that
became known, so the structure only shrinks inside its window.

Node geometry is integer: every node stores the lattice coordinates of its
minimum corner (relative to the window origin, in units of the map
resolution) and a level, the node side being ``2**level`` cells.  The root
side is rounded up to ``d * 2**k`` so leaves at level 0 coincide with the
occupied-grid lattice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .depth_image import DepthImage
from .determination import (
    KNOWN,
    UNDETERMINED,
    UNKNOWN,
    ProjectionRadius,
    crossed_by_return,
    determine_cell,
)
from .geometry import InvalidParameterError, SensorModel, SensorPose
from .segtree2d import SegTree2D

ALL_UNKNOWN = 0
ALL_KNOWN = 1
MIXED = 2

KEY_BITS = 21
KEY_MASK = (1 << KEY_BITS) - 1

# meta slots
_ROOT, _USED, _NFREE, _LIVE = 0, 1, 2, 3


@dataclass(frozen=True)
class MapConfig:
    resolution: float
    bbox_min: np.ndarray
    bbox_max: np.ndarray
    initial_cell_size: float = 5.0
    epsilon: float = 0.8
    projection_radius: ProjectionRadius = ProjectionRadius.half_side

    def __post_init__(self) -> None:
        lo = np.asarray(self.bbox_min, dtype=np.float64).reshape(3)
        hi = np.asarray(self.bbox_max, dtype=np.float64).reshape(3)
        object.__setattr__(self, "bbox_min", lo)
        object.__setattr__(self, "bbox_max", hi)
        if not self.resolution > 0:
            raise InvalidParameterError("resolution must be positive")
        if not self.initial_cell_size >= self.resolution:
            raise InvalidParameterError("initial cell size must be at least the resolution")
        if not 0 < self.epsilon <= 1:
            raise InvalidParameterError("completeness threshold must lie in (0, 1]")
        if not np.all(hi > lo):
            raise InvalidParameterError("bounding box is degenerate")


@dataclass(frozen=True)
class SensingArea:
    pose: SensorPose
    sensor: SensorModel


@dataclass(frozen=True)
class OctreeNode:
    """Read-only view of one node."""

    index: int
    center: np.ndarray
    size: float
    children: tuple[int, ...] = field(default=())

    @property
    def is_leaf(self) -> bool:
        return not self.children


# ---------------------------------------------------------------- kernels


@nb.njit(cache=True)
def _grow(children, leaf, corner, level, logodds, observed, freestk):
    old = children.shape[0]
    cap = old * 2
    c2 = np.full((cap, 8), -1, dtype=np.int32)
    c2[:old] = children
    l2 = np.zeros(cap, dtype=np.bool_)
    l2[:old] = leaf
    k2 = np.zeros((cap, 3), dtype=np.int64)
    k2[:old] = corner
    v2 = np.zeros(cap, dtype=np.int8)
    v2[:old] = level
    g2 = np.zeros(cap, dtype=np.float64)
    g2[:old] = logodds
    o2 = np.zeros(cap, dtype=np.bool_)
    o2[:old] = observed
    f2 = np.zeros(cap, dtype=np.int32)
    f2[:old] = freestk
    return c2, l2, k2, v2, g2, o2, f2


@nb.njit(cache=True, inline="always")
def _alloc(meta, children, leaf, freestk):
    if meta[_NFREE] > 0:
        meta[_NFREE] -= 1
        n = freestk[meta[_NFREE]]
    else:
        n = meta[_USED]
        meta[_USED] += 1
    for k in range(8):
        children[n, k] = -1
    leaf[n] = True
    meta[_LIVE] += 1
    return n


@nb.njit(cache=True)
def _free_subtree(n, meta, children, leaf, level, freestk):
    """Release ``n`` and its descendants; returns the unknown volume in cells."""
    cells = 0
    stk = [n]
    while len(stk) > 0:
        m = stk.pop()
        if leaf[m]:
            s = 1 << level[m]
            cells += s * s * s
        else:
            for k in range(8):
                c = children[m, k]
                if c >= 0:
                    stk.append(c)
        for k in range(8):
            children[m, k] = -1
        leaf[m] = False
        freestk[meta[_NFREE]] = m
        meta[_NFREE] += 1
        meta[_LIVE] -= 1
    return cells


@nb.njit(cache=True, inline="always")
def _detach(parent, octant, meta, children):
    if parent >= 0:
        children[parent, octant] = -1
    else:
        meta[_ROOT] = -1


@nb.njit(cache=True, inline="always")
def _has_children(n, children):
    for k in range(8):
        if children[n, k] >= 0:
            return True
    return False


@nb.njit(cache=True)
def intersects_area(cx, cy, cz, L, rot, trans, R, half_h, half_v, panoramic):
    """Conservative cube / sensing-sector overlap test (no false negatives)."""
    h = 0.5 * L
    dx = cx - trans[0]
    dy = cy - trans[1]
    dz = cz - trans[2]
    ex = max(abs(dx) - h, 0.0)
    ey = max(abs(dy) - h, 0.0)
    ez = max(abs(dz) - h, 0.0)
    if ex * ex + ey * ey + ez * ez > R * R:
        return False
    rc = math.sqrt(dx * dx + dy * dy + dz * dz)
    rho = math.sqrt(3.0) * h
    if rc <= rho:
        return True
    beta = math.asin(rho / rc)
    vx = rot[0, 0] * dx + rot[1, 0] * dy + rot[2, 0] * dz
    vy = rot[0, 1] * dx + rot[1, 1] * dy + rot[2, 1] * dz
    vz = rot[0, 2] * dx + rot[1, 2] * dy + rot[2, 2] * dz
    phi = math.asin(max(-1.0, min(1.0, vz / rc)))
    if phi - beta > half_v or phi + beta < -half_v:
        return False
    if not panoramic and abs(phi) + beta < 0.5 * math.pi:
        hw = math.asin(min(1.0, math.sin(beta) / math.cos(phi)))
        if abs(math.atan2(vy, vx)) - hw > half_h:
            return False
    return True


@nb.njit(cache=True)
def _contains_key(sorted_keys, key):
    if sorted_keys.shape[0] == 0:
        return False
    i = np.searchsorted(sorted_keys, key)
    return i < sorted_keys.shape[0] and sorted_keys[i] == key


@nb.njit(cache=True)
def update_kernel(
    children, leaf, corner, level, logodds, observed, freestk, meta,
    d, origin, E,
    rot, trans, R, half_h, half_v, fov_panoramic,
    psi, theta_min, phi_min, img_panoramic, tmin, tmax, tsum, depth, hit,
    eps, radius_scale,
    prob_mode, l_free, hit_keys,
):
    """Coarse-to-fine update of the unknown octree against one depth image.

    Returns the (possibly reallocated) pool arrays, the number of determined
    nodes and the removed unknown volume in cells.
    """
    visited = 0
    removed = 0
    root = meta[_ROOT]
    if root < 0:
        return children, leaf, corner, level, logodds, observed, freestk, visited, removed
    # stack entries: node, parent, octant, phase
    sn = [root]
    sp = [-1]
    so = [0]
    sph = [0]
    while len(sn) > 0:
        n = sn.pop()
        parent = sp.pop()
        octant = so.pop()
        phase = sph.pop()
        if phase == 1:
            if not prob_mode and not _has_children(n, children):
                _free_subtree(n, meta, children, leaf, level, freestk)
                _detach(parent, octant, meta, children)
            continue
        lv = level[n]
        s = 1 << lv
        L = s * d
        cx = origin[0] + (corner[n, 0] + 0.5 * s) * d
        cy = origin[1] + (corner[n, 1] + 0.5 * s) * d
        cz = origin[2] + (corner[n, 2] + 0.5 * s) * d
        if not intersects_area(cx, cy, cz, L, rot, trans, R, half_h, half_v, fov_panoramic):
            continue
        visited += 1
        if L > E:
            st = UNDETERMINED
        else:
            st = determine_cell(
                cx, cy, cz, L, rot, trans, psi, theta_min, phi_min, img_panoramic,
                tmin, tmax, tsum, depth, hit, eps, radius_scale,
            )[0]
        if st == UNDETERMINED and lv == 0:
            # a finest cell is known only if a return actually hit or passed through it
            if not crossed_by_return(cx, cy, cz, L, rot, trans, psi, theta_min, phi_min,
                                     img_panoramic, depth, hit):
                st = UNKNOWN
        if st == UNKNOWN:
            continue
        if st == KNOWN or lv == 0:
            if prob_mode:
                if lv == 0:
                    key = corner[n, 0] | (corner[n, 1] << KEY_BITS) | (corner[n, 2] << (2 * KEY_BITS))
                    if _contains_key(hit_keys, key):
                        continue
                logodds[n] += l_free
                observed[n] = True
            else:
                removed += _free_subtree(n, meta, children, leaf, level, freestk)
                _detach(parent, octant, meta, children)
            continue
        if leaf[n]:
            if meta[_NFREE] < 8 and meta[_USED] + 8 > children.shape[0]:
                children, leaf, corner, level, logodds, observed, freestk = _grow(
                    children, leaf, corner, level, logodds, observed, freestk
                )
            half = s >> 1
            for k in range(8):
                c = _alloc(meta, children, leaf, freestk)
                corner[c, 0] = corner[n, 0] + (k & 1) * half
                corner[c, 1] = corner[n, 1] + ((k >> 1) & 1) * half
                corner[c, 2] = corner[n, 2] + ((k >> 2) & 1) * half
                level[c] = lv - 1
                logodds[c] = 0.0
                observed[c] = False
                children[n, k] = c
            leaf[n] = False
        sn.append(n)
        sp.append(parent)
        so.append(octant)
        sph.append(1)
        for k in range(7, -1, -1):
            c = children[n, k]
            if c >= 0:
                sn.append(c)
                sp.append(n)
                so.append(k)
                sph.append(0)
    return children, leaf, corner, level, logodds, observed, freestk, visited, removed


@nb.njit(cache=True)
def carve_kernel(children, leaf, corner, level, logodds, observed, freestk, meta, root_level, keys):
    """Mark lattice cells (relative keys, shape (n, 3)) as known.

    Returns the pool arrays and the removed unknown volume in cells.
    """
    removed = 0
    side = 1 << root_level
    path = np.empty(root_level + 1, dtype=np.int32)
    pocts = np.empty(root_level + 1, dtype=np.int32)
    for i in range(keys.shape[0]):
        kx = keys[i, 0]
        ky = keys[i, 1]
        kz = keys[i, 2]
        if kx < 0 or ky < 0 or kz < 0 or kx >= side or ky >= side or kz >= side:
            continue
        n = meta[_ROOT]
        if n < 0:
            break
        depth_i = 0
        lv = root_level
        parent = -1
        octant = 0
        found = True
        while lv > 0:
            if leaf[n]:
                if meta[_NFREE] < 8 and meta[_USED] + 8 > children.shape[0]:
                    children, leaf, corner, level, logodds, observed, freestk = _grow(
                        children, leaf, corner, level, logodds, observed, freestk
                    )
                half = 1 << (lv - 1)
                for k in range(8):
                    c = _alloc(meta, children, leaf, freestk)
                    corner[c, 0] = corner[n, 0] + (k & 1) * half
                    corner[c, 1] = corner[n, 1] + ((k >> 1) & 1) * half
                    corner[c, 2] = corner[n, 2] + ((k >> 2) & 1) * half
                    level[c] = lv - 1
                    logodds[c] = 0.0
                    observed[c] = False
                    children[n, k] = c
                leaf[n] = False
            path[depth_i] = n
            pocts[depth_i] = octant
            depth_i += 1
            lv -= 1
            octant = ((kx >> lv) & 1) | (((ky >> lv) & 1) << 1) | (((kz >> lv) & 1) << 2)
            c = children[n, octant]
            if c < 0:
                found = False
                break
            parent = n
            n = c
        if not found:
            continue
        removed += _free_subtree(n, meta, children, leaf, level, freestk)
        _detach(parent, octant, meta, children)
        # prune ancestors left without children
        for j in range(depth_i - 1, -1, -1):
            a = path[j]
            if _has_children(a, children):
                break
            _free_subtree(a, meta, children, leaf, level, freestk)
            if j > 0:
                children[path[j - 1], pocts[j]] = -1
            else:
                meta[_ROOT] = -1
    return children, leaf, corner, level, logodds, observed, freestk, removed


@nb.njit(cache=True)
def query_kernel(children, leaf, logodds, observed, root, root_level, keys):
    """Per key: (unknown flag, accumulated log-odds, observed flag)."""
    n_keys = keys.shape[0]
    unknown = np.zeros(n_keys, dtype=np.bool_)
    lsum = np.zeros(n_keys, dtype=np.float64)
    seen = np.zeros(n_keys, dtype=np.bool_)
    side = 1 << root_level
    for i in range(n_keys):
        kx = keys[i, 0]
        ky = keys[i, 1]
        kz = keys[i, 2]
        if kx < 0 or ky < 0 or kz < 0 or kx >= side or ky >= side or kz >= side:
            unknown[i] = True
            continue
        n = root
        lv = root_level
        acc = 0.0
        obs = False
        while True:
            if n < 0:
                break
            acc += logodds[n]
            obs = obs or observed[n]
            if leaf[n]:
                unknown[i] = True
                break
            lv -= 1
            octant = ((kx >> lv) & 1) | (((ky >> lv) & 1) << 1) | (((kz >> lv) & 1) << 2)
            n = children[n, octant]
        lsum[i] = acc
        seen[i] = obs
    return unknown, lsum, seen


@nb.njit(cache=True)
def collect_leaves(children, leaf, corner, level, logodds, observed, root):
    """Leaves in depth-first order: corners, levels, accumulated log-odds, observed."""
    out_c = []
    out_l = []
    out_g = []
    out_o = []
    if root >= 0:
        sn = [root]
        sg = [0.0]
        so = [False]
        while len(sn) > 0:
            n = sn.pop()
            g = sg.pop() + logodds[n]
            o = so.pop() or observed[n]
            if leaf[n]:
                out_c.append((corner[n, 0], corner[n, 1], corner[n, 2]))
                out_l.append(level[n])
                out_g.append(g)
                out_o.append(o)
            else:
                for k in range(8):
                    c = children[n, k]
                    if c >= 0:
                        sn.append(c)
                        sg.append(g)
                        so.append(o)
    m = len(out_c)
    corners = np.empty((m, 3), dtype=np.int64)
    levels = np.empty(m, dtype=np.int8)
    lsum = np.empty(m, dtype=np.float64)
    obs = np.empty(m, dtype=np.bool_)
    for i in range(m):
        corners[i, 0] = out_c[i][0]
        corners[i, 1] = out_c[i][1]
        corners[i, 2] = out_c[i][2]
        levels[i] = out_l[i]
        lsum[i] = out_g[i]
        obs[i] = out_o[i]
    return corners, levels, lsum, obs


@nb.njit(cache=True)
def classify_region(children, leaf, corner, level, root, root_level, lo, hi):
    """Status of the half-open lattice box [lo, hi) in an existing tree."""
    if root < 0:
        return ALL_KNOWN
    saw_unknown = False
    saw_known = False
    stk = [root]
    while len(stk) > 0:
        n = stk.pop()
        if leaf[n]:
            saw_unknown = True
        else:
            half = 1 << (level[n] - 1)
            for k in range(8):
                c0 = corner[n, 0] + (k & 1) * half
                c1 = corner[n, 1] + ((k >> 1) & 1) * half
                c2 = corner[n, 2] + ((k >> 2) & 1) * half
                if (c0 + half <= lo[0] or c0 >= hi[0] or c1 + half <= lo[1] or c1 >= hi[1]
                        or c2 + half <= lo[2] or c2 >= hi[2]):
                    continue
                c = children[n, k]
                if c < 0:
                    saw_known = True
                else:
                    stk.append(c)
        if saw_unknown and saw_known:
            return MIXED
    if saw_unknown:
        return ALL_UNKNOWN
    return ALL_KNOWN


@nb.njit(cache=True)
def slide_kernel(o_children, o_leaf, o_corner, o_level, o_root, o_root_level, shift,
                 children, leaf, corner, level, logodds, observed, freestk, meta, root_level):
    """Fill a fresh pool (root already allocated) with the old tree seen through a shifted window."""
    o_side = 1 << o_root_level
    lo = np.empty(3, dtype=np.int64)
    hi = np.empty(3, dtype=np.int64)
    sn = [meta[_ROOT]]
    sp = [-1]
    so = [0]
    sph = [0]
    while len(sn) > 0:
        n = sn.pop()
        parent = sp.pop()
        octant = so.pop()
        phase = sph.pop()
        if phase == 1:
            if not _has_children(n, children):
                _free_subtree(n, meta, children, leaf, level, freestk)
                _detach(parent, octant, meta, children)
            continue
        s = 1 << level[n]
        full = True
        empty = False
        for a in range(3):
            r0 = corner[n, a] + shift[a]
            r1 = r0 + s
            lo[a] = max(r0, 0)
            hi[a] = min(r1, o_side)
            if lo[a] >= hi[a]:
                empty = True
            if r0 < 0 or r1 > o_side:
                full = False
        if empty:
            continue
        st = classify_region(o_children, o_leaf, o_corner, o_level, o_root, o_root_level, lo, hi)
        if st == ALL_UNKNOWN:
            continue
        if st == ALL_KNOWN and full:
            _free_subtree(n, meta, children, leaf, level, freestk)
            _detach(parent, octant, meta, children)
            continue
        # mixed, or known-but-partially-outside: refine
        if meta[_NFREE] < 8 and meta[_USED] + 8 > children.shape[0]:
            children, leaf, corner, level, logodds, observed, freestk = _grow(
                children, leaf, corner, level, logodds, observed, freestk
            )
        half = s >> 1
        for k in range(8):
            c = _alloc(meta, children, leaf, freestk)
            corner[c, 0] = corner[n, 0] + (k & 1) * half
            corner[c, 1] = corner[n, 1] + ((k >> 1) & 1) * half
            corner[c, 2] = corner[n, 2] + ((k >> 2) & 1) * half
            level[c] = level[n] - 1
            logodds[c] = 0.0
            observed[c] = False
            children[n, k] = c
        leaf[n] = False
        sn.append(n)
        sp.append(parent)
        so.append(octant)
        sph.append(1)
        for k in range(8):
            sn.append(children[n, k])
            sp.append(n)
            so.append(k)
            sph.append(0)
    return children, leaf, corner, level, logodds, observed, freestk


# ---------------------------------------------------------------- wrapper


def window_for(config: MapConfig) -> tuple[np.ndarray, int]:
    """Lattice origin and root level of the smallest aligned cube covering the bbox."""
    d = config.resolution
    longest = float(np.max(config.bbox_max - config.bbox_min))
    level = max(0, math.ceil(math.log2(longest / d) - 1e-9))
    center = 0.5 * (config.bbox_min + config.bbox_max)
    while True:
        side = 1 << level
        origin = np.round(center / d - side / 2.0).astype(np.int64)
        lo = origin * d
        hi = (origin + side) * d
        tol = 1e-9 * max(1.0, float(np.max(np.abs(center))))
        if np.all(lo <= config.bbox_min + tol) and np.all(hi >= config.bbox_max - tol):
            return origin, level
        level += 1


def encode_keys(rel: np.ndarray) -> np.ndarray:
    rel = np.asarray(rel, dtype=np.int64)
    return rel[:, 0] | (rel[:, 1] << KEY_BITS) | (rel[:, 2] << (2 * KEY_BITS))


class UnknownOctree:
    """Unknown-space octree over an aligned cubic window."""

    def __init__(self, config: MapConfig, origin: np.ndarray, root_level: int, capacity: int = 1024):
        if root_level > KEY_BITS:
            raise InvalidParameterError("window too large for the lattice key width")
        self.config = config
        self.origin = np.asarray(origin, dtype=np.int64)
        self.root_level = int(root_level)
        cap = max(16, capacity)
        self.children = np.full((cap, 8), -1, dtype=np.int32)
        self.leaf = np.zeros(cap, dtype=np.bool_)
        self.corner = np.zeros((cap, 3), dtype=np.int64)
        self.level = np.zeros(cap, dtype=np.int8)
        self.logodds = np.zeros(cap, dtype=np.float64)
        self.observed = np.zeros(cap, dtype=np.bool_)
        self.freestk = np.zeros(cap, dtype=np.int32)
        self.meta = np.zeros(4, dtype=np.int64)
        root = 0
        self.meta[_USED] = 1
        self.meta[_LIVE] = 1
        self.meta[_ROOT] = root
        self.leaf[root] = True
        self.level[root] = self.root_level

    @classmethod
    def init(cls, config: MapConfig) -> "UnknownOctree":
        origin, level = window_for(config)
        return cls(config, origin, level)

    # -- geometry -------------------------------------------------------
    @property
    def resolution(self) -> float:
        return self.config.resolution

    @property
    def root_size(self) -> float:
        return (1 << self.root_level) * self.config.resolution

    @property
    def window_min(self) -> np.ndarray:
        return self.origin * self.config.resolution

    @property
    def window_max(self) -> np.ndarray:
        return (self.origin + (1 << self.root_level)) * self.config.resolution

    @property
    def window_center(self) -> np.ndarray:
        return (self.origin + 0.5 * (1 << self.root_level)) * self.config.resolution

    @property
    def root(self) -> int:
        return int(self.meta[_ROOT])

    @property
    def node_count(self) -> int:
        return int(self.meta[_LIVE])

    def node(self, index: int) -> OctreeNode:
        s = 1 << int(self.level[index])
        center = (self.origin + self.corner[index] + 0.5 * s) * self.config.resolution
        kids = () if self.leaf[index] else tuple(int(c) for c in self.children[index])
        return OctreeNode(index, center, s * self.config.resolution, kids)

    def root_node(self) -> OctreeNode | None:
        return None if self.root < 0 else self.node(self.root)

    def keys_for(self, points: np.ndarray) -> np.ndarray:
        """Window-relative lattice keys of world points."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return np.floor(pts / self.config.resolution).astype(np.int64) - self.origin

    # -- updates --------------------------------------------------------
    def _set_pool(self, pool) -> None:
        (self.children, self.leaf, self.corner, self.level,
         self.logodds, self.observed, self.freestk) = pool

    def update(
        self,
        area: SensingArea,
        tree: SegTree2D,
        image: DepthImage,
        probability_mode: bool = False,
        l_free: float = 0.0,
        hit_keys: np.ndarray | None = None,
    ) -> tuple[int, float]:
        """Run one on-tree update; returns (determined nodes, removed unknown volume m^3)."""
        if not np.isfinite(image.depth).any():
            # no return at all: nothing was observed, not even the sensor's own cell
            return 0, 0.0
        cfg = self.config
        sensor = area.sensor
        spec = image.spec
        hk = np.zeros(0, dtype=np.int64) if hit_keys is None else np.ascontiguousarray(hit_keys, dtype=np.int64)
        out = update_kernel(
            self.children, self.leaf, self.corner, self.level, self.logodds, self.observed,
            self.freestk, self.meta,
            cfg.resolution, (self.origin * cfg.resolution).astype(np.float64), cfg.initial_cell_size,
            area.pose.matrix, area.pose.translation, sensor.detection_range,
            sensor.fov_h / 2.0, sensor.fov_v / 2.0, sensor.panoramic,
            spec.psi_I, spec.theta_min, spec.phi_min, spec.panoramic,
            tree.tmin, tree.tmax, tree.tsum, image.depth, image.point_hit,
            cfg.epsilon, cfg.projection_radius.value,
            probability_mode, l_free, hk,
        )
        self._set_pool(out[:7])
        return int(out[7]), float(out[8]) * cfg.resolution**3

    def carve(self, points: np.ndarray) -> float:
        """Mark the lattice cells containing ``points`` as known; returns removed volume."""
        keys = np.unique(self.keys_for(points), axis=0)
        if len(keys) == 0 or self.root < 0:
            return 0.0
        out = carve_kernel(
            self.children, self.leaf, self.corner, self.level, self.logodds, self.observed,
            self.freestk, self.meta, self.root_level, keys,
        )
        self._set_pool(out[:7])
        return float(out[7]) * self.config.resolution**3

    # -- queries --------------------------------------------------------
    def query_keys(self, keys: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        keys = np.ascontiguousarray(np.asarray(keys, dtype=np.int64).reshape(-1, 3))
        return query_kernel(self.children, self.leaf, self.logodds, self.observed,
                            self.root, self.root_level, keys)

    def query_unknown_many(self, points: np.ndarray) -> np.ndarray:
        return self.query_keys(self.keys_for(points))[0]

    def query_unknown(self, point) -> bool:
        """True when the resolution-d cell containing ``point`` is unknown.

        Points outside the window are reported unknown.
        """
        return bool(self.query_unknown_many(np.asarray(point, dtype=np.float64)[None, :])[0])

    def leaves(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Window-relative corners, levels, accumulated log-odds and observed flags of all leaves."""
        return collect_leaves(self.children, self.leaf, self.corner, self.level,
                              self.logodds, self.observed, self.root)

    def unknown_volume(self) -> float:
        _, levels, _, _ = self.leaves()
        sides = np.left_shift(np.int64(1), levels.astype(np.int64))
        return float(np.sum(sides**3)) * self.config.resolution**3

    def max_depth(self) -> int:
        _, levels, _, _ = self.leaves()
        return 0 if len(levels) == 0 else self.root_level - int(levels.min())

    def check_structure(self) -> None:
        """Assert the structural invariants; used by tests."""
        root = self.root
        if root < 0:
            return
        stack = [root]
        while stack:
            n = stack.pop()
            if self.leaf[n]:
                assert np.all(self.children[n] < 0)
                continue
            kids = [int(c) for c in self.children[n] if c >= 0]
            assert kids, f"internal node {n} has no children"
            half = 1 << (int(self.level[n]) - 1)
            for k in range(8):
                c = int(self.children[n, k])
                if c < 0:
                    continue
                assert self.level[c] == self.level[n] - 1
                off = np.array([k & 1, (k >> 1) & 1, (k >> 2) & 1]) * half
                assert np.array_equal(self.corner[c], self.corner[n] + off)
                stack.append(c)

    # -- sliding --------------------------------------------------------
    def slide(self, new_center) -> "UnknownOctree":
        """Tree over the window re-centred at ``new_center`` (snapped to the lattice).

        Content outside the new window is dropped; space entering the window is unknown.
        """
        d = self.config.resolution
        side = 1 << self.root_level
        # nearest lattice origin, so centres computed in floating point do not drift a cell
        new_origin = np.round(np.asarray(new_center, dtype=np.float64) / d - side / 2.0).astype(np.int64)
        return self.shifted(new_origin - self.origin)

    def shifted(self, shift: np.ndarray) -> "UnknownOctree":
        shift = np.asarray(shift, dtype=np.int64).reshape(3)
        out = UnknownOctree(self.config, self.origin + shift, self.root_level,
                            capacity=max(1024, self.node_count + 64))
        pool = slide_kernel(
            self.children, self.leaf, self.corner, self.level, self.root, self.root_level, shift,
            out.children, out.leaf, out.corner, out.level, out.logodds, out.observed,
            out.freestk, out.meta, out.root_level,
        )
        out._set_pool(pool)
        return out

    # -- (de)serialization helpers -----------------------------------------
    @classmethod
    def from_leaves(
        cls,
        config: MapConfig,
        origin: np.ndarray,
        root_level: int,
        corners: np.ndarray,
        levels: np.ndarray,
        logodds: np.ndarray | None = None,
        observed: np.ndarray | None = None,
    ) -> "UnknownOctree":
        """Rebuild a tree whose leaves are exactly the given cubes."""
        tree = cls(config, origin, root_level, capacity=max(1024, 2 * len(corners) * 2))
        if len(corners) == 0:
            tree.leaf[0] = False
            tree.freestk[0] = 0
            tree.meta[_NFREE] = 1
            tree.meta[_LIVE] = 0
            tree.meta[_ROOT] = -1
            return tree
        if len(corners) == 1 and int(levels[0]) == root_level:
            if logodds is not None:
                tree.logodds[0] = logodds[0]
            if observed is not None:
                tree.observed[0] = observed[0]
            return tree
        tree.leaf[0] = False
        for i in range(len(corners)):
            n = 0
            lv = root_level
            c = corners[i]
            while lv > int(levels[i]):
                lv -= 1
                octant = ((c[0] >> lv) & 1) | (((c[1] >> lv) & 1) << 1) | (((c[2] >> lv) & 1) << 2)
                child = int(tree.children[n, octant])
                if child < 0:
                    if tree.meta[_NFREE] < 1 and tree.meta[_USED] + 1 > tree.children.shape[0]:
                        tree._set_pool(_grow(tree.children, tree.leaf, tree.corner, tree.level,
                                             tree.logodds, tree.observed, tree.freestk))
                    child = int(tree.meta[_USED])
                    tree.meta[_USED] += 1
                    tree.meta[_LIVE] += 1
                    tree.corner[child] = (c >> lv) << lv
                    tree.level[child] = lv
                    tree.leaf[child] = lv == int(levels[i])
                    tree.children[n, octant] = child
                n = child
            if logodds is not None:
                tree.logodds[n] = logodds[i]
            if observed is not None:
                tree.observed[n] = observed[i]
        return tree
