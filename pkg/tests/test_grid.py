import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dmap import OccupiedGrid, ProbabilityParams, VoxelKey, voxel_hash
from dmap.grid import P, Q, voxel_hash_many


def test_hash_examples():
    assert voxel_hash((0, 0, 0)) == 0
    assert voxel_hash((2, 0, 0)) == 2
    assert voxel_hash((-1, 0, 0)) == 201326610


@given(st.integers(-(2**20), 2**20), st.integers(-(2**20), 2**20), st.integers(-(2**20), 2**20))
def test_hash_in_range_and_vectorised(x, y, z):
    h = voxel_hash((x, y, z))
    assert 0 <= h < Q
    assert h == (P * P * z + P * y + x) % Q
    assert voxel_hash_many(np.array([[x, y, z]]))[0] == h


def test_vectorised_hash_on_wide_keys(rng):
    k = rng.integers(-(2**40), 2**40, size=(2000, 3))
    assert voxel_hash_many(k).tolist() == [voxel_hash(t) for t in k.tolist()]


def test_key_of_point():
    assert VoxelKey.of((0.05, 0.05, 0.05), 0.1) == (0, 0, 0)
    assert VoxelKey.of((-0.05, 0.15, 0.0), 0.1) == (-1, 1, 0)


def test_insert_and_membership():
    g = OccupiedGrid(0.1)
    assert g.insert_points(np.array([[0.05, 0.05, 0.05]])) == 1
    assert (0, 0, 0) in g and g.is_occupied((0, 0, 0))
    assert g.insert_points(np.array([[0.05, 0.05, 0.05]])) == 0
    assert len(g) == 1
    assert not g.is_occupied((1, 0, 0))


def test_quantization_matches_floor(rng):
    pts = rng.uniform(-30, 30, size=(100_000, 3))
    g = OccupiedGrid(0.1)
    g.insert_points(pts)
    want = {tuple(k) for k in np.floor(pts / 0.1).astype(np.int64).tolist()}
    assert {tuple(k) for k, _ in g.items()} == want
    assert g.contains_many(np.floor(pts / 0.1).astype(np.int64)).all()


def test_colliding_keys_stay_distinct():
    a = (5, 1, 0)
    b = (5 + P, 0, 0)
    assert voxel_hash(a) == voxel_hash(b)
    g = OccupiedGrid(1.0)
    g.insert_keys(np.array([a]))
    assert b not in g
    g.insert_keys(np.array([b]))
    assert a in g and b in g and len(g) == 2
    assert sorted(g.bucket(voxel_hash(a))) == sorted([VoxelKey(*a), VoxelKey(*b)])


def test_modulus_offset_keys_share_a_bucket():
    keys = np.array([[7, 0, 0], [7 + Q, 0, 0], [7 - Q, 0, 0], [7, 0, Q]])
    assert len(set(voxel_hash_many(keys).tolist())) == 1
    g = OccupiedGrid(1.0)
    assert g.insert_keys(keys) == 4
    assert g.n_buckets == 1 and len(g.bucket(7)) == 4
    g.remove_outside(np.array([0, 0, 0]), np.array([Q, 1, 1]))
    assert len(g) == 1 and g.bucket(7) == [VoxelKey(7, 0, 0)]


def test_probability_threshold_example():
    p = ProbabilityParams.depth_camera()
    g = OccupiedGrid(0.1, p)
    k = np.array([[1, 2, 3]])
    g.insert_keys(k)
    assert g.logodds((1, 2, 3)) == pytest.approx(math.log(0.7 / 0.3))
    assert not g.is_occupied((1, 2, 3))
    for _ in range(4):
        g.insert_keys(k)
    # five hits: 5 * 0.847 = 4.24 > log(9) = 2.197
    assert g.is_occupied((1, 2, 3))
    # three hits: 2.54 > 2.197 so the flip happens on the third hit
    h = OccupiedGrid(0.1, p)
    states = []
    for _ in range(3):
        h.insert_keys(k)
        states.append(h.is_occupied((1, 2, 3)))
    assert states == [False, False, True]


def test_lidar_clamp():
    p = ProbabilityParams.lidar()
    g = OccupiedGrid(0.1, p)
    k = np.array([[0, 0, 0]])
    for _ in range(5):
        g.insert_keys(k)
    assert g.logodds((0, 0, 0)) == pytest.approx(math.log(0.9999 / 0.0001))


def test_remove_outside(rng):
    g = OccupiedGrid(1.0)
    keys = rng.integers(-10, 10, size=(500, 3))
    g.insert_keys(keys)
    g.remove_outside(np.array([0, 0, 0]), np.array([5, 5, 5]))
    left = g.sorted_keys()
    assert np.all((left >= 0) & (left < 5))
    want = {tuple(k) for k in keys.tolist() if all(0 <= v < 5 for v in k)}
    assert {tuple(k) for k in left.tolist()} == want


def test_random_keys_never_merge(rng):
    keys = np.unique(rng.integers(0, Q, size=(100_000, 3)), axis=0)
    g = OccupiedGrid(1.0)
    g.insert_keys(keys)
    assert len(g) == len(keys)
    assert g.contains_many(keys).all()
    assert sum(len(g.bucket(h)) for h in set(voxel_hash_many(keys).tolist())) == len(keys)
    assert not g.contains_many(keys + np.array([Q, 0, 0])).any()
