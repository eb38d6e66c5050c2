import math

import numpy as np
import pytest

from dmap import InvalidParameterError, SensorModel, SensorPose, compute_resolution, rasterize
from dmap.scene import (
    Box,
    Scene,
    TrajectorySpec,
    generate_scan,
    ray_directions,
    room_scene,
    room_trajectory,
    simulate_sequence,
    wall_scene,
    worst_case_scan,
)

SENSOR = SensorModel(30.0, 2 * math.pi, math.radians(90), math.radians(2.0))


def test_empty_scene_gives_empty_scan():
    scan = generate_scan(Scene(np.zeros(3), np.ones(3)), SensorPose.identity(), SENSOR)
    assert len(scan) == 0


def test_wall_ranges_follow_incidence():
    s = SensorModel(40.0, math.radians(100), math.radians(60), math.radians(1.0))
    scan = generate_scan(wall_scene(5.0), SensorPose.identity(), s)
    dirs = ray_directions(s)
    assert len(scan) == len(dirs)
    r = np.linalg.norm(scan.points, axis=1)
    assert np.allclose(r, 5.0 / dirs[:, 0], rtol=1e-12)
    assert np.allclose(scan.points[:, 0], 5.0)


def test_noise_is_seeded():
    scene = room_scene()
    pose = SensorPose(np.array([6.0, 10.0, 1.5]))
    a = generate_scan(scene, pose, SENSOR, 0.03, seed=7)
    b = generate_scan(scene, pose, SENSOR, 0.03, seed=7)
    c = generate_scan(scene, pose, SENSOR, 0.03, seed=8)
    assert np.array_equal(a.points, b.points)
    assert not np.array_equal(a.points, c.points)
    with pytest.raises(InvalidParameterError):
        generate_scan(scene, pose, SENSOR, -1.0)


def test_pose_inside_solid_rejected():
    with pytest.raises(InvalidParameterError):
        generate_scan(room_scene(), SensorPose(np.array([4.0, 4.0, 0.5])), SENSOR)


def _dist_to_box(p, b):
    inside = np.all((p >= b.lo) & (p <= b.hi), axis=1)
    out = np.linalg.norm(np.maximum(np.maximum(b.lo - p, p - b.hi), 0), axis=1)
    face = np.min(np.minimum(p - b.lo, b.hi - p), axis=1)
    return np.where(inside, face, out)


def test_points_on_surfaces_and_in_range():
    scene = room_scene()
    scan = generate_scan(scene, SensorPose(np.array([10.5, 2.0, 1.5])), SENSOR)
    r = np.linalg.norm(scan.points - scan.pose.translation, axis=1)
    assert np.all(r <= SENSOR.detection_range)
    dist = np.min([_dist_to_box(scan.points, b) for b in scene.boxes], axis=0)
    assert np.all(dist <= 1e-9)


def test_worst_case_kinds():
    s = SensorModel(20.0, 2 * math.pi, math.radians(30), math.radians(3.0))
    d = 0.2
    spec = compute_resolution(d, s)
    sph = worst_case_scan("spherical", s, d)
    ser = worst_case_scan("serrated", s, d, r_min=2.0)
    assert len(sph) == len(ser) == spec.width * spec.height
    assert np.allclose(np.linalg.norm(sph.points, axis=1), 20.0)
    img = rasterize(ser, spec, s)
    assert img.filled.all()
    near = np.isclose(img.depth, 2.0)
    assert np.all(near ^ np.isclose(img.depth, 20.0))
    # horizontal and vertical neighbours alternate
    assert np.all(near[:, 1:] != near[:, :-1]) and np.all(near[1:, :] != near[:-1, :])
    with pytest.raises(InvalidParameterError):
        worst_case_scan("bogus", s, d)
    with pytest.raises(InvalidParameterError):
        worst_case_scan("serrated", s, d, r_min=25.0)


def test_text_round_trip():
    scene = room_scene()
    scene.triangles = wall_scene(3.0, 1.0).triangles
    again = Scene.loads(scene.dumps())
    assert again.dumps() == scene.dumps()
    assert len(again.boxes) == 11 and again.triangles.shape == (2, 3, 3)


@pytest.mark.parametrize(
    "text,line",
    [("bounds 0 0 0 1 1 1\nbox 0 0 0 1 1\n", 2), ("bounds 0 0 0 1 1 1\nsphere 1 2 3\n", 2),
     ("box 0 0 0 1 x 1\n", 1)],
)
def test_text_errors_carry_line(text, line):
    with pytest.raises(InvalidParameterError, match=f"line {line}"):
        Scene.loads(text)


def test_missing_bounds_and_bad_box():
    with pytest.raises(InvalidParameterError):
        Scene.loads("box 0 0 0 1 1 1\n")
    with pytest.raises(InvalidParameterError):
        Box([0, 0, 0], [1, 0, 1])


def test_trajectory_in_free_space():
    scene = room_scene()
    poses = room_trajectory(30).poses()
    assert len(poses) == 30
    assert not any(scene.inside_solid(p.translation) for p in poses)
    with pytest.raises(InvalidParameterError):
        TrajectorySpec(np.zeros((1, 3)), 3).poses()


def test_sequence_timestamps_and_determinism():
    a = simulate_sequence(room_scene(), room_trajectory(3), SENSOR, 0.01, seed=2)
    b = simulate_sequence(room_scene(), room_trajectory(3), SENSOR, 0.01, seed=2)
    assert [f.timestamp for f in a] == [0.0, 1.0, 2.0]
    assert all(np.array_equal(x.points, y.points) for x, y in zip(a, b))
