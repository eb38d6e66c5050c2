import math

import pytest
from fastapi.testclient import TestClient

from dmap.io import import_snapshot
from dmap.service import create_app

SENSOR = {"detection_range": 10.0, "fov_h_deg": 360.0, "fov_v_deg": 60.0, "angular_resolution_deg": 1.0}
MAP = {"resolution": 0.25, "bbox_min": [-8, -8, -4], "bbox_max": [8, 8, 4], "sensor": SENSOR}


@pytest.fixture()
def client():
    return TestClient(create_app())


def _wall_points(x=5.0, n=21):
    return [[x, -2 + 4 * i / (n - 1), -1 + 2 * j / (n - 1)] for i in range(n) for j in range(n)]


def _scan(ts=0.0, x=5.0):
    return {"timestamp": ts, "translation": [0, 0, 0], "rotation": [1, 0, 0, 0], "points": _wall_points(x)}


def test_map_lifecycle(client):
    r = client.post("/maps", json=MAP)
    assert r.status_code == 201
    mid = r.json()["map_id"]
    assert r.json()["gamma"] == 1.0
    r = client.post(f"/maps/{mid}/scans", json=_scan())
    assert r.status_code == 200
    st = r.json()
    assert st["n_points"] == 441 and st["removed_volume"] > 0
    r = client.post(f"/maps/{mid}/query", json={"points": [[5.01, 0.01, 0.01], [2.0, 0.1, 0.1], [7.5, 0.1, 0.1]]})
    assert r.json()["states"] == ["Occupied", "Free", "Unknown"]
    assert len(client.get(f"/maps/{mid}/stats").json()) == 1
    snap = client.get(f"/maps/{mid}/snapshot")
    assert snap.status_code == 200
    m = import_snapshot(snap.text)
    assert m.config.resolution == 0.25
    assert client.delete(f"/maps/{mid}").status_code == 204
    assert client.get(f"/maps/{mid}/stats").status_code == 404
    assert client.delete(f"/maps/{mid}").status_code == 404


def test_probability_mode(client):
    mid = client.post("/maps", json={**MAP, "mode": "probability"}).json()["map_id"]
    client.post(f"/maps/{mid}/scans", json=_scan())
    p = client.post(f"/maps/{mid}/probability", json={"points": [[5.01, 0.01, 0.01], [2.0, 0.1, 0.1], [7.5, 0.1, 0.1]]})
    hit, free, unseen = p.json()["probabilities"]
    assert hit > 0.5 > free and unseen == 0.5


def test_omega_sets_gamma(client):
    r = client.post("/maps", json={**MAP, "omega": 0.8})
    assert r.status_code == 201 and r.json()["gamma"] > 1.0
    g = client.get("/accuracy/gamma", params={"omega": 0.8, "alpha_fov_deg": 30.0}).json()["gamma"]
    assert math.isclose(r.json()["gamma"], g)


@pytest.mark.parametrize("patch", [
    {"resolution": -1}, {"resolution": 0.0}, {"gamma": 0.0}, {"gamma": -1.0}, {"gamma": 2.0, "omega": 0.9},
    {"epsilon": 1.5}, {"mode": "fast"}, {"bbox_max": [-9, 8, 8]},
    {"sensor": {**SENSOR, "angular_resolution_deg": 0}},
])
def test_invalid_map_parameters(client, patch):
    assert client.post("/maps", json={**MAP, **patch}).status_code == 422


def test_invalid_scans(client):
    mid = client.post("/maps", json=MAP).json()["map_id"]
    assert client.post(f"/maps/{mid}/scans", json={**_scan(), "rotation": [0, 0, 0, 0]}).status_code == 422
    assert client.post(f"/maps/{mid}/scans", json={**_scan(), "points": [[1, 2]]}).status_code == 422
    assert client.post(f"/maps/{mid}/scans", json=_scan(5.0)).status_code == 200
    assert client.post(f"/maps/{mid}/scans", json=_scan(1.0)).status_code == 422
    assert client.post("/maps/nope/scans", json=_scan()).status_code == 404


def test_empty_scan(client):
    mid = client.post("/maps", json=MAP).json()["map_id"]
    r = client.post(f"/maps/{mid}/scans", json={**_scan(), "points": []})
    assert r.status_code == 200 and r.json()["removed_volume"] == 0.0


def test_accuracy_endpoints(client):
    r = client.get("/accuracy/f", params={"gamma": 1.0}).json()
    assert r["f"] == 1.0
    r = client.get("/accuracy/f", params={"gamma": 4.0, "alpha_fov_deg": 15.0}).json()
    assert 0 < r["f"] < 1
    assert client.get("/accuracy/f", params={"gamma": 0.0}).status_code == 422
    assert client.get("/accuracy/f", params={"gamma": 0.5}).json()["f"] == 1.0
    assert client.get("/accuracy/gamma", params={"omega": 1.5}).status_code == 422
    s = client.post("/accuracy/simulate", json={"detection_range": 10, "resolution": 0.5, "gamma": 2.0, "n_cells": 5000})
    assert s.status_code == 200
    body = s.json()
    assert 0 < body["f_empirical"] <= 1.0 + 1e-9
    assert client.post("/accuracy/simulate", json={"n_cells": 0}).status_code == 422
