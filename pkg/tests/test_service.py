import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from sgbot import SceneState, make_object, save_scene
from sgbot.config import AppConfig
from sgbot.ingest import scene_to_dict
from sgbot.planner import execute_plan, plan_to_dict
from sgbot.goalsynth import synthesize_goal
from sgbot.ingest import load_scene
from sgbot.graphbuild import build_commonsense_graph
from sgbot.service import create_app
from tests.conftest import resting_block


@pytest.fixture
def client():
    return TestClient(create_app(AppConfig()))


@pytest.fixture
def scene_doc():
    plate = make_object(0, "plate", resting_block(90, (0.0, 0.1), (0.3, 0.3, 0.02)))
    fork = make_object(1, "fork", resting_block(91, (-0.45, -0.2), (0.19, 0.025, 0.012)))
    return scene_to_dict(SceneState((plate, fork)))


def create_session(client, scene_doc):
    resp = client.post("/sessions", json={"scene": scene_doc})
    assert resp.status_code == 200
    return resp.json()


def test_schema_endpoint(client):
    resp = client.get("/schema/relations")
    assert resp.status_code == 200
    assert resp.json()["relations"] == [
        "left", "right", "front", "behind", "standing_on", "close_by",
    ]


def test_create_and_snapshot(client, scene_doc):
    created = create_session(client, scene_doc)
    assert created["revision"] == 0
    snap = client.get(f"/sessions/{created['session_id']}").json()
    assert snap["graph"]["nodes"] == [
        {"id": 0, "category": "plate"},
        {"id": 1, "category": "fork"},
    ]
    assert snap["graph"]["edges"] == []
    assert snap["goal"] is None and snap["plan"] is None


def test_unknown_session_404(client):
    resp = client.get("/sessions/zzz")
    assert resp.status_code == 404
    assert resp.json()["error"] == "unknown_session"


def test_graph_edit_bumps_revision_and_clears(client, scene_doc):
    created = create_session(client, scene_doc)
    sid = created["session_id"]
    edit = {"kind": "add_edge", "from": 1, "to": 0, "relation": "left"}
    resp = client.put(
        f"/sessions/{sid}/graph", json={"expected_revision": 0, "edits": [edit]}
    )
    assert resp.status_code == 200
    body = resp.json()
    assert body["revision"] == 1
    assert body["graph"]["edges"] == [{"from": 1, "to": 0, "relation": "left"}]

    client.post(f"/sessions/{sid}/goal", json={"seed": 1})
    snap = client.get(f"/sessions/{sid}").json()
    assert snap["goal"] is not None
    # editing again clears the synthesized goal
    resp = client.put(
        f"/sessions/{sid}/graph",
        json={"expected_revision": snap["revision"],
              "edits": [{"kind": "remove_edge", "from": 1, "to": 0, "relation": "left"}]},
    )
    assert resp.status_code == 200
    assert resp.json()["goal"] is None


def test_stale_revision_409(client, scene_doc):
    created = create_session(client, scene_doc)
    sid = created["session_id"]
    edit = {"kind": "add_edge", "from": 1, "to": 0, "relation": "left"}
    assert client.put(
        f"/sessions/{sid}/graph", json={"expected_revision": 0, "edits": [edit]}
    ).status_code == 200
    resp = client.put(
        f"/sessions/{sid}/graph",
        json={"expected_revision": 0,
              "edits": [{"kind": "remove_edge", "from": 1, "to": 0, "relation": "left"}]},
    )
    assert resp.status_code == 409
    assert resp.json()["error"] == "revision_conflict"


def test_self_edge_422_and_state_unchanged(client, scene_doc):
    created = create_session(client, scene_doc)
    sid = created["session_id"]
    resp = client.put(
        f"/sessions/{sid}/graph",
        json={"expected_revision": 0,
              "edits": [{"kind": "add_edge", "from": 1, "to": 1, "relation": "left"}]},
    )
    assert resp.status_code == 422
    body = resp.json()
    assert body["error"] == "invariant_violation"
    assert body["edit_index"] == 0
    snap = client.get(f"/sessions/{sid}").json()
    assert snap["revision"] == 0
    assert snap["graph"]["edges"] == []


def test_step_without_plan_409(client, scene_doc):
    created = create_session(client, scene_doc)
    resp = client.post(f"/sessions/{created['session_id']}/step", json={})
    assert resp.status_code == 409
    assert resp.json()["error"] == "no_plan"


def test_plan_without_goal_409(client, scene_doc):
    created = create_session(client, scene_doc)
    resp = client.post(f"/sessions/{created['session_id']}/plan", json={"sigma": 0.01})
    assert resp.status_code == 409
    assert resp.json()["error"] == "no_goal"


def test_full_session_matches_batch(client, scene_doc):
    created = create_session(client, scene_doc)
    sid = created["session_id"]
    edit = {"kind": "add_edge", "from": 1, "to": 0, "relation": "left"}
    rev = client.put(
        f"/sessions/{sid}/graph", json={"expected_revision": 0, "edits": [edit]}
    ).json()["revision"]
    client.post(f"/sessions/{sid}/goal", json={"seed": 3, "expected_revision": rev})
    plan_doc = client.post(f"/sessions/{sid}/plan", json={"sigma": 0.01}).json()["plan"]

    steps = 0
    while True:
        body = client.post(f"/sessions/{sid}/step", json={}).json()
        if body["applied_action"] is not None:
            steps += 1
        if body["done"]:
            break
    assert steps == len(plan_doc["actions"])

    # batch path on identical inputs yields the identical plan document
    scene = load_scene(json.dumps(scene_doc).encode())
    from sgbot.graphbuild import GraphEdit, apply_edits
    from sgbot.scenegraph import RelationLabel
    from sgbot.service import _initial_graph

    graph = apply_edits(_initial_graph(scene), [GraphEdit.add_edge(1, 0, RelationLabel.LEFT)])
    goal = synthesize_goal(scene, graph, seed=3)
    _, plan = execute_plan(scene, goal, 0.01)
    assert plan_to_dict(plan) == plan_doc


def test_graph_replace_validates_scene_ids(client, scene_doc):
    created = create_session(client, scene_doc)
    sid = created["session_id"]
    bad_graph = {"nodes": [{"id": 9, "category": "cup"}], "edges": []}
    resp = client.put(
        f"/sessions/{sid}/graph", json={"expected_revision": 0, "graph": bad_graph}
    )
    assert resp.status_code == 422
    assert resp.json()["error"] == "unknown_reference"


def test_snapshot_to_disk_on_shutdown(tmp_path, scene_doc):
    cfg = AppConfig(snapshot_dir=str(tmp_path / "snaps"))
    with TestClient(create_app(cfg)) as managed:
        created = managed.post("/sessions", json={"scene": scene_doc}).json()
    files = list((tmp_path / "snaps").glob("session_*.json"))
    assert len(files) == 1
    doc = json.loads(files[0].read_text())
    assert doc["session_id"] == created["session_id"]
