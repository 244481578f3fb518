"""JSON-over-HTTP service backing the graph-editor UI.

Sessions are in-memory and single-writer: every mutation checks an
optimistic revision number supplied by the client and bumps it on
success. Editing the graph (or replacing it) invalidates any previously
synthesized goal and plan; stepping through a plan is the one sanctioned
way the scene changes without invalidating the plan being executed.
"""

from __future__ import annotations

import itertools
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse

from .config import AppConfig
from .errors import InvariantViolation, SgbotError, UnknownReference
from .goalsynth import GoalScene, goal_to_dict, synthesize_goal
from .graphbuild import GraphEdit, apply_edits
from .ingest import SceneState, graph_from_dict, graph_to_dict, scene_from_dict, scene_to_dict
from .planner import Plan, _apply_action, action_to_dict, execute_plan, plan_to_dict
from .scenegraph import GraphNode, RelationLabel, SceneGraph


@dataclass
class Session:
    id: str
    scene: SceneState
    graph: SceneGraph
    revision: int = 0
    goal: GoalScene | None = None
    plan: Plan | None = None
    step_index: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


def _initial_graph(scene: SceneState) -> SceneGraph:
    return SceneGraph(tuple(GraphNode(o.id, o.category) for o in scene.objects), ())


def _snapshot(session: Session) -> dict:
    return {
        "session_id": session.id,
        "revision": session.revision,
        "scene": scene_to_dict(session.scene),
        "graph": graph_to_dict(session.graph),
        "goal": goal_to_dict(session.goal) if session.goal is not None else None,
        "plan": plan_to_dict(session.plan) if session.plan is not None else None,
        "step_index": session.step_index,
    }


def _parse_edit(doc: dict, index: int) -> GraphEdit:
    kind = doc.get("kind")
    try:
        if kind == "add_edge" or kind == "remove_edge":
            relation = RelationLabel(doc["relation"])
            maker = GraphEdit.add_edge if kind == "add_edge" else GraphEdit.remove_edge
            return maker(int(doc["from"]), int(doc["to"]), relation)
        if kind == "remove_node":
            return GraphEdit.remove_node(int(doc["id"]))
        if kind == "set_category":
            return GraphEdit.set_category(int(doc["id"]), str(doc["category"]))
    except (KeyError, ValueError, TypeError) as e:
        raise InvariantViolation(index, f"malformed edit: {e}") from e
    raise InvariantViolation(index, f"unknown edit kind {kind!r}")


def create_app(cfg: AppConfig | None = None) -> FastAPI:
    cfg = cfg if cfg is not None else AppConfig()
    app = FastAPI(title="sgbot service")
    sessions: dict[str, Session] = {}
    counter = itertools.count(1)
    registry_lock = threading.Lock()

    @app.on_event("shutdown")
    def snapshot_sessions():
        if cfg.snapshot_dir is None:
            return
        out = Path(cfg.snapshot_dir)
        out.mkdir(parents=True, exist_ok=True)
        for session in sessions.values():
            path = out / f"session_{session.id}.json"
            path.write_text(json.dumps(_snapshot(session), indent=1), encoding="utf-8")

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(404, {"error": "unknown_session", "detail": session_id})
        return session

    def check_revision(session: Session, body: dict) -> None:
        expected = body.get("expected_revision")
        if expected is not None and int(expected) != session.revision:
            raise HTTPException(
                409,
                {
                    "error": "revision_conflict",
                    "expected": int(expected),
                    "actual": session.revision,
                },
            )

    @app.exception_handler(SgbotError)
    async def sgbot_error_handler(request: Request, exc: SgbotError):
        payload = {"error": exc.code, "detail": str(exc)}
        if isinstance(exc, (InvariantViolation, UnknownReference)):
            payload["edit_index"] = exc.edit_index
        return JSONResponse(status_code=422, content=payload)

    @app.exception_handler(HTTPException)
    async def http_error_handler(request: Request, exc: HTTPException):
        content = (
            exc.detail
            if isinstance(exc.detail, dict)
            else {"error": "http_error", "detail": exc.detail}
        )
        return JSONResponse(status_code=exc.status_code, content=content)

    @app.get("/schema/relations")
    def relations():
        return {"relations": [label.value for label in RelationLabel]}

    @app.post("/sessions")
    async def create_session(request: Request):
        body = await request.json()
        scene = scene_from_dict(body.get("scene", {}))
        session_id = f"s{next(counter)}"
        session = Session(id=session_id, scene=scene, graph=_initial_graph(scene))
        with registry_lock:
            sessions[session_id] = session
        return {"session_id": session_id, "revision": session.revision}

    @app.get("/sessions/{session_id}")
    def get_snapshot(session_id: str):
        return _snapshot(get_session(session_id))

    @app.put("/sessions/{session_id}/graph")
    async def put_graph(session_id: str, request: Request):
        session = get_session(session_id)
        body = await request.json()
        with session.lock:
            check_revision(session, body)
            if "edits" in body and body["edits"] is not None:
                edits = [_parse_edit(doc, i) for i, doc in enumerate(body["edits"])]
                new_graph = apply_edits(session.graph, edits)
            elif "graph" in body and body["graph"] is not None:
                new_graph = graph_from_dict(body["graph"])
                scene_ids = set(session.scene.ids())
                missing = [n.id for n in new_graph.nodes if n.id not in scene_ids]
                if missing:
                    raise HTTPException(
                        422,
                        {"error": "unknown_reference", "detail": f"nodes {missing} not in scene"},
                    )
            else:
                raise HTTPException(
                    422, {"error": "schema_error", "detail": "provide 'edits' or 'graph'"}
                )
            session.graph = new_graph
            session.goal = None
            session.plan = None
            session.step_index = 0
            session.revision += 1
            return _snapshot(session)

    @app.post("/sessions/{session_id}/goal")
    async def post_goal(session_id: str, request: Request):
        session = get_session(session_id)
        body = await request.json()
        with session.lock:
            check_revision(session, body)
            seed = int(body.get("seed", 0))
            goal = synthesize_goal(
                session.scene, session.graph, seed, params=cfg.grounding
            )
            session.goal = goal
            session.plan = None
            session.step_index = 0
            session.revision += 1
            return {"revision": session.revision, "goal": goal_to_dict(goal)}

    @app.post("/sessions/{session_id}/plan")
    async def post_plan(session_id: str, request: Request):
        session = get_session(session_id)
        body = await request.json()
        with session.lock:
            check_revision(session, body)
            if session.goal is None:
                raise HTTPException(409, {"error": "no_goal", "detail": "synthesize a goal first"})
            sigma = body.get("sigma")
            _, plan = execute_plan(
                session.scene,
                session.goal,
                float(sigma) if sigma is not None else None,
                cfg.planner,
            )
            session.plan = plan
            session.step_index = 0
            session.revision += 1
            return {"revision": session.revision, "plan": plan_to_dict(plan)}

    @app.post("/sessions/{session_id}/step")
    async def post_step(session_id: str, request: Request):
        session = get_session(session_id)
        body = await request.json() if int(request.headers.get("content-length") or 0) else {}
        with session.lock:
            check_revision(session, body)
            if session.plan is None:
                raise HTTPException(409, {"error": "no_plan", "detail": "compute a plan first"})
            if session.step_index >= len(session.plan.actions):
                return {"done": True, "applied_action": None, "session": _snapshot(session)}
            action = session.plan.actions[session.step_index]
            session.scene = _apply_action(session.scene, action)
            session.step_index += 1
            session.revision += 1
            done = session.step_index >= len(session.plan.actions)
            return {
                "done": done,
                "applied_action": action_to_dict(action),
                "session": _snapshot(session),
            }

    return app
