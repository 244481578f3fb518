"""Occupancy-checked action sequencing toward a goal scene.

Each round scans the not-yet-placed objects in ascending id and moves
the first one whose goal region keeps more than sigma clearance from
everything else currently on the table. When every remaining goal is
blocked (mutual blocking), the least-blocked object is parked at a free
pose along the table edge to break the deadlock.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import BufferExhausted, ParseError, SchemaError, SgbotError
from .geometry import Box3, PointCloud, RigidTransform, apply_transform, box_from_cloud
from .goalsynth import GoalScene
from .ingest import ObjectInstance, SceneState, _load_json
from .registration import DEFAULT_ICP, IcpConfig, RegistrationResult, multistart_register

BUFFER_SWEEP_STEPS = 360


@dataclass(frozen=True)
class PlannerConfig:
    sigma: float = 0.01
    buffer_clearance: float = 0.03
    remove_obstacles: bool = True
    skip_translation: float = 0.01
    skip_rotation: float = 0.05
    icp: IcpConfig = field(default_factory=IcpConfig)


DEFAULT_PLANNER = PlannerConfig()


@dataclass(frozen=True)
class Action:
    object_id: int
    kind: str  # move_to_goal | move_to_buffer
    transform: RigidTransform
    clearance: float

    def __post_init__(self):
        if self.kind not in ("move_to_goal", "move_to_buffer"):
            raise ValueError(f"unknown action kind {self.kind!r}")
        if self.clearance < 0:
            raise ValueError("clearance must be non-negative")


@dataclass(frozen=True)
class PlanSnapshot:
    """Scene right after one action: ids with their boxes only."""

    boxes: tuple[tuple[int, Box3], ...]


@dataclass(frozen=True)
class Plan:
    actions: tuple[Action, ...]
    snapshots: tuple[PlanSnapshot, ...]
    status: str  # complete | deadlock | step_limit

    def __post_init__(self):
        if self.status not in ("complete", "deadlock", "step_limit"):
            raise ValueError(f"unknown status {self.status!r}")
        goal_moves = [a.object_id for a in self.actions if a.kind == "move_to_goal"]
        if len(goal_moves) != len(set(goal_moves)):
            raise ValueError("an object may be moved to its goal at most once")


def occupancy_distance(goal_cloud: PointCloud, scene: SceneState, exclude: int) -> float:
    """Closest approach between a goal cloud and every other scene object.

    Returns +inf when no other object exists.
    """
    if len(goal_cloud) == 0:
        raise ValueError("goal cloud must be non-empty")
    others = [o.cloud.points for o in scene.objects if o.id != exclude]
    if not others:
        return math.inf
    tree = cKDTree(goal_cloud.points)
    dists, _ = tree.query(np.vstack(others), k=1)
    return float(dists.min())


def _registration_for(
    obj: ObjectInstance,
    goal: GoalScene,
    cfg: PlannerConfig,
    cache: dict[int, RegistrationResult] | None,
) -> RegistrationResult:
    if cache is not None and obj.id in cache:
        return cache[obj.id]
    result = multistart_register(obj.cloud, goal.get(obj.id).cloud, cfg.icp)
    if cache is not None:
        cache[obj.id] = result
    return result


def _buffer_pose(
    scene: SceneState,
    obj: ObjectInstance,
    clearance: float,
    avoid_clouds: list[np.ndarray],
) -> np.ndarray:
    """First table-edge xy pose (smallest angle from +x) with clearance.

    The pose must clear every other object and every cloud in
    `avoid_clouds` (pending goal regions), so parking never creates a
    new blockage.
    """
    fw = obj.box.footprint_half_widths()
    limit = scene.table.half_extents[:2] - fw - clearance
    if np.any(limit <= 0):
        raise BufferExhausted(f"object {obj.id} cannot fit inside the table edge band")
    keep_out = [o.cloud.points for o in scene.objects if o.id != obj.id] + list(avoid_clouds)
    others = np.vstack(keep_out) if keep_out else None
    for k in range(BUFFER_SWEEP_STEPS):
        angle = 2.0 * math.pi * k / BUFFER_SWEEP_STEPS
        direction = np.array([math.cos(angle), math.sin(angle)])
        scale = np.inf
        for axis in (0, 1):
            if abs(direction[axis]) > 1e-12:
                scale = min(scale, limit[axis] / abs(direction[axis]))
        xy = direction * scale
        if others is None:
            return xy
        moved = obj.cloud.points[:, :2] - obj.box.center[:2] + xy
        tree = cKDTree(np.column_stack([moved, obj.cloud.points[:, 2]]))
        d, _ = tree.query(others, k=1)
        if float(d.min()) > clearance:
            return xy
    raise BufferExhausted(f"no free buffer pose for object {obj.id}")


def _blocker_of(goal_cloud: PointCloud, scene: SceneState, exclude: int) -> int:
    """Id of the scene object realizing the minimum distance to the goal."""
    tree = cKDTree(goal_cloud.points)
    best_id, best_d = None, math.inf
    for obj in scene.objects:
        if obj.id == exclude:
            continue
        d, _ = tree.query(obj.cloud.points, k=1)
        d_min = float(d.min())
        if d_min < best_d:
            best_id, best_d = obj.id, d_min
    return best_id


def select_next_action(
    scene: SceneState,
    goal: GoalScene,
    placed: set[int],
    sigma: float,
    cfg: PlannerConfig = DEFAULT_PLANNER,
    cache: dict[int, RegistrationResult] | None = None,
) -> Action | None:
    """Next safe move, or a buffer move when every goal is blocked.

    Blocked rounds park the object that realizes the blocking distance
    of the most-nearly-free goal (largest d, ties to the lowest id), so
    each buffer move strictly increases that goal's clearance. Returns
    None once every goal object is placed.
    """
    unplaced = [
        scene.get(obj_id) for obj_id in sorted(goal.ids()) if obj_id not in placed
    ]
    if not unplaced:
        return None
    most_clear: tuple[float, ObjectInstance] | None = None
    for obj in unplaced:
        d = occupancy_distance(goal.get(obj.id).cloud, scene, exclude=obj.id)
        if d > sigma:
            result = _registration_for(obj, goal, cfg, cache)
            return Action(obj.id, "move_to_goal", result.transform, d)
        if most_clear is None or d > most_clear[0]:
            most_clear = (d, obj)
    _, waiting = most_clear
    blocker_id = _blocker_of(goal.get(waiting.id).cloud, scene, exclude=waiting.id)
    unplaced_ids = {o.id for o in unplaced}
    if blocker_id is None or blocker_id not in unplaced_ids:
        raise BufferExhausted(
            f"goal of object {waiting.id} is blocked by settled object {blocker_id}"
        )
    blocker = scene.get(blocker_id)
    pending_goals = [goal.get(obj_id).cloud.points for obj_id in sorted(unplaced_ids)]
    xy = _buffer_pose(scene, blocker, cfg.buffer_clearance, pending_goals)
    min_z = float(blocker.cloud.points[:, 2].min())
    translation = np.array(
        [xy[0] - blocker.box.center[0], xy[1] - blocker.box.center[1], -min_z]
    )
    d_own = occupancy_distance(goal.get(blocker_id).cloud, scene, exclude=blocker_id)
    return Action(blocker_id, "move_to_buffer", RigidTransform(np.eye(3), translation), d_own)


def _apply_action(scene: SceneState, action: Action) -> SceneState:
    obj = scene.get(action.object_id)
    new_cloud = apply_transform(action.transform, obj.cloud)
    new_box = box_from_cloud(new_cloud, "principal_axis")
    moved = ObjectInstance(obj.id, obj.category, new_cloud, new_box, obj.is_obstacle)
    return scene.replace_object(moved)


def _snapshot(scene: SceneState) -> PlanSnapshot:
    return PlanSnapshot(tuple((o.id, o.box) for o in scene.objects))


def execute_plan(
    initial: SceneState,
    goal: GoalScene,
    sigma: float | None = None,
    cfg: PlannerConfig = DEFAULT_PLANNER,
) -> tuple[SceneState, Plan]:
    """Run rounds of select/apply until done, deadlocked, or capped at 3N.

    Objects already matching their goal pose (within the configured
    translation/rotation tolerances) are marked placed without an action.
    Obstacles are dropped from the working scene first when configured.
    A per-object registration failure ends the plan as a deadlock rather
    than raising.
    """
    sigma = cfg.sigma if sigma is None else sigma
    scene = initial
    if cfg.remove_obstacles:
        goal_ids = set(goal.ids())
        obstacle_ids = {o.id for o in scene.objects if o.is_obstacle and o.id not in goal_ids}
        if obstacle_ids:
            scene = scene.without(obstacle_ids)

    placed: set[int] = set()
    cache: dict[int, RegistrationResult] = {}
    actions: list[Action] = []
    snapshots: list[PlanSnapshot] = []
    limit = 3 * len(goal.ids())
    status = "step_limit"
    while True:
        try:
            for obj_id in sorted(goal.ids()):
                if obj_id in placed:
                    continue
                result = _registration_for(scene.get(obj_id), goal, cfg, cache)
                at_goal = (
                    float(np.linalg.norm(result.transform.translation)) < cfg.skip_translation
                    and result.transform.angle < cfg.skip_rotation
                )
                if at_goal:
                    placed.add(obj_id)
            action = select_next_action(scene, goal, placed, sigma, cfg, cache)
        except (BufferExhausted, SgbotError):
            status = "deadlock"
            break
        if action is None:
            status = "complete"
            break
        if len(actions) >= limit:
            break
        scene = _apply_action(scene, action)
        cache.pop(action.object_id, None)
        if action.kind == "move_to_goal":
            placed.add(action.object_id)
        actions.append(action)
        snapshots.append(_snapshot(scene))
    return scene, Plan(tuple(actions), tuple(snapshots), status)


# ---------------------------------------------------------------------------
# Plan JSON


def action_to_dict(action: Action) -> dict:
    return {
        "object_id": action.object_id,
        "kind": action.kind,
        "rotation": [float(v) for v in action.transform.rotation.reshape(-1)],
        "translation": [float(v) for v in action.transform.translation],
        "clearance": None if math.isinf(action.clearance) else float(action.clearance),
    }


def plan_to_dict(plan: Plan) -> dict:
    return {
        "status": plan.status,
        "actions": [action_to_dict(a) for a in plan.actions],
    }


def save_plan(plan: Plan) -> bytes:
    return json.dumps(plan_to_dict(plan), indent=1).encode("utf-8")


def plan_from_dict(doc: dict) -> Plan:
    if not isinstance(doc, dict) or "actions" not in doc or "status" not in doc:
        raise SchemaError("plan document must carry 'actions' and 'status'")
    actions = []
    for i, action_doc in enumerate(doc["actions"]):
        ctx = f"plan.actions[{i}]"
        try:
            rotation = np.array(action_doc["rotation"], dtype=float).reshape(3, 3)
            translation = np.array(action_doc["translation"], dtype=float)
            clearance = action_doc.get("clearance")
            actions.append(
                Action(
                    int(action_doc["object_id"]),
                    str(action_doc["kind"]),
                    RigidTransform(rotation, translation),
                    math.inf if clearance is None else float(clearance),
                )
            )
        except (KeyError, ValueError, TypeError) as e:
            raise SchemaError(f"{ctx}: {e}") from e
    try:
        return Plan(tuple(actions), (), str(doc["status"]))
    except ValueError as e:
        raise SchemaError(f"plan: {e}") from e


def load_plan(source: str | Path | bytes) -> Plan:
    return plan_from_dict(_load_json(source, "plan"))
