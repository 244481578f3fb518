"""Goal scene synthesis: shape priors, constraint layout, instantiation.

Turns a goal scene graph plus the shapes observed in the initial scene
into a concrete goal: one dense cloud and bounding box per object. The
layout solver places boxes so that re-grounding the boxes reproduces
every graph edge; clouds are rigid transfers of the observed partial
clouds, so goal shapes always cohere with the observation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import KeyMismatch, LayoutInfeasible, MissingPrior, ParseError, SchemaError
from .geometry import Box3, PointCloud, box_from_cloud, rot_z, wrap_angle
from .graphbuild import (
    DEFAULT_GROUNDING,
    DEFAULT_VOCABULARY,
    CategoryVocabulary,
    GroundingParams,
    Role,
    ground_relation,
)
from .ingest import DEFAULT_TABLE, ObjectInstance, SceneState, _load_json
from .scenegraph import GraphEdge, RelationLabel, SceneGraph

DEFAULT_GAP = 0.03
DOMINANCE_MARGIN = 0.01
SEPARATION_ROUNDS = 100
RING_STEPS = 180
DIRECTIONAL = {
    RelationLabel.LEFT,
    RelationLabel.RIGHT,
    RelationLabel.FRONT,
    RelationLabel.BEHIND,
}


@dataclass(frozen=True)
class ShapePrior:
    """Observed shape of one object, detached from its pose.

    `centered_cloud` is the observed cloud with its centroid moved to the
    origin; `dims` are the full extents of its principal-axis box, `yaw`
    that box's heading, and `box_offset` the vector from the centroid to
    the box center (kept so asymmetric shapes can be re-seated exactly
    inside a goal box).
    """

    source_id: int
    centered_cloud: PointCloud
    dims: np.ndarray
    yaw: float
    box_offset: np.ndarray

    def __post_init__(self):
        if np.max(np.abs(self.centered_cloud.centroid)) > 1e-9:
            raise ValueError("centered cloud must have zero centroid")
        dims = np.ascontiguousarray(np.asarray(self.dims, dtype=float)).reshape(3)
        off = np.ascontiguousarray(np.asarray(self.box_offset, dtype=float)).reshape(3)
        dims.setflags(write=False)
        off.setflags(write=False)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "box_offset", off)


def estimate_shape_prior(obj: ObjectInstance) -> ShapePrior:
    """Centered cloud, principal dims and heading of one observed object."""
    box = box_from_cloud(obj.cloud, "principal_axis")
    centroid = obj.cloud.centroid
    return ShapePrior(
        source_id=obj.id,
        centered_cloud=PointCloud(obj.cloud.points - centroid, obj.cloud.frame),
        dims=2.0 * box.half_extents,
        yaw=box.yaw,
        box_offset=box.center - centroid,
    )


@dataclass(frozen=True)
class GoalObject:
    id: int
    cloud: PointCloud
    box: Box3
    source_id: int


@dataclass(frozen=True)
class GoalScene:
    """Synthesized target configuration: per-object dense cloud + box.

    Boxes rest on the table (bottom 0) unless stacked on another box, and
    stay xy-disjoint (axis-aligned footprints, 1e-6 tolerance) except for
    stacked pairs.
    """

    objects: tuple[GoalObject, ...]

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        ids = [o.id for o in self.objects]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate goal object ids")
        tops = {o.id: o.box.top for o in self.objects}
        stacked: set[frozenset[int]] = set()
        for o in self.objects:
            if abs(o.box.bottom) <= 1e-6:
                continue
            supporters = [
                other.id
                for other in self.objects
                if other.id != o.id and abs(o.box.bottom - tops[other.id]) <= 1e-6
            ]
            if not supporters:
                raise ValueError(f"goal box {o.id} floats (bottom {o.box.bottom:.2g})")
            for s in supporters:
                stacked.add(frozenset((o.id, s)))
        for a_idx in range(len(self.objects)):
            for b_idx in range(a_idx + 1, len(self.objects)):
                a, b = self.objects[a_idx], self.objects[b_idx]
                if frozenset((a.id, b.id)) in stacked:
                    continue
                if _aabb_penetration(a.box, b.box) > 1e-6:
                    raise ValueError(f"goal boxes {a.id} and {b.id} overlap in xy")

    def ids(self) -> tuple[int, ...]:
        return tuple(o.id for o in self.objects)

    def get(self, obj_id: int) -> GoalObject:
        for o in self.objects:
            if o.id == obj_id:
                return o
        raise KeyError(obj_id)


def _aabb_penetration(a: Box3, b: Box3) -> float:
    """Penetration depth of the xy axis-aligned footprint hulls (<= 0: clear)."""
    fa, fb = a.footprint_half_widths(), b.footprint_half_widths()
    dx = fa[0] + fb[0] - abs(a.center[0] - b.center[0])
    dy = fa[1] + fb[1] - abs(a.center[1] - b.center[1])
    return min(dx, dy)


# ---------------------------------------------------------------------------
# Layout solving


def _directional_cycle(graph: SceneGraph) -> bool:
    adjacency: dict[int, list[int]] = {}
    for e in graph.edges:
        if e.label in DIRECTIONAL:
            adjacency.setdefault(e.source, []).append(e.target)
    state: dict[int, int] = {}

    def visit(node: int) -> bool:
        state[node] = 1
        for nxt in adjacency.get(node, ()):
            if state.get(nxt) == 1:
                return True
            if state.get(nxt) is None and visit(nxt):
                return True
        state[node] = 2
        return False

    return any(state.get(n) is None and visit(n) for n in adjacency)


def _pick_host(graph: SceneGraph, priors: dict[int, ShapePrior], vocab: CategoryVocabulary) -> int:
    for category in vocab.anchors:
        ids = sorted(n.id for n in graph.nodes if n.category == category)
        if ids:
            return ids[0]
    return max(
        (n.id for n in graph.nodes),
        key=lambda i: (float(priors[i].dims[0] * priors[i].dims[1]), -i),
    )


class _Layout:
    """Mutable working state while boxes are being placed."""

    def __init__(self, table: Box3, gap: float):
        self.table = table
        self.gap = gap
        self.center: dict[int, np.ndarray] = {}
        self.half: dict[int, np.ndarray] = {}
        self.yaw: dict[int, float] = {}
        self.children: dict[int, list[int]] = {}

    def footprint_half_widths(self, node: int) -> np.ndarray:
        c, s = abs(math.cos(self.yaw[node])), abs(math.sin(self.yaw[node]))
        hx, hy = self.half[node][0], self.half[node][1]
        return np.array([hx * c + hy * s, hx * s + hy * c])

    def box(self, node: int) -> Box3:
        return Box3(self.center[node].copy(), self.half[node], self.yaw[node])

    def penetration(self, a: int, b: int) -> float:
        fa, fb = self.footprint_half_widths(a), self.footprint_half_widths(b)
        dx = fa[0] + fb[0] - abs(self.center[a][0] - self.center[b][0])
        dy = fa[1] + fb[1] - abs(self.center[a][1] - self.center[b][1])
        return min(dx, dy)

    def inside_table(self, node: int, xy: np.ndarray) -> bool:
        fw = self.footprint_half_widths(node)
        limit = self.table.half_extents[:2]
        return bool(np.all(np.abs(xy) + fw <= limit))

    @property
    def clearance(self) -> float:
        # minimum inter-box clearance the solver maintains; keeps goal
        # clouds farther apart than any sane occupancy threshold
        return self.gap / 2.0

    def pose_is_free(self, node: int, xy: np.ndarray, placed: list[int]) -> bool:
        if not self.inside_table(node, xy):
            return False
        fw = self.footprint_half_widths(node)
        for other in placed:
            if other == node:
                continue
            fo = self.footprint_half_widths(other)
            dx = fw[0] + fo[0] - abs(xy[0] - self.center[other][0])
            dy = fw[1] + fo[1] - abs(xy[1] - self.center[other][1])
            if min(dx, dy) > -self.clearance:
                return False
        return True

    def subtree(self, node: int) -> list[int]:
        result, stack = [], [node]
        while stack:
            current = stack.pop()
            result.append(current)
            stack.extend(self.children.get(current, ()))
        return result

    def translate_subtree(self, node: int, delta: np.ndarray):
        for member in self.subtree(node):
            self.center[member] = self.center[member] + delta

    def ring_radius(self, node: int, target: int) -> float:
        hd_node = float(math.hypot(self.half[node][0], self.half[node][1]))
        hd_target = float(math.hypot(self.half[target][0], self.half[target][1]))
        return hd_node + hd_target + self.gap


def solve_layout(
    graph: SceneGraph,
    priors: dict[int, ShapePrior],
    table: Box3 = DEFAULT_TABLE,
    seed: int = 0,
    vocab: CategoryVocabulary = DEFAULT_VOCABULARY,
    params: GroundingParams = DEFAULT_GROUNDING,
    gap: float = DEFAULT_GAP,
) -> dict[int, Box3]:
    """Place one goal box per graph node so every edge re-grounds true.

    The host node (highest-priority anchor category, else the
    largest-footprint node) sits at the table origin with yaw 0; every
    edge then places its source at a deterministic offset from its
    target. Same-(target, relation) groups are staggered along the
    unconstrained axis, growing the constrained offset when needed to
    keep the relation's axis dominant. The seed only steers where the
    close_by ring sweep starts.

    Raises LayoutInfeasible for contradictory constraints (directional
    cycles), failed separation, or layouts whose re-grounding check fails.
    """
    for node in graph.nodes:
        if node.id not in priors:
            raise MissingPrior(node.id)
    if not graph.nodes:
        return {}
    if _directional_cycle(graph):
        raise LayoutInfeasible("directional constraints form a cycle")

    rng = np.random.default_rng(seed)
    sweep_origin = float(rng.uniform(0.0, 2.0 * math.pi))
    host = _pick_host(graph, priors, vocab)
    category = {n.id: n.category for n in graph.nodes}

    state = _Layout(table, gap)
    for n in graph.nodes:
        state.half[n.id] = np.maximum(priors[n.id].dims / 2.0, 1e-6)
        if n.id == host:
            state.yaw[n.id] = 0.0
        elif vocab.role(n.category) is Role.CUTLERY:
            state.yaw[n.id] = math.pi / 2.0
        else:
            state.yaw[n.id] = priors[n.id].yaw

    # First listed outgoing edge places a node; any extra edges are
    # verified after the fact.
    placement_edge: dict[int, GraphEdge] = {}
    for e in graph.edges:
        placement_edge.setdefault(e.source, e)
    # Break dependency cycles (e.g. mutual close_by) by freeing the
    # lowest-id member; its edge then has to hold by verification.
    for node_id in sorted(placement_edge):
        seen: list[int] = []
        current: int | None = node_id
        while current is not None and current not in seen:
            seen.append(current)
            nxt = placement_edge.get(current)
            current = nxt.target if nxt else None
        if current is not None and current in seen:
            cycle = seen[seen.index(current):]
            placement_edge.pop(min(cycle), None)

    pending = [n.id for n in graph.nodes]
    pending.sort(key=lambda i: (i != host, i))
    ring_cursor = {"angle": sweep_origin}
    group_cursor: dict[tuple[int, RelationLabel], dict] = {}
    while pending:
        progressed = False
        for node_id in list(pending):
            edge = placement_edge.get(node_id)
            if edge is not None and edge.target in pending:
                continue
            _place_node(state, node_id, edge, host, group_cursor, ring_cursor, params)
            if edge is not None:
                state.children.setdefault(edge.target, []).append(node_id)
            pending.remove(node_id)
            progressed = True
        if not progressed:
            raise LayoutInfeasible("placement order could not be resolved")

    _separate(state, graph, placement_edge, host, ring_cursor)
    layout = {n.id: state.box(n.id) for n in graph.nodes}

    failures = [
        edge
        for edge in graph.edges
        if edge.label not in ground_relation(layout[edge.source], layout[edge.target], params)
    ]
    if failures:
        detail = ", ".join(f"{e.source}-{e.label.value}->{e.target}" for e in failures)
        raise LayoutInfeasible(f"layout cannot realize edges: {detail}")
    return layout


def _place_node(
    state: _Layout,
    node_id: int,
    edge: GraphEdge | None,
    host: int,
    group_cursor: dict,
    ring_cursor: dict,
    params: GroundingParams,
) -> None:
    hz = state.half[node_id][2]
    placed = list(state.center)
    if edge is None:
        if node_id == host or not state.center:
            state.center[node_id] = np.array([0.0, 0.0, hz])
        else:
            anchor = host if host in state.center else placed[0]
            radius = state.ring_radius(node_id, anchor)
            xy = _ring_search(state, node_id, anchor, radius, placed, ring_cursor)
            state.center[node_id] = np.array([xy[0], xy[1], hz])
        return

    target = edge.target
    t_center = state.center[target]
    fw_s = state.footprint_half_widths(node_id)
    fw_t = state.footprint_half_widths(target)

    if edge.label is RelationLabel.STANDING_ON:
        z = state.center[target][2] + state.half[target][2] + hz
        state.center[node_id] = np.array([t_center[0], t_center[1], z])
        return

    if edge.label is RelationLabel.CLOSE_BY:
        radius = state.ring_radius(node_id, target)
        xy = _ring_search(state, node_id, target, radius, placed, ring_cursor)
        state.center[node_id] = np.array([xy[0], xy[1], hz])
        return

    # Same-(target, relation) siblings pack along the unconstrained axis,
    # alternating sides of the target so long rows stay centered.
    free_axis = 1 if edge.label in (RelationLabel.LEFT, RelationLabel.RIGHT) else 0
    key = (target, edge.label)
    cursor = group_cursor.setdefault(key, {"pos": 0.0, "neg": 0.0, "count": 0})
    fw_free = fw_s[free_axis]
    if cursor["count"] == 0:
        stagger = 0.0
        cursor["pos"], cursor["neg"] = fw_free, -fw_free
    elif cursor["count"] % 2 == 1:
        stagger = cursor["pos"] + state.gap + fw_free
        cursor["pos"] = stagger + fw_free
    else:
        stagger = cursor["neg"] - state.gap - fw_free
        cursor["neg"] = stagger - fw_free
    cursor["count"] += 1

    if edge.label in (RelationLabel.LEFT, RelationLabel.RIGHT):
        base = fw_t[0] + fw_s[0] + state.gap
        reach = max(base, abs(stagger) + DOMINANCE_MARGIN)
        sign = -1.0 if edge.label is RelationLabel.LEFT else 1.0
        xy = np.array([t_center[0] + sign * reach, t_center[1] + stagger])
    else:
        base = fw_t[1] + fw_s[1] + state.gap
        reach = max(base, abs(stagger) + DOMINANCE_MARGIN)
        sign = 1.0 if edge.label is RelationLabel.FRONT else -1.0
        xy = np.array([t_center[0] + stagger, t_center[1] + sign * reach])
    state.center[node_id] = np.array([xy[0], xy[1], hz])


def _ring_search(
    state: _Layout,
    node_id: int,
    target: int,
    radius: float,
    placed: list[int],
    ring_cursor: dict,
) -> np.ndarray:
    """First free pose sweeping clockwise around `target` at `radius`."""
    t_xy = state.center[target][:2]
    step = 2.0 * math.pi / RING_STEPS
    for k in range(RING_STEPS):
        angle = ring_cursor["angle"] - k * step
        xy = t_xy + radius * np.array([math.cos(angle), math.sin(angle)])
        if state.pose_is_free(node_id, xy, placed):
            ring_cursor["angle"] = angle - step
            return xy
    raise LayoutInfeasible(f"no free pose on the ring around node {target}")


def _separate(
    state: _Layout,
    graph: SceneGraph,
    placement_edge: dict[int, GraphEdge],
    host: int,
    ring_cursor: dict,
) -> None:
    """Push overlapping boxes apart along their unconstrained axes.

    A node keeps its push direction once chosen so a box sandwiched
    between two others escapes monotonically instead of oscillating.
    """
    stacked_pairs = {
        frozenset((e.source, e.target))
        for e in graph.edges
        if e.label is RelationLabel.STANDING_ON
    }
    ids = sorted(state.center)
    push_memory: dict[tuple[int, int], float] = {}
    for _ in range(SEPARATION_ROUNDS):
        clean = True
        for i_idx in range(len(ids)):
            for j_idx in range(i_idx + 1, len(ids)):
                a, b = ids[i_idx], ids[j_idx]
                if frozenset((a, b)) in stacked_pairs:
                    continue
                pen = state.penetration(a, b)
                if pen <= -state.clearance:
                    continue
                clean = False
                mover = _pick_mover(a, b, host, placement_edge)
                if mover is None:
                    raise LayoutInfeasible(
                        f"boxes {a} and {b} overlap and neither may move"
                    )
                other = b if mover == a else a
                _resolve_pair(state, mover, other, pen, placement_edge, ring_cursor, push_memory)
        if clean:
            return
    raise LayoutInfeasible("separation failed to converge")


def _pick_mover(a: int, b: int, host: int, placement_edge: dict[int, GraphEdge]) -> int | None:
    def movable(n: int) -> bool:
        edge = placement_edge.get(n)
        return n != host and (edge is None or edge.label is not RelationLabel.STANDING_ON)

    candidates = [n for n in (b, a) if movable(n)]  # prefer the higher id
    return candidates[0] if candidates else None


def _resolve_pair(
    state: _Layout,
    mover: int,
    other: int,
    penetration: float,
    placement_edge: dict[int, GraphEdge],
    ring_cursor: dict,
    push_memory: dict[tuple[int, int], float],
) -> None:
    edge = placement_edge.get(mover)
    if edge is not None and edge.label is RelationLabel.CLOSE_BY:
        placed = [i for i in state.center if i not in state.subtree(mover)]
        radius = state.ring_radius(mover, edge.target)
        xy = _ring_search(state, mover, edge.target, radius, placed, ring_cursor)
        delta = np.array([xy[0] - state.center[mover][0], xy[1] - state.center[mover][1], 0.0])
        state.translate_subtree(mover, delta)
        return

    if edge is not None and edge.label in DIRECTIONAL:
        # move along the axis the relation leaves unconstrained
        axis = 1 if edge.label in (RelationLabel.LEFT, RelationLabel.RIGHT) else 0
    else:
        diff = state.center[mover][:2] - state.center[other][:2]
        axis = 0 if abs(diff[0]) >= abs(diff[1]) else 1
    direction = push_memory.get((mover, axis))
    if direction is None:
        offset = float(state.center[mover][axis] - state.center[other][axis])
        direction = 1.0 if offset >= 0.0 else -1.0
        push_memory[(mover, axis)] = direction
    delta = np.zeros(3)
    delta[axis] = direction * (penetration + state.clearance + 1e-3)
    state.translate_subtree(mover, delta)
    if edge is not None and edge.label in DIRECTIONAL:
        _reclamp_dominance(state, mover, edge)


def _reclamp_dominance(state: _Layout, node_id: int, edge: GraphEdge) -> None:
    """Keep the edge's axis dominant after a stagger/separation move."""
    t_center = state.center[edge.target]
    c = state.center[node_id]
    if edge.label in (RelationLabel.LEFT, RelationLabel.RIGHT):
        off_axis = abs(c[1] - t_center[1])
        needed = off_axis + DOMINANCE_MARGIN
        if abs(c[0] - t_center[0]) < needed:
            sign = -1.0 if edge.label is RelationLabel.LEFT else 1.0
            shift = t_center[0] + sign * needed - c[0]
            state.translate_subtree(node_id, np.array([shift, 0.0, 0.0]))
    else:
        off_axis = abs(c[0] - t_center[0])
        needed = off_axis + DOMINANCE_MARGIN
        if abs(c[1] - t_center[1]) < needed:
            sign = 1.0 if edge.label is RelationLabel.FRONT else -1.0
            shift = t_center[1] + sign * needed - c[1]
            state.translate_subtree(node_id, np.array([0.0, shift, 0.0]))


# ---------------------------------------------------------------------------
# Instantiation and verification


def instantiate_goal_scene(layout: dict[int, Box3], priors: dict[int, ShapePrior]) -> GoalScene:
    """Seat each prior's cloud inside its goal box.

    The centered cloud is rotated about z by (goal yaw - prior yaw) and
    positioned so its principal box lands exactly on the goal box, which
    guarantees containment.
    """
    if set(layout) != set(priors):
        raise KeyMismatch(
            f"layout ids {sorted(layout)} != prior ids {sorted(priors)}"
        )
    objects = []
    for obj_id in layout:
        box = layout[obj_id]
        prior = priors[obj_id]
        rotation = rot_z(wrap_angle(box.yaw - prior.yaw))
        points = (prior.centered_cloud.points - prior.box_offset) @ rotation.T + box.center
        objects.append(
            GoalObject(obj_id, PointCloud(points, "table"), box, prior.source_id)
        )
    return GoalScene(tuple(objects))


@dataclass(frozen=True)
class LayoutReport:
    """Grounded truth value for every graph edge against a goal scene."""

    entries: tuple[tuple[GraphEdge, bool], ...]

    @property
    def all_true(self) -> bool:
        return all(ok for _, ok in self.entries)

    @property
    def failed(self) -> tuple[GraphEdge, ...]:
        return tuple(e for e, ok in self.entries if not ok)


def verify_layout(
    goal: GoalScene, graph: SceneGraph, params: GroundingParams = DEFAULT_GROUNDING
) -> LayoutReport:
    entries = []
    boxes = {o.id: o.box for o in goal.objects}
    for edge in graph.edges:
        ok = (
            edge.source in boxes
            and edge.target in boxes
            and edge.label in ground_relation(boxes[edge.source], boxes[edge.target], params)
        )
        entries.append((edge, ok))
    return LayoutReport(tuple(entries))


def synthesize_goal(
    scene: SceneState,
    graph: SceneGraph,
    seed: int = 0,
    table: Box3 | None = None,
    vocab: CategoryVocabulary = DEFAULT_VOCABULARY,
    params: GroundingParams = DEFAULT_GROUNDING,
    gap: float = DEFAULT_GAP,
) -> GoalScene:
    """Full fine stage: priors from the scene, layout, instantiation."""
    priors = {}
    for node in graph.nodes:
        priors[node.id] = estimate_shape_prior(scene.get(node.id))
    layout = solve_layout(
        graph, priors, table if table is not None else scene.table, seed, vocab, params, gap
    )
    return instantiate_goal_scene(layout, priors)


# ---------------------------------------------------------------------------
# GoalScene JSON


def goal_to_dict(goal: GoalScene) -> dict:
    return {
        "objects": [
            {
                "id": o.id,
                "box": {
                    "center": [float(v) for v in o.box.center],
                    "half_extents": [float(v) for v in o.box.half_extents],
                    "yaw": float(o.box.yaw),
                },
                "points": [[float(c) for c in p] for p in o.cloud.points],
                "source_id": o.source_id,
            }
            for o in goal.objects
        ]
    }


def save_goal(goal: GoalScene) -> bytes:
    return json.dumps(goal_to_dict(goal), indent=1).encode("utf-8")


def goal_from_dict(doc: dict) -> GoalScene:
    if not isinstance(doc, dict) or "objects" not in doc:
        raise SchemaError("goal document must be an object with an 'objects' array")
    objects = []
    for i, obj_doc in enumerate(doc["objects"]):
        ctx = f"goal.objects[{i}]"
        try:
            box_doc = obj_doc["box"]
            box = Box3(
                np.array(box_doc["center"], dtype=float),
                np.array(box_doc["half_extents"], dtype=float),
                float(box_doc["yaw"]),
            )
            cloud = PointCloud(np.array(obj_doc["points"], dtype=float), "table")
            objects.append(GoalObject(int(obj_doc["id"]), cloud, box, int(obj_doc["source_id"])))
        except (KeyError, ValueError, TypeError) as e:
            raise SchemaError(f"{ctx}: {e}") from e
    try:
        return GoalScene(tuple(objects))
    except ValueError as e:
        raise SchemaError(f"goal: {e}") from e


def load_goal(source: str | Path | bytes) -> GoalScene:
    return goal_from_dict(_load_json(source, "goal"))
