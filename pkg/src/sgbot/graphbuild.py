"""Goal scene-graph construction: commonsense rules, edits, grounding."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from shapely.geometry import Polygon

from .errors import InvariantViolation, NoPlaceableObjects, UnknownReference
from .geometry import Box3
from .ingest import ObjectInstance
from .scenegraph import GraphEdge, GraphNode, RelationLabel, SceneGraph


class Role(Enum):
    ANCHOR = "anchor"
    CUTLERY = "cutlery"
    OTHER = "other"
    OBSTACLE = "obstacle"


# Priority order matters: the first anchor category present hosts the scene.
ANCHOR_PRIORITY = ("plate", "bowl", "cup")
CUTLERY = ("fork", "knife", "spoon")
OTHER_KNOWN = ("bottle", "can", "box", "teapot")


@dataclass(frozen=True)
class CategoryVocabulary:
    """Total, deterministic role assignment over category labels.

    Labels outside the vocabulary classify as obstacles.
    """

    anchors: tuple[str, ...] = ANCHOR_PRIORITY
    cutlery: tuple[str, ...] = CUTLERY
    other: tuple[str, ...] = OTHER_KNOWN

    def role(self, category: str) -> Role:
        if category in self.anchors:
            return Role.ANCHOR
        if category in self.cutlery:
            return Role.CUTLERY
        if category in self.other:
            return Role.OTHER
        return Role.OBSTACLE


DEFAULT_VOCABULARY = CategoryVocabulary()


def flag_obstacles(
    objects: list[ObjectInstance] | tuple[ObjectInstance, ...],
    vocab: CategoryVocabulary = DEFAULT_VOCABULARY,
) -> tuple[ObjectInstance, ...]:
    """Copy of `objects` with is_obstacle set from the vocabulary."""
    return tuple(o.with_obstacle_flag(vocab.role(o.category) is Role.OBSTACLE) for o in objects)


def _anchor_node(nodes: list[GraphNode], vocab: CategoryVocabulary) -> GraphNode | None:
    for category in vocab.anchors:
        candidates = sorted((n for n in nodes if n.category == category), key=lambda n: n.id)
        if candidates:
            return candidates[0]
    return None


def build_commonsense_graph(
    objects: list[ObjectInstance] | tuple[ObjectInstance, ...],
    vocab: CategoryVocabulary = DEFAULT_VOCABULARY,
) -> SceneGraph:
    """Goal graph from table-setting conventions.

    Obstacles (unknown categories) are dropped. One node hosts the scene:
    the highest-priority anchor present (plate, else bowl, else cup), or
    failing that the largest-footprint object. Every other node receives
    exactly one outgoing edge:

    * with a plate: fork -> left of it, knife -> right, spoon -> front;
    * without a plate, cutlery goes close_by the host;
    * remaining anchors go close_by the host;
    * everything else goes in front of the host.

    Duplicate categories each get the same rule; ties break by ascending id.
    """
    placeable = [o for o in objects if vocab.role(o.category) is not Role.OBSTACLE]
    if not placeable:
        raise NoPlaceableObjects("every observed object classified as an obstacle")
    placeable.sort(key=lambda o: o.id)
    nodes = [GraphNode(o.id, o.category) for o in placeable]

    host = _anchor_node(nodes, vocab)
    if host is None:
        footprint = {o.id: float(o.box.half_extents[0] * o.box.half_extents[1]) for o in placeable}
        host = max(nodes, key=lambda n: (footprint[n.id], -n.id))
    has_plate = any(n.category == "plate" for n in nodes)

    edges = []
    for node in nodes:
        if node.id == host.id:
            continue
        role = vocab.role(node.category)
        if role is Role.CUTLERY:
            if has_plate:
                label = {
                    "fork": RelationLabel.LEFT,
                    "knife": RelationLabel.RIGHT,
                    "spoon": RelationLabel.FRONT,
                }[node.category]
            else:
                label = RelationLabel.CLOSE_BY
        elif role is Role.ANCHOR:
            label = RelationLabel.CLOSE_BY
        else:
            label = RelationLabel.FRONT
        edges.append(GraphEdge(node.id, host.id, label))
    return SceneGraph(tuple(nodes), tuple(edges))


# ---------------------------------------------------------------------------
# Graph edits


@dataclass(frozen=True)
class GraphEdit:
    """One user edit; `kind` selects which fields apply."""

    kind: str  # add_edge | remove_edge | remove_node | set_category
    source: int | None = None
    target: int | None = None
    relation: RelationLabel | None = None
    node_id: int | None = None
    category: str | None = None

    @staticmethod
    def add_edge(source: int, target: int, relation: RelationLabel) -> "GraphEdit":
        return GraphEdit("add_edge", source=source, target=target, relation=relation)

    @staticmethod
    def remove_edge(source: int, target: int, relation: RelationLabel) -> "GraphEdit":
        return GraphEdit("remove_edge", source=source, target=target, relation=relation)

    @staticmethod
    def remove_node(node_id: int) -> "GraphEdit":
        return GraphEdit("remove_node", node_id=node_id)

    @staticmethod
    def set_category(node_id: int, category: str) -> "GraphEdit":
        return GraphEdit("set_category", node_id=node_id, category=category)


def apply_edits(graph: SceneGraph, edits: list[GraphEdit] | tuple[GraphEdit, ...]) -> SceneGraph:
    """Apply edits in order, transactionally.

    Raises UnknownReference or InvariantViolation carrying the index of
    the offending edit; the input graph is never modified.
    """
    nodes = list(graph.nodes)
    edges = list(graph.edges)
    for index, edit in enumerate(edits):
        node_ids = {n.id for n in nodes}
        if edit.kind == "add_edge":
            if edit.source not in node_ids:
                raise UnknownReference(index, f"no node {edit.source}")
            if edit.target not in node_ids:
                raise UnknownReference(index, f"no node {edit.target}")
            if edit.source == edit.target:
                raise InvariantViolation(index, "self-edges are not allowed")
            new_edge = GraphEdge(edit.source, edit.target, edit.relation)
            if any(
                e.source == new_edge.source
                and e.target == new_edge.target
                and e.label == new_edge.label
                for e in edges
            ):
                raise InvariantViolation(index, "duplicate edge")
            edges.append(new_edge)
        elif edit.kind == "remove_edge":
            matches = [
                e
                for e in edges
                if e.source == edit.source and e.target == edit.target and e.label == edit.relation
            ]
            if not matches:
                raise UnknownReference(
                    index,
                    f"no edge {edit.source}->{edit.target} ({edit.relation.value})",
                )
            edges.remove(matches[0])
        elif edit.kind == "remove_node":
            if edit.node_id not in node_ids:
                raise UnknownReference(index, f"no node {edit.node_id}")
            nodes = [n for n in nodes if n.id != edit.node_id]
            edges = [e for e in edges if edit.node_id not in (e.source, e.target)]
        elif edit.kind == "set_category":
            if edit.node_id not in node_ids:
                raise UnknownReference(index, f"no node {edit.node_id}")
            nodes = [
                GraphNode(n.id, edit.category) if n.id == edit.node_id else n for n in nodes
            ]
        else:
            raise InvariantViolation(index, f"unknown edit kind {edit.kind!r}")
    return SceneGraph(tuple(nodes), tuple(edges))


# ---------------------------------------------------------------------------
# Geometric grounding


@dataclass(frozen=True)
class GroundingParams:
    """Thresholds for reading relations off box geometry."""

    eps_z: float = 0.01
    delta_close_factor: float = 1.25
    footprint_overlap: float = 0.5


DEFAULT_GROUNDING = GroundingParams()


def _footprint(box: Box3) -> Polygon:
    return Polygon(box.footprint_polygon_xy())


def ground_relation(
    box_i: Box3, box_j: Box3, params: GroundingParams = DEFAULT_GROUNDING
) -> set[RelationLabel]:
    """Relations that hold for box_i relative to box_j.

    standing_on requires the bottom of i to meet the top of j (within
    eps_z) with at least `footprint_overlap` of i's footprint covered;
    it suppresses all other labels. Otherwise exactly one directional
    label is chosen by the dominant horizontal axis of the center offset,
    plus close_by when the centers are within delta_close_factor times
    the summed xy half-diagonals.
    """
    d = box_i.center - box_j.center
    if abs(box_i.bottom - box_j.top) <= params.eps_z:
        poly_i = _footprint(box_i)
        overlap = poly_i.intersection(_footprint(box_j)).area
        if poly_i.area > 0 and overlap / poly_i.area >= params.footprint_overlap:
            return {RelationLabel.STANDING_ON}
    labels: set[RelationLabel] = set()
    if abs(d[0]) >= abs(d[1]):
        labels.add(RelationLabel.LEFT if d[0] < 0 else RelationLabel.RIGHT)
    else:
        labels.add(RelationLabel.FRONT if d[1] > 0 else RelationLabel.BEHIND)
    delta_close = params.delta_close_factor * (box_i.xy_half_diagonal + box_j.xy_half_diagonal)
    if math.hypot(d[0], d[1]) <= delta_close:
        labels.add(RelationLabel.CLOSE_BY)
    return labels
