"""Semantic scene graph: category-labeled nodes, relation-labeled edges."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class RelationLabel(str, Enum):
    """The six spatial relations an edge may carry."""

    LEFT = "left"
    RIGHT = "right"
    FRONT = "front"
    BEHIND = "behind"
    STANDING_ON = "standing_on"
    CLOSE_BY = "close_by"


_INVERSES = {
    RelationLabel.LEFT: RelationLabel.RIGHT,
    RelationLabel.RIGHT: RelationLabel.LEFT,
    RelationLabel.FRONT: RelationLabel.BEHIND,
    RelationLabel.BEHIND: RelationLabel.FRONT,
    RelationLabel.CLOSE_BY: RelationLabel.CLOSE_BY,
}


def inverse_relation(label: RelationLabel) -> RelationLabel | None:
    """Relation seen from the swapped argument order.

    `standing_on` has no counterpart in the vocabulary (there is no
    "supporting" label), so it maps to None and is never auto-mirrored.
    """
    return _INVERSES.get(label)


@dataclass(frozen=True)
class GraphNode:
    id: int
    category: str


@dataclass(frozen=True)
class GraphEdge:
    source: int
    target: int
    label: RelationLabel


@dataclass(frozen=True)
class SceneGraph:
    """Directed labeled graph over object nodes.

    Invariants enforced at construction: no self-edges, edge endpoints
    must exist, and no duplicate (source, target, label) triple.
    """

    nodes: tuple[GraphNode, ...]
    edges: tuple[GraphEdge, ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        ids = [n.id for n in self.nodes]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate node ids")
        id_set = set(ids)
        seen = set()
        for e in self.edges:
            if e.source == e.target:
                raise ValueError(f"self-edge on node {e.source}")
            if e.source not in id_set or e.target not in id_set:
                raise ValueError(f"edge {e.source}->{e.target} references a missing node")
            triple = (e.source, e.target, e.label)
            if triple in seen:
                raise ValueError(f"duplicate edge {triple}")
            seen.add(triple)

    @property
    def node_ids(self) -> tuple[int, ...]:
        return tuple(n.id for n in self.nodes)

    def category_of(self, node_id: int) -> str:
        for n in self.nodes:
            if n.id == node_id:
                return n.category
        raise KeyError(node_id)

    def has_node(self, node_id: int) -> bool:
        return any(n.id == node_id for n in self.nodes)

    def out_edges(self, node_id: int) -> tuple[GraphEdge, ...]:
        return tuple(e for e in self.edges if e.source == node_id)

    def in_edges(self, node_id: int) -> tuple[GraphEdge, ...]:
        return tuple(e for e in self.edges if e.target == node_id)


def empty_graph() -> SceneGraph:
    return SceneGraph((), ())
