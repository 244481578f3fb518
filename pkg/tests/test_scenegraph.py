import pytest

from sgbot import GraphEdge, GraphNode, RelationLabel, SceneGraph, inverse_relation


def make_nodes(*cats):
    return tuple(GraphNode(i, c) for i, c in enumerate(cats))


def test_six_labels():
    assert len(list(RelationLabel)) == 6
    assert {label.value for label in RelationLabel} == {
        "left",
        "right",
        "front",
        "behind",
        "standing_on",
        "close_by",
    }


def test_inverse_pairing():
    assert inverse_relation(RelationLabel.LEFT) is RelationLabel.RIGHT
    assert inverse_relation(RelationLabel.RIGHT) is RelationLabel.LEFT
    assert inverse_relation(RelationLabel.FRONT) is RelationLabel.BEHIND
    assert inverse_relation(RelationLabel.BEHIND) is RelationLabel.FRONT
    assert inverse_relation(RelationLabel.CLOSE_BY) is RelationLabel.CLOSE_BY
    # standing_on has no counterpart in the vocabulary
    assert inverse_relation(RelationLabel.STANDING_ON) is None


def test_inverse_is_involution_where_defined():
    for label in RelationLabel:
        inv = inverse_relation(label)
        if inv is not None:
            assert inverse_relation(inv) is label


def test_rejects_self_edge():
    nodes = make_nodes("plate", "fork")
    with pytest.raises(ValueError, match="self-edge"):
        SceneGraph(nodes, (GraphEdge(0, 0, RelationLabel.LEFT),))


def test_rejects_dangling_edge():
    nodes = make_nodes("plate")
    with pytest.raises(ValueError, match="missing node"):
        SceneGraph(nodes, (GraphEdge(0, 5, RelationLabel.LEFT),))


def test_rejects_duplicate_edge():
    nodes = make_nodes("plate", "fork")
    edge = GraphEdge(1, 0, RelationLabel.LEFT)
    with pytest.raises(ValueError, match="duplicate"):
        SceneGraph(nodes, (edge, edge))


def test_rejects_duplicate_node_ids():
    with pytest.raises(ValueError, match="duplicate node ids"):
        SceneGraph((GraphNode(0, "plate"), GraphNode(0, "fork")), ())


def test_accessors():
    nodes = make_nodes("plate", "fork", "knife")
    edges = (
        GraphEdge(1, 0, RelationLabel.LEFT),
        GraphEdge(2, 0, RelationLabel.RIGHT),
    )
    graph = SceneGraph(nodes, edges)
    assert graph.node_ids == (0, 1, 2)
    assert graph.category_of(2) == "knife"
    assert graph.out_edges(1) == (edges[0],)
    assert graph.in_edges(0) == edges
    assert graph.has_node(2) and not graph.has_node(9)
