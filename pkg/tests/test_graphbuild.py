import math

import numpy as np
import pytest

from sgbot import (
    Box3,
    CategoryVocabulary,
    GraphEdit,
    GroundingParams,
    InvariantViolation,
    NoPlaceableObjects,
    RelationLabel,
    Role,
    UnknownReference,
    apply_edits,
    build_commonsense_graph,
    flag_obstacles,
    ground_relation,
    make_object,
)
from sgbot.scenegraph import GraphEdge, GraphNode, SceneGraph
from tests.conftest import resting_block

VOCAB = CategoryVocabulary()


def objects_of(*cats):
    return tuple(
        make_object(i, c, resting_block(i + 10, (0.25 * i - 0.5, 0.0), (0.1, 0.08, 0.04)))
        for i, c in enumerate(cats)
    )


def edge_set(graph):
    return {(e.source, e.label, e.target) for e in graph.edges}


def test_vocabulary_roles_total():
    assert VOCAB.role("plate") is Role.ANCHOR
    assert VOCAB.role("spoon") is Role.CUTLERY
    assert VOCAB.role("teapot") is Role.OTHER
    assert VOCAB.role("hammer") is Role.OBSTACLE
    assert VOCAB.role("") is Role.OBSTACLE


def test_plate_fork_knife():
    graph = build_commonsense_graph(objects_of("plate", "fork", "knife"))
    assert edge_set(graph) == {
        (1, RelationLabel.LEFT, 0),
        (2, RelationLabel.RIGHT, 0),
    }


def test_spoon_close_by_bowl_without_plate():
    graph = build_commonsense_graph(objects_of("bowl", "spoon"))
    assert edge_set(graph) == {(1, RelationLabel.CLOSE_BY, 0)}


def test_spoon_front_of_plate():
    graph = build_commonsense_graph(objects_of("plate", "spoon"))
    assert edge_set(graph) == {(1, RelationLabel.FRONT, 0)}


def test_obstacle_removed():
    graph = build_commonsense_graph(objects_of("plate", "hammer"))
    assert graph.node_ids == (0,)
    assert graph.edges == ()


def test_all_obstacles_error():
    with pytest.raises(NoPlaceableObjects):
        build_commonsense_graph(objects_of("hammer", "wrench"))


def test_flag_obstacles():
    flagged = flag_obstacles(objects_of("plate", "hammer"))
    assert [o.is_obstacle for o in flagged] == [False, True]


def test_other_objects_front_of_highest_anchor():
    graph = build_commonsense_graph(objects_of("bowl", "bottle", "plate"))
    assert (1, RelationLabel.FRONT, 2) in edge_set(graph)  # bottle -> plate, not bowl
    assert (0, RelationLabel.CLOSE_BY, 2) in edge_set(graph)  # bowl close_by plate


def test_cup_close_by_bowl_when_no_plate():
    graph = build_commonsense_graph(objects_of("bowl", "cup"))
    assert edge_set(graph) == {(1, RelationLabel.CLOSE_BY, 0)}


def test_every_non_host_has_one_outgoing_edge():
    graph = build_commonsense_graph(
        objects_of("plate", "fork", "knife", "spoon", "bowl", "cup", "bottle", "can")
    )
    host = 0
    for node in graph.nodes:
        out = graph.out_edges(node.id)
        assert len(out) == (0 if node.id == host else 1)


def test_duplicate_categories_tie_break_ascending():
    graph = build_commonsense_graph(objects_of("plate", "fork", "fork"))
    assert edge_set(graph) == {
        (1, RelationLabel.LEFT, 0),
        (2, RelationLabel.LEFT, 0),
    }


def test_permutation_invariance_up_to_ids():
    objs = objects_of("plate", "fork", "knife")
    graph_a = build_commonsense_graph(objs)
    graph_b = build_commonsense_graph(tuple(reversed(objs)))
    assert edge_set(graph_a) == edge_set(graph_b)


def test_no_anchor_scene_uses_largest_footprint():
    objs = (
        make_object(0, "can", resting_block(20, (-0.3, 0.0), (0.06, 0.06, 0.1))),
        make_object(1, "box", resting_block(21, (0.3, 0.0), (0.2, 0.15, 0.05))),
    )
    graph = build_commonsense_graph(objs)
    assert edge_set(graph) == {(0, RelationLabel.FRONT, 1)}


# ---------------------------------------------------------------------------
# Edits


def base_graph():
    return SceneGraph(
        (GraphNode(0, "plate"), GraphNode(1, "fork"), GraphNode(2, "knife")),
        (GraphEdge(1, 0, RelationLabel.LEFT),),
    )


def test_add_edge():
    graph = apply_edits(base_graph(), [GraphEdit.add_edge(2, 0, RelationLabel.RIGHT)])
    assert (2, RelationLabel.RIGHT, 0) in edge_set(graph)


def test_remove_node_cascades():
    graph = apply_edits(base_graph(), [GraphEdit.remove_node(0)])
    assert graph.node_ids == (1, 2)
    assert graph.edges == ()


def test_self_edge_rejected():
    with pytest.raises(InvariantViolation) as exc:
        apply_edits(base_graph(), [GraphEdit.add_edge(1, 1, RelationLabel.LEFT)])
    assert exc.value.edit_index == 0


def test_duplicate_edge_rejected_with_index():
    edits = [
        GraphEdit.add_edge(2, 0, RelationLabel.RIGHT),
        GraphEdit.add_edge(1, 0, RelationLabel.LEFT),
    ]
    with pytest.raises(InvariantViolation) as exc:
        apply_edits(base_graph(), edits)
    assert exc.value.edit_index == 1


def test_unknown_reference():
    with pytest.raises(UnknownReference) as exc:
        apply_edits(base_graph(), [GraphEdit.remove_node(9)])
    assert exc.value.edit_index == 0


def test_transactional_on_failure():
    graph = base_graph()
    edits = [
        GraphEdit.add_edge(2, 0, RelationLabel.RIGHT),
        GraphEdit.add_edge(0, 0, RelationLabel.LEFT),  # fails
    ]
    with pytest.raises(InvariantViolation):
        apply_edits(graph, edits)
    assert graph == base_graph()  # untouched


def test_set_category():
    graph = apply_edits(base_graph(), [GraphEdit.set_category(2, "spoon")])
    assert graph.category_of(2) == "spoon"


def test_remove_edge_then_missing():
    graph = apply_edits(base_graph(), [GraphEdit.remove_edge(1, 0, RelationLabel.LEFT)])
    assert graph.edges == ()
    with pytest.raises(UnknownReference):
        apply_edits(graph, [GraphEdit.remove_edge(1, 0, RelationLabel.LEFT)])


# ---------------------------------------------------------------------------
# Grounding


def small_box(x, y, z=0.02, half=(0.05, 0.05, 0.02), yaw=0.0):
    return Box3(np.array([x, y, z]), np.array(half), yaw)


def test_directional_left():
    labels = ground_relation(small_box(-0.2, 0.0), small_box(0.0, 0.0))
    assert labels == {RelationLabel.LEFT}


def test_directional_antisymmetry():
    rng = np.random.default_rng(4)
    for _ in range(50):
        a = small_box(*rng.uniform(-0.5, 0.5, 2))
        b = small_box(*rng.uniform(-0.5, 0.5, 2))
        d = a.center - b.center
        if abs(abs(d[0]) - abs(d[1])) < 1e-9 or (abs(d[0]) < 1e-9 and abs(d[1]) < 1e-9):
            continue
        fwd = ground_relation(a, b) & {
            RelationLabel.LEFT, RelationLabel.RIGHT, RelationLabel.FRONT, RelationLabel.BEHIND
        }
        rev = ground_relation(b, a) & {
            RelationLabel.LEFT, RelationLabel.RIGHT, RelationLabel.FRONT, RelationLabel.BEHIND
        }
        pairs = {
            RelationLabel.LEFT: RelationLabel.RIGHT,
            RelationLabel.RIGHT: RelationLabel.LEFT,
            RelationLabel.FRONT: RelationLabel.BEHIND,
            RelationLabel.BEHIND: RelationLabel.FRONT,
        }
        assert rev == {pairs[label] for label in fwd}


def test_exact_stacking():
    lower = small_box(0.0, 0.0, 0.02)
    upper = Box3(np.array([0.0, 0.0, 0.06]), np.array([0.04, 0.04, 0.02]), 0.0)
    assert ground_relation(upper, lower) == {RelationLabel.STANDING_ON}


def test_standing_needs_footprint_overlap():
    lower = small_box(0.0, 0.0, 0.02)
    upper = Box3(np.array([0.2, 0.0, 0.06]), np.array([0.04, 0.04, 0.02]), 0.0)
    labels = ground_relation(upper, lower)
    assert RelationLabel.STANDING_ON not in labels


def test_close_by_arithmetic():
    # half-diagonals hypot(0.05, 0.05) ~ 0.0707 each; delta_close =
    # 1.25 * 0.1414 = 0.1768 > 0.03 separation -> close_by plus a
    # directional label on the dominant axis
    a = small_box(-0.03, 0.0)
    b = small_box(0.0, 0.0)
    labels = ground_relation(a, b)
    assert labels == {RelationLabel.CLOSE_BY, RelationLabel.LEFT}


def test_close_by_threshold_boundary():
    params = GroundingParams(delta_close_factor=1.0)
    # distance exactly equals summed half-diagonals -> still close (<=)
    hd = math.hypot(0.05, 0.05)
    a = small_box(-2 * hd, 0.0)
    b = small_box(0.0, 0.0)
    assert RelationLabel.CLOSE_BY in ground_relation(a, b, params)
    far = small_box(-2 * hd - 1e-6, 0.0)
    assert RelationLabel.CLOSE_BY not in ground_relation(far, b, params)


def test_directional_suppressed_when_standing():
    lower = small_box(0.0, 0.0, 0.02)
    upper = Box3(np.array([0.01, 0.0, 0.06]), np.array([0.04, 0.04, 0.02]), 0.0)
    labels = ground_relation(upper, lower)
    assert labels == {RelationLabel.STANDING_ON}
