import math

import numpy as np
import pytest

from sgbot import (
    DEFAULT_TABLE,
    KeyMismatch,
    LayoutInfeasible,
    MissingPrior,
    PointCloud,
    RelationLabel,
    SceneState,
    apply_transform,
    box_from_cloud,
    build_commonsense_graph,
    estimate_shape_prior,
    ground_relation,
    instantiate_goal_scene,
    load_goal,
    make_object,
    save_goal,
    solve_layout,
    synthesize_goal,
    verify_layout,
)
from sgbot.geometry import RigidTransform, rot_z
from sgbot.goalsynth import GoalObject, GoalScene
from sgbot.scenegraph import GraphEdge, GraphNode, SceneGraph
from tests.conftest import blob_cloud, resting_block, unit_cube_corners


def setting_objects(*cats):
    sizes = {
        "plate": (0.3, 0.3, 0.02),
        "bowl": (0.16, 0.16, 0.05),
        "cup": (0.08, 0.08, 0.1),
        "fork": (0.19, 0.025, 0.012),
        "knife": (0.21, 0.02, 0.01),
        "spoon": (0.17, 0.03, 0.012),
        "bottle": (0.06, 0.06, 0.22),
        "can": (0.065, 0.065, 0.11),
        "box": (0.09, 0.06, 0.05),
        "teapot": (0.18, 0.12, 0.11),
    }
    return tuple(
        make_object(i, c, resting_block(50 + i, (0.3 * i - 0.6, -0.1), sizes[c]))
        for i, c in enumerate(cats)
    )


# ---------------------------------------------------------------------------
# Shape priors


def test_prior_unit_cube():
    obj = make_object(0, "box", unit_cube_corners((0, 0, 0.5)))
    prior = estimate_shape_prior(obj)
    np.testing.assert_allclose(prior.dims, [1.0, 1.0, 1.0], atol=1e-9)
    assert prior.yaw == pytest.approx(0.0, abs=1e-9)
    np.testing.assert_allclose(prior.centered_cloud.centroid, np.zeros(3), atol=1e-9)


def test_prior_translation_invariance():
    cloud = blob_cloud(9, count=120)
    a = estimate_shape_prior(make_object(0, "box", cloud))
    b = estimate_shape_prior(make_object(0, "box", cloud.translated(np.array([2.0, 0.0, 0.0]))))
    np.testing.assert_allclose(a.centered_cloud.points, b.centered_cloud.points, atol=1e-9)
    np.testing.assert_allclose(a.dims, b.dims, atol=1e-9)
    assert a.yaw == pytest.approx(b.yaw, abs=1e-9)


def test_prior_elongated_yaw():
    rng = np.random.default_rng(8)
    along = rng.uniform(-0.1, 0.1, 300)
    across = rng.uniform(-0.008, 0.008, 300)
    d = np.array([math.cos(0.3), math.sin(0.3)])
    n = np.array([-d[1], d[0]])
    pts = np.column_stack([along[:, None] * d + across[:, None] * n, rng.uniform(0, 0.01, (300, 1))])
    prior = estimate_shape_prior(make_object(0, "fork", PointCloud(pts)))
    assert prior.yaw == pytest.approx(0.3, abs=0.01)


# ---------------------------------------------------------------------------
# Layout solving


def test_single_node_at_origin():
    objs = setting_objects("plate")
    graph = build_commonsense_graph(objs)
    layout = solve_layout(graph, {0: estimate_shape_prior(objs[0])})
    box = layout[0]
    np.testing.assert_allclose(box.center[:2], [0.0, 0.0], atol=1e-12)
    assert box.bottom == pytest.approx(0.0, abs=1e-9)
    assert box.yaw == 0.0


def test_fork_left_knife_right():
    objs = setting_objects("plate", "fork", "knife")
    graph = build_commonsense_graph(objs)
    priors = {o.id: estimate_shape_prior(o) for o in objs}
    layout = solve_layout(graph, priors)
    assert layout[1].center[0] < layout[0].center[0] < layout[2].center[0]
    for edge in graph.edges:
        assert edge.label in ground_relation(layout[edge.source], layout[edge.target])


def test_cutlery_aligned_to_y():
    objs = setting_objects("plate", "fork")
    graph = build_commonsense_graph(objs)
    priors = {o.id: estimate_shape_prior(o) for o in objs}
    layout = solve_layout(graph, priors)
    assert abs(layout[1].yaw) == pytest.approx(math.pi / 2, abs=1e-6)


def test_contradictory_cycle_infeasible():
    nodes = (GraphNode(0, "box"), GraphNode(1, "can"))
    edges = (GraphEdge(0, 1, RelationLabel.LEFT), GraphEdge(1, 0, RelationLabel.LEFT))
    graph = SceneGraph(nodes, edges)
    objs = setting_objects("box", "can")
    priors = {o.id: estimate_shape_prior(o) for o in objs}
    with pytest.raises(LayoutInfeasible):
        solve_layout(graph, priors)


def test_missing_prior():
    objs = setting_objects("plate", "fork")
    graph = build_commonsense_graph(objs)
    with pytest.raises(MissingPrior):
        solve_layout(graph, {0: estimate_shape_prior(objs[0])})


def test_standing_on_layout():
    nodes = (GraphNode(0, "box"), GraphNode(1, "can"))
    edges = (GraphEdge(1, 0, RelationLabel.STANDING_ON),)
    graph = SceneGraph(nodes, edges)
    objs = setting_objects("box", "can")
    priors = {o.id: estimate_shape_prior(o) for o in objs}
    layout = solve_layout(graph, priors)
    assert layout[1].bottom == pytest.approx(layout[0].top, abs=1e-9)
    np.testing.assert_allclose(layout[1].center[:2], layout[0].center[:2], atol=1e-9)
    assert RelationLabel.STANDING_ON in ground_relation(layout[1], layout[0])


def test_mutual_close_by_feasible():
    nodes = (GraphNode(0, "bowl"), GraphNode(1, "cup"))
    edges = (
        GraphEdge(0, 1, RelationLabel.CLOSE_BY),
        GraphEdge(1, 0, RelationLabel.CLOSE_BY),
    )
    graph = SceneGraph(nodes, edges)
    objs = setting_objects("bowl", "cup")
    priors = {o.id: estimate_shape_prior(o) for o in objs}
    layout = solve_layout(graph, priors)
    assert RelationLabel.CLOSE_BY in ground_relation(layout[0], layout[1])
    assert RelationLabel.CLOSE_BY in ground_relation(layout[1], layout[0])


def test_duplicates_staggered_without_overlap():
    objs = setting_objects("plate", "fork", "fork", "fork")
    graph = build_commonsense_graph(objs)
    priors = {o.id: estimate_shape_prior(o) for o in objs}
    layout = solve_layout(graph, priors)
    goal = instantiate_goal_scene(layout, priors)  # validates xy disjointness
    for edge in graph.edges:
        assert edge.label in ground_relation(layout[edge.source], layout[edge.target])
    ys = sorted(layout[i].center[1] for i in (1, 2, 3))
    assert ys[0] < ys[1] < ys[2]


def test_determinism_per_seed():
    objs = setting_objects("plate", "fork", "knife", "bowl", "bottle")
    graph = build_commonsense_graph(objs)
    priors = {o.id: estimate_shape_prior(o) for o in objs}
    layout_a = solve_layout(graph, priors, seed=7)
    layout_b = solve_layout(graph, priors, seed=7)
    for key in layout_a:
        np.testing.assert_array_equal(layout_a[key].center, layout_b[key].center)
        assert layout_a[key].yaw == layout_b[key].yaw


def test_seed_steers_close_by_ring():
    objs = setting_objects("bowl", "spoon")
    graph = build_commonsense_graph(objs)
    priors = {o.id: estimate_shape_prior(o) for o in objs}
    a = solve_layout(graph, priors, seed=0)[1].center
    b = solve_layout(graph, priors, seed=1)[1].center
    assert not np.allclose(a, b)


# ---------------------------------------------------------------------------
# Instantiation


def test_instantiate_pure_translation():
    cloud = unit_cube_corners((0.0, 0.0, 0.5))
    obj = make_object(0, "box", cloud)
    prior = estimate_shape_prior(obj)
    from sgbot.geometry import Box3

    target = Box3(np.array([0.1, 0.0, 0.5]), prior.dims / 2.0, 0.0)
    goal = instantiate_goal_scene({0: target}, {0: prior})
    np.testing.assert_allclose(
        goal.get(0).cloud.points, cloud.points + np.array([0.1, 0.0, 0.0]), atol=1e-9
    )


def test_instantiate_quarter_turn_swaps_extents():
    rng = np.random.default_rng(12)
    pts = rng.uniform(-0.5, 0.5, (200, 3)) * np.array([0.2, 0.08, 0.04])
    pts[:, 2] -= pts[:, 2].min()
    obj = make_object(0, "box", PointCloud(pts))
    prior = estimate_shape_prior(obj)
    from sgbot.geometry import Box3

    hz = prior.dims[2] / 2.0
    target = Box3(np.array([0.0, 0.0, hz]), prior.dims / 2.0, prior.yaw + math.pi / 2)
    goal = instantiate_goal_scene({0: target}, {0: prior})
    moved = goal.get(0).cloud.points
    before = obj.cloud.points
    ext_before = before.max(axis=0) - before.min(axis=0)
    ext_after = moved.max(axis=0) - moved.min(axis=0)
    assert ext_after[0] == pytest.approx(ext_before[1], abs=1e-6)
    assert ext_after[1] == pytest.approx(ext_before[0], abs=1e-6)


def test_instantiate_key_mismatch():
    obj = make_object(0, "box", unit_cube_corners((0, 0, 0.5)))
    prior = estimate_shape_prior(obj)
    with pytest.raises(KeyMismatch):
        instantiate_goal_scene({}, {0: prior})


def test_goal_box_contains_cloud_and_provenance():
    objs = setting_objects("plate", "fork", "bowl")
    graph = build_commonsense_graph(objs)
    priors = {o.id: estimate_shape_prior(o) for o in objs}
    layout = solve_layout(graph, priors)
    goal = instantiate_goal_scene(layout, priors)
    for g in goal.objects:
        assert g.box.contains_points(g.cloud.points)
        assert g.source_id == g.id


def test_shape_coherence_rigidity():
    # every goal cloud is a rigid image of the observed cloud
    objs = setting_objects("plate", "fork", "knife")
    goal = synthesize_goal(SceneState(objs), build_commonsense_graph(objs))
    for obj in objs:
        moved = goal.get(obj.id).cloud.points
        orig = obj.cloud.points
        d0 = np.linalg.norm(orig[:50, None] - orig[None, :50], axis=-1)
        d1 = np.linalg.norm(moved[:50, None] - moved[None, :50], axis=-1)
        np.testing.assert_allclose(d1, d0, atol=1e-9)


def test_non_stacked_bottoms_zero():
    objs = setting_objects("plate", "fork", "bowl", "bottle")
    goal = synthesize_goal(SceneState(objs), build_commonsense_graph(objs))
    for g in goal.objects:
        assert g.box.bottom == pytest.approx(0.0, abs=1e-6)


# ---------------------------------------------------------------------------
# Verification


def test_verify_layout_round_trip():
    objs = setting_objects("plate", "fork", "knife", "spoon", "bowl")
    graph = build_commonsense_graph(objs)
    goal = synthesize_goal(SceneState(objs), graph)
    report = verify_layout(goal, graph)
    assert report.all_true
    assert len(report.entries) == len(graph.edges)


def test_verify_layout_detects_violation():
    objs = setting_objects("plate", "fork")
    graph = build_commonsense_graph(objs)
    goal = synthesize_goal(SceneState(objs), graph)
    # move the fork to the wrong side
    fork = goal.get(1)
    flipped_box = fork.box
    from sgbot.geometry import Box3

    wrong = Box3(flipped_box.center * np.array([-1.0, 1.0, 1.0]), flipped_box.half_extents, flipped_box.yaw)
    tampered = GoalScene(
        tuple(
            GoalObject(g.id, g.cloud, wrong if g.id == 1 else g.box, g.source_id)
            for g in goal.objects
        )
    )
    report = verify_layout(tampered, graph)
    assert not report.all_true
    assert [e.source for e in report.failed] == [1]


def test_verify_empty_graph():
    objs = setting_objects("plate")
    graph = build_commonsense_graph(objs)
    goal = synthesize_goal(SceneState(objs), graph)
    report = verify_layout(goal, SceneGraph(graph.nodes, ()))
    assert report.entries == ()
    assert report.all_true


def test_goal_json_round_trip():
    objs = setting_objects("plate", "fork")
    goal = synthesize_goal(SceneState(objs), build_commonsense_graph(objs))
    loaded = load_goal(save_goal(goal))
    assert loaded.ids() == goal.ids()
    for a, b in zip(goal.objects, loaded.objects):
        np.testing.assert_allclose(a.cloud.points, b.cloud.points, atol=1e-9)
        np.testing.assert_allclose(a.box.center, b.box.center, atol=1e-9)
