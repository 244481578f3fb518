"""
Commonsense goal graphs and user edits
======================================

Runs the table-setting rule engine over a cluttered scene (including an
unknown object that gets classified as an obstacle), then applies a few
user edits and re-grounds relations off box geometry.
"""

import numpy as np

from sgbot import (
    GraphEdit,
    RelationLabel,
    SceneState,
    apply_edits,
    build_commonsense_graph,
    flag_obstacles,
    ground_relation,
    make_object,
)
from sgbot.geometry import PointCloud


def blockish(seed, center, size):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-0.5, 0.5, (240, 3)) * np.asarray(size)
    pts[:, 2] -= pts[:, 2].min()
    return PointCloud(pts + np.array([center[0], center[1], 0.0]))


objects = (
    make_object(0, "plate", blockish(1, (0.0, 0.0), (0.3, 0.3, 0.02))),
    make_object(1, "fork", blockish(2, (-0.5, 0.2), (0.19, 0.025, 0.012))),
    make_object(2, "knife", blockish(3, (0.5, 0.2), (0.21, 0.02, 0.01))),
    make_object(3, "spoon", blockish(4, (0.3, -0.3), (0.17, 0.03, 0.012))),
    make_object(4, "stapler", blockish(5, (-0.3, -0.3), (0.12, 0.05, 0.05))),
)

flagged = flag_obstacles(objects)
print("obstacles:", [o.category for o in flagged if o.is_obstacle])

graph = build_commonsense_graph(objects)
print("commonsense edges:")
for e in graph.edges:
    print(f"  {graph.category_of(e.source)} --{e.label.value}--> {graph.category_of(e.target)}")

# The user swaps the fork to the right side and drops the spoon.
edited = apply_edits(graph, [
    GraphEdit.remove_edge(1, 0, RelationLabel.LEFT),
    GraphEdit.add_edge(1, 0, RelationLabel.RIGHT),
    GraphEdit.remove_node(3),
])
print("after edits:", [(e.source, e.label.value, e.target) for e in edited.edges])

# Grounding reads relations straight off box geometry.
scene = SceneState(objects)
labels = ground_relation(scene.get(1).box, scene.get(0).box)
print("fork is currently:", sorted(label.value for label in labels), "of the plate")
