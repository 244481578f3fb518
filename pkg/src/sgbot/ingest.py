"""Observation ingest and file formats.

Converts raw captures (depth raster + instance masks + intrinsics) or
pre-segmented Scene JSON documents into in-memory scene states, and owns
every serialization format used by the toolkit:

* Scene JSON: ``{"table": {"half_extents": [x, y, z]}, "objects":
  [{"id": int, "category": str, "points": [[x, y, z], ...],
  "is_obstacle": bool?}]}``
* Graph JSON: ``{"nodes": [{"id": int, "category": str}], "edges":
  [{"from": int, "to": int, "relation": str}]}``
* Depth raster: raw 32-bit floats (meters), row-major, with a JSON
  sidecar ``{fx, fy, cx, cy, width, height, rotation: [9 floats,
  row-major], translation: [3 floats], categories?: {"<id>": str}}``.
* Instance mask raster: raw 32-bit ints, row-major, 0 = background,
  positive values are instance ids.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import DegenerateCloud, EmptyMask, ParseError, SchemaError, ShapeMismatch
from .geometry import Box3, PointCloud, RigidTransform, box_from_cloud
from .scenegraph import GraphEdge, GraphNode, RelationLabel, SceneGraph

DEFAULT_TABLE = Box3(np.zeros(3), np.array([0.8, 0.6, 0.02]), 0.0)
TABLE_XY_SLACK = 0.05


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


@dataclass(frozen=True)
class ObjectInstance:
    """One segmented object: cloud in table frame plus derived box."""

    id: int
    category: str
    cloud: PointCloud
    box: Box3
    is_obstacle: bool = False

    def __post_init__(self):
        if len(self.cloud) == 0:
            raise ValueError("object cloud must be non-empty")
        if not self.box.contains_points(self.cloud.points):
            raise ValueError(f"box of object {self.id} does not contain its cloud")

    def with_obstacle_flag(self, flag: bool) -> "ObjectInstance":
        return replace(self, is_obstacle=flag)


def make_object(
    obj_id: int, category: str, cloud: PointCloud, is_obstacle: bool = False
) -> ObjectInstance:
    """Build an ObjectInstance with its principal-axis bounding box."""
    return ObjectInstance(obj_id, category, cloud, box_from_cloud(cloud, "principal_axis"), is_obstacle)


@dataclass(frozen=True)
class SceneState:
    """All objects currently on the table."""

    objects: tuple[ObjectInstance, ...]
    table: Box3 = DEFAULT_TABLE

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))
        ids = [o.id for o in self.objects]
        if len(ids) != len(set(ids)):
            raise ValueError("object ids must be unique")
        hx, hy = self.table.half_extents[0], self.table.half_extents[1]
        for o in self.objects:
            xy = np.abs(o.cloud.points[:, :2])
            if np.any(xy[:, 0] > hx + TABLE_XY_SLACK) or np.any(xy[:, 1] > hy + TABLE_XY_SLACK):
                raise ValueError(f"object {o.id} lies outside the table extent")

    def ids(self) -> tuple[int, ...]:
        return tuple(o.id for o in self.objects)

    def get(self, obj_id: int) -> ObjectInstance:
        for o in self.objects:
            if o.id == obj_id:
                return o
        raise KeyError(obj_id)

    def replace_object(self, obj: ObjectInstance) -> "SceneState":
        objs = tuple(obj if o.id == obj.id else o for o in self.objects)
        return SceneState(objs, self.table)

    def without(self, obj_ids: set[int]) -> "SceneState":
        return SceneState(tuple(o for o in self.objects if o.id not in obj_ids), self.table)


def back_project(
    depth: np.ndarray,
    mask: np.ndarray,
    intrinsics: CameraIntrinsics,
    camera_pose: RigidTransform,
) -> PointCloud:
    """Back-project masked depth pixels through the pinhole model.

    Pixels with non-positive or non-finite depth are skipped. The camera
    pose maps camera-frame points into the table frame; output order is
    the row-major scan order of the mask.
    """
    depth = np.asarray(depth, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if depth.shape != mask.shape:
        raise ShapeMismatch(f"depth {depth.shape} vs mask {mask.shape}")
    if depth.shape != (intrinsics.height, intrinsics.width):
        raise ShapeMismatch(
            f"raster {depth.shape} vs intrinsics {(intrinsics.height, intrinsics.width)}"
        )
    valid = mask & np.isfinite(depth) & (depth > 0.0)
    rows, cols = np.nonzero(valid)
    if rows.size == 0:
        raise EmptyMask("no masked pixel has valid depth")
    z = depth[rows, cols]
    x = (cols - intrinsics.cx) * z / intrinsics.fx
    y = (rows - intrinsics.cy) * z / intrinsics.fy
    camera_points = np.column_stack([x, y, z])
    return PointCloud(camera_pose.apply_points(camera_points), "table")


# ---------------------------------------------------------------------------
# Scene JSON


def _field(doc: dict, key: str, ctx: str):
    if key not in doc:
        raise SchemaError(f"{ctx}: missing field {key!r}")
    return doc[key]


def scene_to_dict(scene: SceneState) -> dict:
    return {
        "table": {"half_extents": [float(v) for v in scene.table.half_extents]},
        "objects": [
            {
                "id": o.id,
                "category": o.category,
                "points": [[float(c) for c in p] for p in o.cloud.points],
                "is_obstacle": o.is_obstacle,
            }
            for o in scene.objects
        ],
    }


def save_scene(scene: SceneState) -> bytes:
    return json.dumps(scene_to_dict(scene), indent=1).encode("utf-8")


def scene_from_dict(doc: dict) -> SceneState:
    if not isinstance(doc, dict):
        raise SchemaError("scene document must be a JSON object")
    table_doc = _field(doc, "table", "scene")
    half = _field(table_doc, "half_extents", "scene.table")
    if not (isinstance(half, list) and len(half) == 3):
        raise SchemaError("scene.table.half_extents must be a 3-element array")
    try:
        table = Box3(np.zeros(3), np.array(half, dtype=float), 0.0)
    except ValueError as e:
        raise SchemaError(f"scene.table: {e}") from e
    objects = []
    for i, obj_doc in enumerate(_field(doc, "objects", "scene")):
        ctx = f"scene.objects[{i}]"
        obj_id = _field(obj_doc, "id", ctx)
        if not isinstance(obj_id, int) or isinstance(obj_id, bool):
            raise SchemaError(f"{ctx}.id must be an integer")
        category = _field(obj_doc, "category", ctx)
        if not isinstance(category, str):
            raise SchemaError(f"{ctx}.category must be a string")
        points = _field(obj_doc, "points", ctx)
        if not points:
            raise SchemaError(f"{ctx}.points must be non-empty")
        is_obstacle = obj_doc.get("is_obstacle", False)
        if not isinstance(is_obstacle, bool):
            raise SchemaError(f"{ctx}.is_obstacle must be a boolean")
        try:
            cloud = PointCloud(np.array(points, dtype=float), "table")
            objects.append(make_object(obj_id, category, cloud, is_obstacle))
        except (ValueError, DegenerateCloud) as e:
            raise SchemaError(f"{ctx}: {e}") from e
    try:
        return SceneState(tuple(objects), table)
    except ValueError as e:
        raise SchemaError(f"scene: {e}") from e


def load_scene(source: str | Path | bytes) -> SceneState:
    """Parse a Scene JSON document from a path or raw bytes."""
    return scene_from_dict(_load_json(source, "scene"))


def _load_json(source: str | Path | bytes, what: str) -> dict:
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    else:
        text = Path(source).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"{what}: line {e.lineno} column {e.colno}: {e.msg}") from e


# ---------------------------------------------------------------------------
# Graph JSON


def graph_to_dict(graph: SceneGraph) -> dict:
    return {
        "nodes": [{"id": n.id, "category": n.category} for n in graph.nodes],
        "edges": [
            {"from": e.source, "to": e.target, "relation": e.label.value} for e in graph.edges
        ],
    }


def save_graph(graph: SceneGraph) -> bytes:
    return json.dumps(graph_to_dict(graph), indent=1).encode("utf-8")


def graph_from_dict(doc: dict) -> SceneGraph:
    if not isinstance(doc, dict):
        raise SchemaError("graph document must be a JSON object")
    nodes = []
    for i, node_doc in enumerate(_field(doc, "nodes", "graph")):
        ctx = f"graph.nodes[{i}]"
        nodes.append(GraphNode(_field(node_doc, "id", ctx), _field(node_doc, "category", ctx)))
    edges = []
    for i, edge_doc in enumerate(_field(doc, "edges", "graph")):
        ctx = f"graph.edges[{i}]"
        relation = _field(edge_doc, "relation", ctx)
        try:
            label = RelationLabel(relation)
        except ValueError as e:
            raise SchemaError(f"{ctx}.relation: unknown relation {relation!r}") from e
        edges.append(GraphEdge(_field(edge_doc, "from", ctx), _field(edge_doc, "to", ctx), label))
    try:
        return SceneGraph(tuple(nodes), tuple(edges))
    except ValueError as e:
        raise SchemaError(f"graph: {e}") from e


def load_graph(source: str | Path | bytes) -> SceneGraph:
    return graph_from_dict(_load_json(source, "graph"))


# ---------------------------------------------------------------------------
# Depth capture (raster + sidecar)


@dataclass(frozen=True)
class CaptureMeta:
    """Sidecar contents for one depth capture."""

    intrinsics: CameraIntrinsics
    camera_pose: RigidTransform
    categories: dict[int, str]


def load_capture_meta(path: str | Path) -> CaptureMeta:
    doc = _load_json(path, "sidecar")
    ctx = "sidecar"
    try:
        intr = CameraIntrinsics(
            fx=float(_field(doc, "fx", ctx)),
            fy=float(_field(doc, "fy", ctx)),
            cx=float(_field(doc, "cx", ctx)),
            cy=float(_field(doc, "cy", ctx)),
            width=int(_field(doc, "width", ctx)),
            height=int(_field(doc, "height", ctx)),
        )
    except ValueError as e:
        raise SchemaError(f"{ctx}: {e}") from e
    rotation = _field(doc, "rotation", ctx)
    translation = _field(doc, "translation", ctx)
    if not (isinstance(rotation, list) and len(rotation) == 9):
        raise SchemaError(f"{ctx}.rotation must hold 9 row-major floats")
    if not (isinstance(translation, list) and len(translation) == 3):
        raise SchemaError(f"{ctx}.translation must hold 3 floats")
    try:
        pose = RigidTransform(
            np.array(rotation, dtype=float).reshape(3, 3), np.array(translation, dtype=float)
        )
    except ValueError as e:
        raise SchemaError(f"{ctx}: {e}") from e
    categories = {}
    for key, value in doc.get("categories", {}).items():
        categories[int(key)] = str(value)
    return CaptureMeta(intr, pose, categories)


def load_depth_raster(path: str | Path, intrinsics: CameraIntrinsics) -> np.ndarray:
    raw = np.fromfile(str(path), dtype="<f4")
    expected = intrinsics.width * intrinsics.height
    if raw.size != expected:
        raise ShapeMismatch(f"depth raster holds {raw.size} floats, expected {expected}")
    return raw.reshape(intrinsics.height, intrinsics.width).astype(float)


def load_mask_raster(path: str | Path, intrinsics: CameraIntrinsics) -> np.ndarray:
    raw = np.fromfile(str(path), dtype="<i4")
    expected = intrinsics.width * intrinsics.height
    if raw.size != expected:
        raise ShapeMismatch(f"mask raster holds {raw.size} ints, expected {expected}")
    return raw.reshape(intrinsics.height, intrinsics.width)


def ingest_capture(
    depth_path: str | Path,
    mask_path: str | Path,
    sidecar_path: str | Path,
    table: Box3 = DEFAULT_TABLE,
) -> SceneState:
    """Build a scene state from a raw depth capture.

    Each positive instance id in the mask raster becomes one object;
    its category comes from the sidecar mapping (unlisted ids get
    "unknown", which downstream vocabulary rules classify as obstacles).
    """
    meta = load_capture_meta(sidecar_path)
    depth = load_depth_raster(depth_path, meta.intrinsics)
    labels = load_mask_raster(mask_path, meta.intrinsics)
    instance_ids = sorted(int(v) for v in np.unique(labels) if v > 0)
    if not instance_ids:
        raise EmptyMask("mask raster contains no positive instance ids")
    objects = []
    for inst in instance_ids:
        cloud = back_project(depth, labels == inst, meta.intrinsics, meta.camera_pose)
        category = meta.categories.get(inst, "unknown")
        objects.append(make_object(inst, category, cloud))
    return SceneState(tuple(objects), table)
