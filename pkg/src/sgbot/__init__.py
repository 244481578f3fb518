"""Scene-graph-guided tabletop rearrangement toolkit.

Observe a cluttered table as per-object point clouds, build a goal scene
graph from commonsense rules or user edits, synthesize a concrete goal
scene that satisfies the graph, and compute a safe, ordered sequence of
rigid moves via multi-start ICP matching with occupancy checking. A
seeded simulator and metric suite make the whole pipeline benchmarkable
offline.
"""

from .config import AppConfig, load_config
from .errors import (
    BufferExhausted,
    DegenerateCloud,
    EmptyCloud,
    EmptyMask,
    IdMismatch,
    InvariantViolation,
    KeyMismatch,
    LayoutInfeasible,
    MissingPrior,
    NoPlaceableObjects,
    ParseError,
    PlacementFailure,
    SchemaError,
    SgbotError,
    ShapeMismatch,
    UnknownReference,
)
from .geometry import (
    Box3,
    PointCloud,
    RigidTransform,
    apply_transform,
    box_from_cloud,
    compose,
    geodesic_angle,
    rot_x,
    rot_y,
    rot_z,
    vec3,
    wrap_angle,
)
from .goalsynth import (
    GoalObject,
    GoalScene,
    LayoutReport,
    ShapePrior,
    estimate_shape_prior,
    instantiate_goal_scene,
    load_goal,
    save_goal,
    solve_layout,
    synthesize_goal,
    verify_layout,
)
from .graphbuild import (
    CategoryVocabulary,
    DEFAULT_VOCABULARY,
    GraphEdit,
    GroundingParams,
    Role,
    apply_edits,
    build_commonsense_graph,
    flag_obstacles,
    ground_relation,
)
from .ingest import (
    CameraIntrinsics,
    DEFAULT_TABLE,
    ObjectInstance,
    SceneState,
    back_project,
    ingest_capture,
    load_graph,
    load_scene,
    make_object,
    save_graph,
    save_scene,
)
from .planner import (
    Action,
    Plan,
    PlannerConfig,
    execute_plan,
    load_plan,
    occupancy_distance,
    save_plan,
    select_next_action,
)
from .registration import (
    IcpConfig,
    RegistrationResult,
    brute_force_residual,
    candidate_rotations,
    icp_refine,
    multistart_register,
)
from .scenegraph import (
    GraphEdge,
    GraphNode,
    RelationLabel,
    SceneGraph,
    empty_graph,
    inverse_relation,
)
from .simeval import (
    EvalReport,
    ObjectTemplate,
    ScenePair,
    default_object_db,
    evaluate_rearrangement,
    generate_scene_pair,
    iou3d,
    per_object_iou,
    pose_errors,
    run_benchmark,
    run_scene,
    settle,
    success_rate,
    symmetry_aware_angle,
)

__version__ = "0.1.0"
