import math

import numpy as np
import pytest

from sgbot import PointCloud, SceneState, make_object


def blob_cloud(seed: int, count: int = 220, scales=(0.2, 0.12, 0.06)) -> PointCloud:
    """Seeded anisotropic blob with an off-center lump (no near-symmetry)."""
    rng = np.random.default_rng(seed)
    base = rng.uniform(-0.5, 0.5, (count - 40, 3)) * np.asarray(scales)
    lump = rng.normal(0.0, 0.015, (40, 3)) + np.array([0.08, 0.05, 0.02])
    return PointCloud(np.vstack([base, lump]))


def sparse_cloud(seed: int) -> PointCloud:
    """Well-separated points: NN correspondences across small shifts stay exact."""
    rng = np.random.default_rng(seed)
    grid = np.mgrid[0:4, 0:3, 0:3].reshape(3, -1).T * 0.5
    return PointCloud(grid + rng.normal(0.0, 0.02, grid.shape))


def resting_block(seed: int, center_xy=(0.0, 0.0), size=(0.1, 0.05, 0.03), count: int = 220) -> PointCloud:
    """Block-shaped cloud resting on the table at the given xy center."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-0.5, 0.5, (count, 3)) * np.asarray(size)
    pts[:, 2] -= pts[:, 2].min()
    return PointCloud(pts + np.array([center_xy[0], center_xy[1], 0.0]))


def unit_cube_corners(offset=(0.0, 0.0, 0.0)) -> PointCloud:
    corners = np.array(
        [[sx, sy, sz] for sz in (-0.5, 0.5) for sy in (-0.5, 0.5) for sx in (-0.5, 0.5)]
    )
    return PointCloud(corners + np.asarray(offset))


@pytest.fixture
def table_setting_scene() -> SceneState:
    """plate + fork + knife resting at distinct spots."""
    plate = make_object(0, "plate", resting_block(1, (0.0, 0.1), (0.3, 0.3, 0.02)))
    fork = make_object(1, "fork", resting_block(2, (-0.45, -0.2), (0.19, 0.025, 0.012)))
    knife = make_object(2, "knife", resting_block(3, (0.45, -0.2), (0.21, 0.02, 0.01)))
    return SceneState((plate, fork, knife))
