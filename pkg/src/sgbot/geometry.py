"""Rigid-body geometry primitives: point clouds, transforms, yawed boxes.

Conventions used throughout the toolkit: table frame has z up with the
table surface at z = 0, +x to the viewer's right, +y toward the viewer
("front" means larger y). Angles wrap to [-pi, pi). All lengths are meters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCloud

ORTHO_TOL = 1e-9
BOX_INFLATE = 1e-6


def wrap_angle(theta: float) -> float:
    """Wrap an angle into [-pi, pi)."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    if wrapped >= math.pi:
        wrapped -= 2.0 * math.pi
    if wrapped < -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def vec3(x: float, y: float, z: float) -> np.ndarray:
    """Build a finite 3-vector (float64)."""
    v = np.array([x, y, z], dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"vector components must be finite, got {v}")
    return v


def rot_x(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def is_rotation(matrix: np.ndarray, tol: float = ORTHO_TOL) -> bool:
    """True when `matrix` is orthonormal with determinant +1 within `tol`."""
    m = np.asarray(matrix, dtype=float)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        return False
    if np.max(np.abs(m.T @ m - np.eye(3))) > tol:
        return False
    return abs(np.linalg.det(m) - 1.0) <= tol


def project_to_rotation(matrix: np.ndarray) -> np.ndarray:
    """Nearest proper rotation (Frobenius) via SVD with determinant fix."""
    u, _, vt = np.linalg.svd(np.asarray(matrix, dtype=float))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def geodesic_angle(rotation: np.ndarray) -> float:
    """Rotation angle of a rotation matrix: arccos((trace - 1) / 2)."""
    t = float(np.trace(np.asarray(rotation, dtype=float)))
    return math.acos(min(1.0, max(-1.0, (t - 1.0) / 2.0)))


@dataclass(frozen=True)
class PointCloud:
    """An ordered set of 3D points with a frame tag.

    Points are stored as an (N, 3) float64 array; the array is set
    read-only so instances behave as immutable values.
    """

    points: np.ndarray
    frame: str = "table"

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=float))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be (N, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        if self.frame not in ("camera", "table"):
            raise ValueError(f"unknown frame tag {self.frame!r}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)

    def translated(self, offset: np.ndarray) -> "PointCloud":
        return PointCloud(self.points + np.asarray(offset, dtype=float), self.frame)


@dataclass(frozen=True)
class RigidTransform:
    """Proper rigid motion T = [R|t]: p -> R p + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.ascontiguousarray(np.asarray(self.rotation, dtype=float))
        t = np.ascontiguousarray(np.asarray(self.translation, dtype=float)).reshape(3)
        if not is_rotation(r):
            raise ValueError("rotation must be orthonormal with det +1 (within 1e-9)")
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply_points(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def invert(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    @property
    def angle(self) -> float:
        return geodesic_angle(self.rotation)


def apply_transform(transform: RigidTransform, cloud: PointCloud) -> PointCloud:
    """Apply a rigid transform to every point, preserving order and frame."""
    if len(cloud) == 0:
        raise ValueError("cloud must be non-empty")
    return PointCloud(transform.apply_points(cloud.points), cloud.frame)


def compose(second: RigidTransform, first: RigidTransform) -> RigidTransform:
    """Transform equal to applying `first` then `second`.

    The rotation product is re-orthonormalized if accumulated drift
    exceeds 1e-9.
    """
    r = second.rotation @ first.rotation
    t = second.rotation @ first.translation + second.translation
    if not is_rotation(r):
        r = project_to_rotation(r)
    return RigidTransform(r, t)


@dataclass(frozen=True)
class Box3:
    """Oriented box: center, strictly positive half-extents, yaw about z."""

    center: np.ndarray
    half_extents: np.ndarray
    yaw: float = 0.0

    def __post_init__(self):
        c = np.ascontiguousarray(np.asarray(self.center, dtype=float)).reshape(3)
        h = np.ascontiguousarray(np.asarray(self.half_extents, dtype=float)).reshape(3)
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(h))):
            raise ValueError("box parameters must be finite")
        if np.any(h <= 0.0):
            raise ValueError(f"half-extents must be strictly positive, got {h}")
        c.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "half_extents", h)
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @property
    def bottom(self) -> float:
        return float(self.center[2] - self.half_extents[2])

    @property
    def top(self) -> float:
        return float(self.center[2] + self.half_extents[2])

    @property
    def xy_half_diagonal(self) -> float:
        return float(math.hypot(self.half_extents[0], self.half_extents[1]))

    def footprint_half_widths(self) -> np.ndarray:
        """Half-widths of the axis-aligned hull of the yawed xy footprint."""
        c, s = abs(math.cos(self.yaw)), abs(math.sin(self.yaw))
        hx, hy = self.half_extents[0], self.half_extents[1]
        return np.array([hx * c + hy * s, hx * s + hy * c])

    def aabb_hull(self) -> "Box3":
        """Axis-aligned hull of the yawed box (same z slab)."""
        fw = self.footprint_half_widths()
        return Box3(self.center, np.array([fw[0], fw[1], self.half_extents[2]]), 0.0)

    def corners(self) -> np.ndarray:
        """The eight corner points, shape (8, 3)."""
        signs = np.array(
            [[sx, sy, sz] for sz in (-1, 1) for sy in (-1, 1) for sx in (-1, 1)],
            dtype=float,
        )
        local = signs * self.half_extents
        return local @ rot_z(self.yaw).T + self.center

    def footprint_polygon_xy(self) -> np.ndarray:
        """The four xy footprint corners (counter-clockwise), shape (4, 2)."""
        hx, hy = self.half_extents[0], self.half_extents[1]
        local = np.array([[hx, hy], [-hx, hy], [-hx, -hy], [hx, -hy]])
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + self.center[:2]

    def to_local(self, points: np.ndarray) -> np.ndarray:
        """Map world points into the box frame (yaw removed, center origin)."""
        return (np.asarray(points, dtype=float) - self.center) @ rot_z(self.yaw)

    def contains_points(self, points: np.ndarray, inflate: float = BOX_INFLATE) -> bool:
        local = self.to_local(points)
        return bool(np.all(np.abs(local) <= self.half_extents + inflate))

    def volume(self) -> float:
        return float(8.0 * np.prod(self.half_extents))


def principal_yaw_xy(points: np.ndarray) -> float:
    """Yaw of the dominant xy covariance eigenvector, mapped to [-pi/2, pi/2).

    Raises DegenerateCloud when the xy spread has rank < 2.
    """
    xy = np.asarray(points, dtype=float)[:, :2]
    centered = xy - xy.mean(axis=0)
    cov = centered.T @ centered / max(len(xy), 1)
    evals, evecs = np.linalg.eigh(cov)
    # eigh returns ascending eigenvalues; rank < 2 iff the smaller one vanishes
    if evals[0] <= 1e-16 * max(evals[1], 1e-30) or evals[1] <= 0.0:
        raise DegenerateCloud("xy spread has rank < 2")
    if evals[1] - evals[0] <= 1e-12 * evals[1]:
        return 0.0  # isotropic spread: no meaningful principal direction
    major = evecs[:, 1]
    yaw = math.atan2(major[1], major[0])
    if yaw >= math.pi / 2.0:
        yaw -= math.pi
    elif yaw < -math.pi / 2.0:
        yaw += math.pi
    return yaw


def box_from_cloud(cloud: PointCloud, yaw_mode: str = "axis_aligned") -> Box3:
    """Tight bounding box of a cloud.

    `axis_aligned` keeps yaw 0; `principal_axis` aligns yaw with the
    dominant xy direction of the points. Every input point lies inside the
    returned box inflated by 1e-6 m.
    """
    if yaw_mode not in ("axis_aligned", "principal_axis"):
        raise ValueError(f"unknown yaw_mode {yaw_mode!r}")
    pts = cloud.points
    if len(pts) < 3:
        raise DegenerateCloud(f"need at least 3 points, got {len(pts)}")
    yaw = 0.0
    if yaw_mode == "principal_axis":
        yaw = principal_yaw_xy(pts)
    else:
        principal_yaw_xy(pts)  # rank check only
    local = pts @ rot_z(yaw)
    lo, hi = local.min(axis=0), local.max(axis=0)
    center_local = (lo + hi) / 2.0
    half = np.maximum((hi - lo) / 2.0, BOX_INFLATE)
    center = rot_z(yaw) @ center_local
    return Box3(center, half, yaw)
