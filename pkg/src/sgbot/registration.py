"""Multi-start ICP registration.

Matches a source cloud onto a target cloud by refining from a
deterministic grid of candidate rotations (midpoints of n equal segments
of [-pi, pi) per Euler axis, n^3 starts in total) and keeping the start
whose mean squared nearest-neighbor residual is lowest. Alignment steps
solve the closed-form least-squares rigid fit via cross-covariance SVD
with determinant correction, so every intermediate rotation stays in
SO(3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyCloud
from .geometry import PointCloud, RigidTransform, rot_x, rot_y, rot_z


@dataclass(frozen=True)
class IcpConfig:
    n: int = 5
    max_iters: int = 50
    tol: float = 1e-6
    max_correspondence_distance: float | None = None
    trim_fraction: float = 0.9

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_correspondence_distance is not None and not (
            self.max_correspondence_distance > 0
        ):
            raise ValueError("max_correspondence_distance must be positive or None")
        if not 0.0 < self.trim_fraction <= 1.0:
            raise ValueError("trim_fraction must be in (0, 1]")


DEFAULT_ICP = IcpConfig()


@dataclass(frozen=True)
class RegistrationResult:
    """Best rigid fit of source onto target.

    `residual` is the mean squared nearest-neighbor distance over all
    source points (m^2); `candidate_index` identifies the winning start
    (-1 for a caller-supplied start). `residual_history` is populated by
    single-start refinement only.
    """

    transform: RigidTransform
    residual: float
    iterations: int
    candidate_index: int
    residual_history: tuple[float, ...] = ()

    def __post_init__(self):
        if self.residual < 0:
            raise ValueError("residual must be non-negative")


def candidate_rotations(n: int) -> list[np.ndarray]:
    """The n^3 Euler-grid candidate rotations.

    Per axis the angles are midpoints of n equal segments of [-pi, pi);
    each candidate is Rz @ Ry @ Rx, enumerated with the x angle varying
    fastest.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    angles = [-math.pi + (k + 0.5) * (2.0 * math.pi / n) for k in range(n)]
    rotations = []
    for az in angles:
        for ay in angles:
            for ax in angles:
                rotations.append(rot_z(az) @ rot_y(ay) @ rot_x(ax))
    return rotations


def _kabsch_batch(sources: np.ndarray, targets: np.ndarray, weights: np.ndarray):
    """Weighted least-squares rigid fits for a batch of correspondences.

    sources/targets: (S, K, 3); weights: (S, K) with at least 3 positive
    entries per row. Returns rotations (S, 3, 3) and translations (S, 3).
    """
    wsum = weights.sum(axis=1, keepdims=True)
    p_bar = (weights[:, :, None] * sources).sum(axis=1) / wsum
    q_bar = (weights[:, :, None] * targets).sum(axis=1) / wsum
    p_c = sources - p_bar[:, None, :]
    q_c = targets - q_bar[:, None, :]
    h = np.einsum("sk,ska,skb->sab", weights, p_c, q_c)
    u, _, vt = np.linalg.svd(h)
    d = np.ones((h.shape[0], 3))
    d[:, 2] = np.sign(np.linalg.det(u @ vt))  # reflection fix: R = V diag(1,1,±1) U^T
    rotations = np.einsum("sba,sb,scb->sac", vt, d, u)
    translations = q_bar - np.einsum("sab,sb->sa", rotations, p_bar)
    return rotations, translations


def _run_icp(
    source: np.ndarray,
    target: np.ndarray,
    tree: cKDTree,
    rotations: np.ndarray,
    translations: np.ndarray,
    cfg: IcpConfig,
    keep_history: bool,
):
    """Lockstep ICP over a batch of starts; converged starts freeze.

    Returns per-start best rotation/translation/residual, iteration
    counts, and (optionally) the residual history of each start.
    """
    s_count, n_points = rotations.shape[0], source.shape[0]
    r_cur = rotations.copy()
    t_cur = translations.copy()
    best_r = rotations.copy()
    best_t = translations.copy()
    best_res = np.full(s_count, np.inf)
    prev_res = np.full(s_count, np.nan)
    iters = np.zeros(s_count, dtype=int)
    histories: list[list[float]] = [[] for _ in range(s_count)] if keep_history else []
    active = np.ones(s_count, dtype=bool)
    keep = max(3, int(math.ceil(cfg.trim_fraction * n_points)))
    keep = min(keep, n_points)

    for step in range(cfg.max_iters + 1):
        idx_active = np.nonzero(active)[0]
        if idx_active.size == 0:
            break
        moved = source @ r_cur[idx_active].transpose(0, 2, 1) + t_cur[idx_active][:, None, :]
        # workers=-1 parallelizes the query only; results are unchanged
        dists, nn_idx = tree.query(moved.reshape(-1, 3), k=1, workers=-1)
        dists = dists.reshape(idx_active.size, n_points)
        nn_idx = nn_idx.reshape(idx_active.size, n_points)
        sq = dists**2
        res = sq.mean(axis=1)

        improved = res < best_res[idx_active]
        upd = idx_active[improved]
        best_res[upd] = res[improved]
        best_r[upd] = r_cur[upd]
        best_t[upd] = t_cur[upd]
        if keep_history:
            for row, s_idx in enumerate(idx_active):
                histories[s_idx].append(float(res[row]))

        prev = prev_res[idx_active]
        with np.errstate(invalid="ignore"):
            converged = (res <= 0.0) | (
                ~np.isnan(prev) & (np.abs(prev - res) <= cfg.tol * np.maximum(prev, 1e-30))
            )
        prev_res[idx_active] = res
        if step == cfg.max_iters:
            break
        still = ~converged
        active[idx_active[converged]] = False
        idx_live = idx_active[still]
        if idx_live.size == 0:
            continue

        live_rows = np.nonzero(still)[0]
        order = np.argsort(sq[live_rows], axis=1, kind="stable")[:, :keep]
        rows = np.arange(live_rows.size)[:, None]
        src_sub = np.broadcast_to(source, (live_rows.size, n_points, 3))[rows, order]
        tgt_sub = target[nn_idx[live_rows][rows, order]]
        weights = np.ones((live_rows.size, keep))
        if cfg.max_correspondence_distance is not None:
            weights = (
                dists[live_rows][rows, order] <= cfg.max_correspondence_distance
            ).astype(float)
            thin = weights.sum(axis=1) < 3
            if np.any(thin):
                active[idx_live[thin]] = False
                good = ~thin
                idx_live, live_rows = idx_live[good], live_rows[good]
                src_sub, tgt_sub, weights = src_sub[good], tgt_sub[good], weights[good]
                if idx_live.size == 0:
                    continue
        new_r, new_t = _kabsch_batch(src_sub, tgt_sub, weights)
        r_cur[idx_live] = new_r
        t_cur[idx_live] = new_t
        iters[idx_live] += 1

    return best_r, best_t, best_res, iters, histories


def icp_refine(
    source: PointCloud,
    target: PointCloud,
    initial_rotation: np.ndarray,
    initial_translation: np.ndarray,
    cfg: IcpConfig = DEFAULT_ICP,
) -> RegistrationResult:
    """Refine one start until the relative residual change drops below tol."""
    if len(source) == 0 or len(target) == 0:
        raise EmptyCloud("registration needs non-empty source and target")
    r0 = np.asarray(initial_rotation, dtype=float).reshape(1, 3, 3)
    t0 = np.asarray(initial_translation, dtype=float).reshape(1, 3)
    tree = cKDTree(target.points)
    best_r, best_t, best_res, iters, histories = _run_icp(
        source.points, target.points, tree, r0, t0, cfg, keep_history=True
    )
    return RegistrationResult(
        transform=RigidTransform(best_r[0], best_t[0]),
        residual=float(best_res[0]),
        iterations=int(iters[0]),
        candidate_index=-1,
        residual_history=tuple(histories[0]),
    )


def multistart_register(
    source: PointCloud, target: PointCloud, cfg: IcpConfig = DEFAULT_ICP
) -> RegistrationResult:
    """Best of n^3 ICP starts over centroid-normalized clouds.

    Both clouds are centered at their centroids, every candidate starts
    with a zero translation, and the winner (ties broken by lowest
    candidate index) is composed with the centroid shifts so it maps the
    original source onto the original target.
    """
    if len(source) == 0 or len(target) == 0:
        raise EmptyCloud("registration needs non-empty source and target")
    cs = source.centroid
    ct = target.centroid
    src = source.points - cs
    tgt = target.points - ct
    tree = cKDTree(tgt)
    rotations = np.stack(candidate_rotations(cfg.n))
    translations = np.zeros((rotations.shape[0], 3))
    best_r, best_t, best_res, iters, _ = _run_icp(
        src, tgt, tree, rotations, translations, cfg, keep_history=False
    )
    winner = int(np.argmin(best_res))  # argmin returns the first (lowest) index on ties
    rotation = best_r[winner]
    translation = best_t[winner] + ct - rotation @ cs
    return RegistrationResult(
        transform=RigidTransform(rotation, translation),
        residual=float(best_res[winner]),
        iterations=int(iters[winner]),
        candidate_index=winner,
    )


def brute_force_residual(source: PointCloud, target: PointCloud, transform: RigidTransform) -> float:
    """All-pairs evaluation of the registration objective (oracle use)."""
    moved = transform.apply_points(source.points)
    diffs = moved[:, None, :] - target.points[None, :, :]
    sq = np.einsum("stk,stk->st", diffs, diffs)
    return float(sq.min(axis=1).mean())
