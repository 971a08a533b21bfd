"""Geometry-based extrinsic refinement.

Pairwise point-to-point ICP over overlapping views, then a gauge-fixed
pose-graph solve that fuses the pairwise relative transforms into globally
consistent extrinsics. Camera 0 (lowest id) is the gauge and is returned
bit-for-bit unchanged.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .camgeom import RigidTransform
from .cloudproc import PointCloud
from .errors import DisconnectedGraph, InsufficientCorrespondences


@dataclass
class IcpConfig:
    max_iterations: int = 50
    max_correspondence_distance: float = 0.25
    convergence_threshold: float = 1e-12  # on RMSE change between iterations
    min_correspondences: int = 500

    def __post_init__(self):
        if (
            self.max_iterations <= 0
            or self.max_correspondence_distance <= 0
            or self.convergence_threshold <= 0
            or self.min_correspondences <= 0
        ):
            raise ValueError("all ICP settings must be positive")


def _best_fit_transform(src: np.ndarray, dst: np.ndarray) -> RigidTransform:
    """Closed-form SVD alignment mapping src onto dst (Kabsch)."""
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    h = (src - mu_s).T @ (dst - mu_d)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(rot, mu_d - rot @ mu_s)


def icp_pairwise(
    source: PointCloud,
    target: PointCloud,
    init: RigidTransform,
    config: IcpConfig | None = None,
) -> tuple[RigidTransform, float]:
    """Refine a transform mapping source points onto the target cloud.

    Nearest-neighbor correspondences under the distance cap alternate with
    closed-form SVD alignment. Iterations that would raise the RMSE are
    rejected, so the reported RMSE never increases across iterations.
    """
    config = config or IcpConfig()
    if len(source) == 0 or len(target) == 0:
        raise InsufficientCorrespondences("empty cloud")
    tree = cKDTree(target.points)
    transform = init

    def correspond(t: RigidTransform):
        moved = t.apply(source.points)
        dist, idx = tree.query(moved)
        keep = dist <= config.max_correspondence_distance
        return moved, dist, idx, keep

    moved, dist, idx, keep = correspond(transform)
    if keep.sum() < config.min_correspondences:
        raise InsufficientCorrespondences(
            f"{int(keep.sum())} matches < minimum {config.min_correspondences}"
        )
    rmse = float(np.sqrt((dist[keep] ** 2).mean()))
    for _ in range(config.max_iterations):
        step = _best_fit_transform(moved[keep], target.points[idx[keep]])
        candidate = step @ transform
        moved_c, dist_c, idx_c, keep_c = correspond(candidate)
        if keep_c.sum() < config.min_correspondences:
            break
        rmse_c = float(np.sqrt((dist_c[keep_c] ** 2).mean()))
        if rmse_c > rmse + 1e-15:
            break
        improved = rmse - rmse_c
        transform, moved, dist, idx, keep, rmse = (
            candidate, moved_c, dist_c, idx_c, keep_c, rmse_c,
        )
        if improved < config.convergence_threshold:
            break
    return transform, rmse


def _pairwise_rmse(world_a, world_b, config) -> tuple[float, int]:
    """Capped nearest-neighbor RMSE between two world-frame clouds."""
    dist, _ = cKDTree(world_b).query(world_a)
    keep = dist <= config.max_correspondence_distance
    if not keep.any():
        return np.inf, 0
    return float(np.sqrt((dist[keep] ** 2).mean())), int(keep.sum())


def multiway_refine(
    clouds: dict,
    init_extrinsics: dict,
    config: IcpConfig | None = None,
) -> dict:
    """Refine all camera extrinsics against each other.

    clouds maps camera id -> PointCloud in that camera's frame;
    init_extrinsics maps camera id -> world->camera RigidTransform. Runs
    pairwise ICP over every overlapping pair, solves a gauge-fixed pose
    graph over the relative corrections, and keeps the initialization if it
    somehow scored better. The gauge camera (lowest id) is returned as the
    identical object.
    """
    config = config or IcpConfig()
    ids = sorted(clouds)
    if len(ids) < 2:
        raise ValueError("need at least two cameras")
    if set(init_extrinsics) < set(ids):
        raise ValueError("every cloud needs an initial extrinsic")
    world = {i: init_extrinsics[i].inverse().apply(clouds[i].points) for i in ids}

    # overlap graph + pairwise ICP measurements of the world-frame mismatch
    measurements = {}
    for a_idx in range(len(ids)):
        for b_idx in range(a_idx + 1, len(ids)):
            a, b = ids[a_idx], ids[b_idx]
            _, n_corr = _pairwise_rmse(world[a], world[b], config)
            if n_corr < config.min_correspondences:
                continue
            try:
                t_ab, _ = icp_pairwise(
                    PointCloud(world[a]), PointCloud(world[b]),
                    RigidTransform.identity(), config,
                )
            except InsufficientCorrespondences:
                continue
            measurements[(a, b)] = t_ab

    _check_connected(ids, measurements)

    corrections = _solve_pose_graph(ids, measurements)
    # D_i corrects camera i's world frame (x_world_i = D_i x_true), so the
    # consistent extrinsics are E_i D_i; the gauge has D = I by construction.
    refined = {}
    for i in ids:
        if i == ids[0]:
            refined[i] = init_extrinsics[i]
        else:
            refined[i] = init_extrinsics[i] @ corrections[i]

    # keep whichever extrinsics score the lower total pairwise RMSE
    if _total_rmse(clouds, refined, measurements, config) > _total_rmse(
        clouds, init_extrinsics, measurements, config
    ):
        return {i: init_extrinsics[i] for i in ids}
    return refined


def _check_connected(ids, measurements) -> None:
    adj = {i: set() for i in ids}
    for a, b in measurements:
        adj[a].add(b)
        adj[b].add(a)
    seen = {ids[0]}
    stack = [ids[0]]
    while stack:
        for nxt in adj[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    if len(seen) != len(ids):
        missing = sorted(set(ids) - seen)
        raise DisconnectedGraph(f"cameras {missing} share no overlap with the gauge")


def _total_rmse(clouds, extrinsics, measurements, config) -> float:
    total = 0.0
    for a, b in measurements:
        wa = extrinsics[a].inverse().apply(clouds[a].points)
        wb = extrinsics[b].inverse().apply(clouds[b].points)
        rmse, _ = _pairwise_rmse(wa, wb, config)
        total += rmse
    return total


# ---------------------------------------------------------------------------
# pose graph

def _rotvec(rot: np.ndarray) -> np.ndarray:
    """Axis-angle of a rotation matrix (log map)."""
    cos = np.clip((np.trace(rot) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos)
    if angle < 1e-12:
        return np.zeros(3)
    axis = np.array(
        [rot[2, 1] - rot[1, 2], rot[0, 2] - rot[2, 0], rot[1, 0] - rot[0, 1]]
    )
    n = np.linalg.norm(axis)
    if n < 1e-12:
        # angle near pi: fall back to the diagonal form
        axis = np.sqrt(np.maximum(np.diag(rot) + 1.0, 0.0) / 2.0)
        axis[0] = abs(axis[0])
        return axis / np.linalg.norm(axis) * angle
    return axis / n * angle


def _rotmat(rv: np.ndarray) -> np.ndarray:
    angle = np.linalg.norm(rv)
    if angle < 1e-12:
        return np.eye(3)
    k = rv / angle
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * kx + (1 - np.cos(angle)) * (kx @ kx)


def _solve_pose_graph(ids, measurements) -> dict:
    """Least-squares world-frame corrections D_i (gauge D_0 = I).

    Each ICP measurement constrains D_b carrying cloud b's world points onto
    cloud a's via T_ab: residual log(T_ab^-1 D_b D_a^-1) over rotation and
    translation. Solved by damped Gauss-Newton on 6 DoF per non-gauge camera
    with numeric Jacobians; the residual never increases across updates.
    """
    free = ids[1:]
    x = np.zeros(6 * len(free))

    def unpack(xv):
        out = {ids[0]: RigidTransform.identity()}
        for i, cam in enumerate(free):
            rv = xv[6 * i : 6 * i + 3]
            t = xv[6 * i + 3 : 6 * i + 6]
            out[cam] = RigidTransform(_rotmat(rv), t)
        return out

    def residuals(xv):
        d = unpack(xv)
        res = []
        for (a, b), t_ab in measurements.items():
            # ICP found T_ab with T_ab x_a ~ x_b and x_i = D_i x_true,
            # so T_ab D_a = D_b up to the residual log(T_ab^-1 D_b D_a^-1)
            err = t_ab.inverse() @ d[b] @ d[a].inverse()
            res.append(_rotvec(err.rotation))
            res.append(err.translation)
        return np.concatenate(res) if res else np.zeros(0)

    r = residuals(x)
    cost = float(r @ r)
    lam = 1e-6
    for _ in range(25):
        if cost < 1e-24:
            break
        jac = np.empty((len(r), len(x)))
        h = 1e-7
        for j in range(len(x)):
            xp = x.copy()
            xp[j] += h
            jac[:, j] = (residuals(xp) - r) / h
        a = jac.T @ jac
        g = jac.T @ r
        improved = False
        for _ in range(10):
            try:
                dx = np.linalg.solve(a + lam * np.eye(len(x)), g)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            x_new = x - dx
            r_new = residuals(x_new)
            cost_new = float(r_new @ r_new)
            if cost_new < cost:
                x, r, cost = x_new, r_new, cost_new
                lam = max(lam / 4, 1e-12)
                improved = True
                break
            lam *= 10
        if not improved:
            break
    return unpack(x)
