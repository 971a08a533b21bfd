"""Two-stage parametric body registration.

Stage I fits pose, shape, and translation to a static scan with a keypoint
energy, a bidirectional surface (Chamfer) energy, and a full-body joint
angle prior. Stage II fits per-frame pose and translation to a keypoint
sequence with the shape frozen to the stage-I estimate.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import bodymodel as bm
from .errors import EmptyVertexSet, NoTargets
from .optim import minimize_monotone, safe_unit

# above this pair count the nearest-neighbor search switches to a k-d tree
_BRUTE_FORCE_LIMIT = 1_000_000


@dataclass
class RegistrationConfig:
    """Energy weights and optimizer settings."""

    w_keypoint: float = 1.0
    w_surface: float = 1.0
    w_angle: float = 0.1
    max_iterations: int = 500
    tolerance: float = 1e-8
    init_policy: str = "previous"  # or "rest": stage II per-frame initialization

    def __post_init__(self):
        if min(self.w_keypoint, self.w_surface, self.w_angle) < 0:
            raise ValueError("energy weights must be non-negative")
        if self.max_iterations < 1:
            raise ValueError("iteration cap must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.init_policy not in ("previous", "rest"):
            raise ValueError("init_policy must be 'previous' or 'rest'")


@dataclass
class RegistrationResult:
    """Per-frame parameters with final energies and convergence flags."""

    params: list
    energies: list = field(default_factory=list)
    converged: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# energies

def keypoint_energy(model: bm.BodyModel, params: bm.BodyParams, targets: np.ndarray) -> float:
    """Mean distance between regressed joints and the present targets."""
    targets = np.asarray(targets, dtype=np.float64)
    present = np.isfinite(targets).all(axis=1)
    if not present.any():
        raise NoTargets("no finite targets")
    _, joints = bm.forward(model, params)
    return float(np.linalg.norm(joints[present] - targets[present], axis=1).mean())


def _nearest(queries: np.ndarray, refs: np.ndarray):
    """Nearest-neighbor distances and indices from queries into refs."""
    if len(queries) * len(refs) <= _BRUTE_FORCE_LIMIT:
        d2 = ((queries[:, None, :] - refs[None, :, :]) ** 2).sum(axis=2)
        idx = d2.argmin(axis=1)
        return np.sqrt(d2[np.arange(len(queries)), idx]), idx
    dist, idx = cKDTree(refs).query(queries)
    return dist, idx


def chamfer_energy(verts_h: np.ndarray, verts_s: np.ndarray) -> float:
    """Bidirectional Chamfer distance: sum of the two mean nearest-neighbor
    distances between the vertex sets."""
    verts_h = np.asarray(verts_h, dtype=np.float64).reshape(-1, 3)
    verts_s = np.asarray(verts_s, dtype=np.float64).reshape(-1, 3)
    if len(verts_h) == 0 or len(verts_s) == 0:
        raise EmptyVertexSet("chamfer energy needs non-empty vertex sets")
    d_hs, _ = _nearest(verts_h, verts_s)
    d_sh, _ = _nearest(verts_s, verts_h)
    return float(d_hs.mean() + d_sh.mean())


def unidirectional_chamfer(verts_from: np.ndarray, verts_to: np.ndarray) -> float:
    """Mean nearest-neighbor distance from one vertex set into another."""
    verts_from = np.asarray(verts_from, dtype=np.float64).reshape(-1, 3)
    verts_to = np.asarray(verts_to, dtype=np.float64).reshape(-1, 3)
    if len(verts_from) == 0 or len(verts_to) == 0:
        raise EmptyVertexSet("chamfer energy needs non-empty vertex sets")
    d, _ = _nearest(verts_from, verts_to)
    return float(d.mean())


def angle_prior(
    theta: np.ndarray, convention: bm.EulerConvention, limits: bm.JointLimits
) -> float:
    """Exponential penalty on Euler angles outside their limits.

    Zero when all 23 non-root joints sit inside their ranges; a violated
    angle contributes (exp(violation) - 1) / 69.
    """
    e, _ = angle_prior_grad(theta, convention, limits)
    return e


def angle_prior_grad(theta, convention, limits):
    """Angle prior value and its gradient w.r.t. the 72 pose parameters."""
    theta = np.asarray(theta, dtype=np.float64).reshape(-1, 3)
    nj = theta.shape[0]
    total = 0.0
    grad = np.zeros_like(theta)
    n_terms = (nj - 1) * 3
    for j in range(1, nj):
        frame = convention.frames[j]
        r, dr = bm.rotation_jacobian(theta[j])
        rl = frame.T @ r @ frame
        dec = bm.matrix_to_euler(rl)
        # d(angle)/d(local rotation entry), standard branch
        deuler = np.zeros((3, 3, 3))
        cb2 = max(1.0 - rl[0, 2] ** 2, 1e-24)
        deuler[1, 0, 2] = 1.0 / np.sqrt(cb2)
        den_a = rl[1, 2] ** 2 + rl[2, 2] ** 2
        if den_a > 1e-24:
            deuler[0, 1, 2] = -rl[2, 2] / den_a
            deuler[0, 2, 2] = rl[1, 2] / den_a
        den_c = rl[0, 1] ** 2 + rl[0, 0] ** 2
        if den_c > 1e-24:
            deuler[2, 0, 1] = -rl[0, 0] / den_c
            deuler[2, 0, 0] = rl[0, 1] / den_c
        for i, ang in enumerate(dec.angles):
            over = max(ang - limits.upper[j, i], 0.0)
            under = max(limits.lower[j, i] - ang, 0.0)
            term = np.exp(over + under)
            total += term
            slope = term * ((1.0 if over > 0 else 0.0) - (1.0 if under > 0 else 0.0))
            if slope != 0.0:
                dang_dr = frame @ deuler[i] @ frame.T
                grad[j] += slope * np.einsum("mn,kmn->k", dang_dr, dr)
    return total / n_terms - 1.0, grad.reshape(-1) / n_terms


def keypoint_energy_grad(model, params, targets, wrt=("theta", "transl")):
    """Keypoint energy with its analytic gradient over the requested blocks."""
    targets = np.asarray(targets, dtype=np.float64)
    present = np.isfinite(targets).all(axis=1)
    if not present.any():
        raise NoTargets("no finite targets")
    joints, djoints, _ = bm.joints_with_jacobian(model, params, wrt)
    resid = joints[present] - targets[present]
    norms, units = safe_unit(resid)
    e = float(norms.mean())
    grad = np.einsum("jc,jcn->n", units, djoints[present]) / present.sum()
    return e, grad


def surface_energy_grad(model, params, scan_verts, wrt=("theta", "beta", "transl")):
    """Chamfer energy between posed model and scan, with analytic gradient.

    Nearest neighbors are held fixed while differentiating, which is exact
    away from assignment ties.
    """
    scan_verts = np.asarray(scan_verts, dtype=np.float64).reshape(-1, 3)
    if len(scan_verts) == 0:
        raise EmptyVertexSet("scan has no vertices")
    verts, _, dverts, _, _ = bm.forward_jacobian(model, params, wrt)
    d_sm, idx_sm = _nearest(scan_verts, verts)
    d_ms, idx_ms = _nearest(verts, scan_verts)
    e = float(d_sm.mean() + d_ms.mean())
    pull = np.zeros_like(verts)
    _, units = safe_unit(verts[idx_sm] - scan_verts)
    np.add.at(pull, idx_sm, units / len(scan_verts))
    _, units = safe_unit(verts - scan_verts[idx_ms])
    pull += units / len(verts)
    grad = np.einsum("vc,vcn->n", pull, dverts)
    return e, grad


# ---------------------------------------------------------------------------
# registration stages

def _pack(params: bm.BodyParams, blocks) -> np.ndarray:
    parts = []
    if "theta" in blocks:
        parts.append(params.theta)
    if "beta" in blocks:
        parts.append(params.beta)
    if "transl" in blocks:
        parts.append(params.translation)
    return np.concatenate(parts)


def _unpack(x, blocks, defaults: bm.BodyParams) -> bm.BodyParams:
    return bm.raw_params(
        x[blocks["theta"]] if "theta" in blocks else defaults.theta,
        x[blocks["beta"]] if "beta" in blocks else defaults.beta,
        x[blocks["transl"]] if "transl" in blocks else defaults.translation,
    )


def _stage_objective(model, scan, targets, convention, limits, config, wrt, defaults):
    """fun_grad(x) for the weighted stage energy over the given blocks."""
    blocks = bm.param_blocks(wrt)

    def fun_grad(x):
        p = _unpack(x, blocks, defaults)
        f = 0.0
        g = np.zeros_like(x)
        if targets is not None and config.w_keypoint > 0:
            e, ge = keypoint_energy_grad(model, p, targets, wrt)
            f += config.w_keypoint * e
            g += config.w_keypoint * ge
        if scan is not None and config.w_surface > 0:
            e, ge = surface_energy_grad(model, p, scan, wrt)
            f += config.w_surface * e
            g += config.w_surface * ge
        if config.w_angle > 0 and "theta" in blocks:
            e, gt = angle_prior_grad(p.theta, convention, limits)
            f += config.w_angle * e
            g[blocks["theta"]] += config.w_angle * gt
        return f, g

    return fun_grad, blocks


def register_shape(
    scan_verts: np.ndarray,
    keypoints3d: np.ndarray,
    model: bm.BodyModel,
    config: RegistrationConfig | None = None,
    convention: bm.EulerConvention | None = None,
    limits: bm.JointLimits | None = None,
) -> bm.BodyParams:
    """Stage I: fit (theta, beta, translation) to a static scan.

    Runs a blocked schedule -- translation, then pose from the root out,
    then everything including shape -- each phase a monotone descent, so the
    stage objective never increases across accepted steps.
    """
    scan_verts = np.asarray(scan_verts, dtype=np.float64).reshape(-1, 3)
    if len(scan_verts) == 0:
        raise EmptyVertexSet("scan has no vertices")
    config = config or RegistrationConfig()
    convention = convention or bm.EulerConvention.identity(model.num_joints)
    limits = limits or bm.JointLimits.permissive(model.num_joints)
    targets = np.asarray(keypoints3d, dtype=np.float64)
    present = np.isfinite(targets).all(axis=1)
    if not present.any():
        raise NoTargets("stage I needs at least one keypoint target")

    rest_joints = model.rest_joints(np.zeros(bm.NUM_SHAPE))
    t0 = targets[present].mean(axis=0) - rest_joints[present].mean(axis=0)
    current = bm.BodyParams(np.zeros(model.num_joints * 3), np.zeros(bm.NUM_SHAPE), t0)

    phases = [
        (("transl",), max(10, config.max_iterations // 10)),
        (("theta", "transl"), config.max_iterations),
        (("theta", "beta", "transl"), config.max_iterations),
    ]
    for wrt, iters in phases:
        fun_grad, blocks = _stage_objective(
            model, scan_verts, targets, convention, limits, config, wrt, current
        )
        x, _, _, _ = minimize_monotone(
            fun_grad, _pack(current, blocks),
            max_iterations=iters, tolerance=config.tolerance,
        )
        current = _unpack(x, blocks, current)
    return bm.BodyParams(current.theta, current.beta, current.translation)


def register_pose(
    seq: np.ndarray,
    beta_fixed: np.ndarray,
    model: bm.BodyModel,
    config: RegistrationConfig | None = None,
    convention: bm.EulerConvention | None = None,
    limits: bm.JointLimits | None = None,
) -> RegistrationResult:
    """Stage II: per-frame (theta, translation) with the shape frozen.

    seq is (T, J, 3) keypoint targets mapped to model joints; NaN rows mark
    absent joints. Frame t starts from frame t-1 (frame 0 from rest) unless
    the config says otherwise. Every output frame carries beta_fixed.
    """
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 3 or seq.shape[1:] != (model.num_joints, 3):
        raise ValueError(f"seq must be (T, {model.num_joints}, 3)")
    config = config or RegistrationConfig()
    convention = convention or bm.EulerConvention.identity(model.num_joints)
    limits = limits or bm.JointLimits.permissive(model.num_joints)
    beta = np.array(beta_fixed, dtype=np.float64).reshape(bm.NUM_SHAPE)

    wrt = ("theta", "transl")
    result = RegistrationResult(params=[])
    rest_joints = model.rest_joints(beta)
    prev = None
    for t in range(seq.shape[0]):
        targets = seq[t]
        present = np.isfinite(targets).all(axis=1)
        if not present.any():
            raise NoTargets(f"frame {t} has no finite targets")
        if prev is None or config.init_policy == "rest":
            t0 = targets[present].mean(axis=0) - rest_joints[present].mean(axis=0)
            init = bm.BodyParams(np.zeros(model.num_joints * 3), beta, t0)
        else:
            init = prev
        fun_grad, blocks = _stage_objective(
            model, None, targets, convention, limits, config, wrt, init
        )
        x, f, converged, _ = minimize_monotone(
            fun_grad, _pack(init, blocks),
            max_iterations=config.max_iterations, tolerance=config.tolerance,
        )
        fitted = bm.BodyParams(
            theta=x[blocks["theta"]], beta=beta, translation=x[blocks["transl"]]
        )
        result.params.append(fitted)
        result.energies.append(f)
        result.converged.append(converged)
        prev = fitted
    return result


# ---------------------------------------------------------------------------
# params file

def save_params(path, betas: np.ndarray, frames: list) -> None:
    """Write `{"betas": [10 floats], "frames": [{"theta", "transl"}]}`."""
    doc = {
        "betas": [float(b) for b in np.asarray(betas).reshape(-1)],
        "frames": [
            {
                "theta": [float(v) for v in p.theta],
                "transl": [float(v) for v in p.translation],
            }
            for p in frames
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_params(path) -> tuple[np.ndarray, list]:
    with open(path) as f:
        doc = json.load(f)
    beta = np.array(doc["betas"], dtype=np.float64)
    frames = [
        bm.BodyParams(theta=np.array(fr["theta"]), beta=beta, translation=np.array(fr["transl"]))
        for fr in doc["frames"]
    ]
    return beta, frames
