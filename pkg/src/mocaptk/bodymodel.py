"""Parametric articulated body: shape blendshapes, forward kinematics, skinning.

The model follows the common 24-joint layout (one root plus 23 body joints).
Pose is a stack of per-joint axis-angle triplets, shape is a 10-vector of
blendshape coefficients, and a root translation places the body in the world.

A procedurally generated low-poly body ships with the package so the math
pipeline can be exercised without any external model asset. Its joint
regressor reads joint locations off small marker tetrahedra rigidly skinned
to each joint, which makes regressed joints agree with forward kinematics to
machine precision.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

NUM_JOINTS = 24
NUM_SHAPE = 10

# parent index per joint; joint 0 is the root
KINEMATIC_PARENTS = (
    -1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21
)

JOINT_NAMES = (
    "pelvis", "left_hip", "right_hip", "spine1",
    "left_knee", "right_knee", "spine2",
    "left_ankle", "right_ankle", "spine3",
    "left_foot", "right_foot", "neck",
    "left_collar", "right_collar", "head",
    "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow",
    "left_wrist", "right_wrist",
    "left_hand", "right_hand",
)


# ---------------------------------------------------------------------------
# rotations

def rotation_from_axis_angle(aa: np.ndarray) -> np.ndarray:
    """Rodrigues formula for a single axis-angle triplet."""
    aa = np.asarray(aa, dtype=np.float64)
    angle = np.linalg.norm(aa)
    if angle < 1e-12:
        k = _skew(aa)
        return np.eye(3) + k  # first-order term; exact enough below 1e-12
    axis = aa / angle
    k = _skew(axis)
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def rotation_jacobian(aa: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rotation and its derivative w.r.t. the axis-angle vector.

    Returns (R, dR) with dR[i] = dR/d aa_i. Uses the closed form
    dR/dv_i = (v_i [v]x + [v x (I - R) e_i]x) / |v|^2 R, with the small-angle
    limit [e_i]x near zero.
    """
    aa = np.asarray(aa, dtype=np.float64)
    r = rotation_from_axis_angle(aa)
    n2 = float(aa @ aa)
    dr = np.empty((3, 3, 3))
    if n2 < 1e-16:
        for i in range(3):
            e = np.zeros(3)
            e[i] = 1.0
            dr[i] = _skew(e)
        return r, dr
    vx = _skew(aa)
    imr = np.eye(3) - r
    for i in range(3):
        e = np.zeros(3)
        e[i] = 1.0
        dr[i] = ((aa[i] * vx + _skew(np.cross(aa, imr @ e))) / n2) @ r
    return r, dr


def _skew(v):
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
    )


def euler_to_matrix(angles: np.ndarray) -> np.ndarray:
    """Intrinsic X-Y-Z recomposition: R = Rx(a) Ry(b) Rz(c)."""
    a, b, c = np.asarray(angles, dtype=np.float64)
    ca, sa = np.cos(a), np.sin(a)
    cb, sb = np.cos(b), np.sin(b)
    cc, sc = np.cos(c), np.sin(c)
    rx = np.array([[1, 0, 0], [0, ca, -sa], [0, sa, ca]])
    ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    rz = np.array([[cc, -sc, 0], [sc, cc, 0], [0, 0, 1]])
    return rx @ ry @ rz


@dataclass(frozen=True)
class EulerAngles:
    """Intrinsic X-Y-Z decomposition with a gimbal-lock flag."""

    angles: np.ndarray
    gimbal_locked: bool


def matrix_to_euler(rot: np.ndarray) -> EulerAngles:
    """Decompose a rotation matrix into intrinsic X-Y-Z angles.

    The gimbal flag is set when the middle angle sits within 1e-6 of +-pi/2;
    the decomposition is still returned (canonical branch with the third
    angle zeroed at the exact singularity).
    """
    rot = np.asarray(rot, dtype=np.float64)
    sb = np.clip(rot[0, 2], -1.0, 1.0)
    b = np.arcsin(sb)
    locked = abs(abs(b) - np.pi / 2) < 1e-6
    if np.hypot(rot[0, 0], rot[0, 1]) > 1e-12:
        a = np.arctan2(-rot[1, 2], rot[2, 2])
        c = np.arctan2(-rot[0, 1], rot[0, 0])
    elif sb > 0:
        a = np.arctan2(rot[1, 0], rot[1, 1])
        c = 0.0
    else:
        a = np.arctan2(-rot[1, 0], rot[1, 1])
        c = 0.0
    return EulerAngles(angles=np.array([a, b, c]), gimbal_locked=locked)


@dataclass(frozen=True)
class EulerConvention:
    """Per-joint decomposition frames; columns of frames[j] are the joint's
    X, Y, Z axes expressed in the template frame."""

    frames: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=np.float64)
        if f.ndim != 3 or f.shape[1:] != (3, 3):
            raise ValueError("frames must be (J, 3, 3)")
        for j, a in enumerate(f):
            if np.abs(a.T @ a - np.eye(3)).max() > 1e-9 or np.linalg.det(a) < 0:
                raise ValueError(f"frame {j} is not right-handed orthonormal")
        object.__setattr__(self, "frames", f)

    @classmethod
    def identity(cls, n_joints: int = NUM_JOINTS) -> "EulerConvention":
        return cls(np.tile(np.eye(3), (n_joints, 1, 1)))

    @classmethod
    def aligned_with_bones(cls, model: "BodyModel") -> "EulerConvention":
        """Z along the child bone, X the primary swing axis, Y completing.

        Joints with several children use the lowest-index child; leaves
        continue along their own bone from the parent.
        """
        rest = model.rest_joints(np.zeros(NUM_SHAPE))
        parents = model.kinematic_tree
        frames = np.empty((len(parents), 3, 3))
        for j in range(len(parents)):
            children = [c for c, p in enumerate(parents) if p == j]
            if children:
                z = rest[children[0]] - rest[j]
            elif parents[j] >= 0:
                z = rest[j] - rest[parents[j]]
            else:
                z = np.array([0.0, 0.0, 1.0])
            n = np.linalg.norm(z)
            z = z / n if n > 1e-12 else np.array([0.0, 0.0, 1.0])
            x = np.array([1.0, 0.0, 0.0])
            x = x - (x @ z) * z
            if np.linalg.norm(x) < 1e-6:
                x = np.array([0.0, 1.0, 0.0])
                x = x - (x @ z) * z
            x /= np.linalg.norm(x)
            y = np.cross(z, x)
            frames[j] = np.column_stack([x, y, z])
        return cls(frames)


def axis_angle_to_euler(aa: np.ndarray, frame: np.ndarray | None = None) -> EulerAngles:
    """Decompose an axis-angle rotation into intrinsic X-Y-Z Euler angles,
    optionally inside a convention frame (R_local = A^T R A)."""
    aa = np.asarray(aa, dtype=np.float64)
    if not np.isfinite(aa).all():
        raise ValueError("axis-angle must be finite")
    r = rotation_from_axis_angle(aa)
    if frame is not None:
        a = np.asarray(frame, dtype=np.float64)
        r = a.T @ r @ a
    return matrix_to_euler(r)


# ---------------------------------------------------------------------------
# domain types

@dataclass(frozen=True)
class BodyParams:
    """Pose (24 axis-angle triplets), shape, and root translation.

    Axis-angle triplets are canonicalized to magnitude <= pi at construction.
    """

    theta: np.ndarray
    beta: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=np.float64).reshape(NUM_JOINTS * 3)
        beta = np.array(self.beta, dtype=np.float64).reshape(NUM_SHAPE)
        transl = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (
            np.isfinite(theta).all() and np.isfinite(beta).all() and np.isfinite(transl).all()
        ):
            raise ValueError("parameters must be finite")
        theta = canonicalize_pose(theta)
        for arr in (theta, beta, transl):
            arr.flags.writeable = False
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "translation", transl)

    @classmethod
    def rest(cls) -> "BodyParams":
        return cls(np.zeros(NUM_JOINTS * 3), np.zeros(NUM_SHAPE), np.zeros(3))


def raw_params(theta, beta, translation) -> BodyParams:
    """Build params without canonicalization or copies.

    Optimizer loops need the evaluated point to match their variable vector
    exactly, so the usual axis-angle wrapping is skipped here.
    """
    p = object.__new__(BodyParams)
    object.__setattr__(p, "theta", np.asarray(theta, dtype=np.float64).reshape(-1))
    object.__setattr__(p, "beta", np.asarray(beta, dtype=np.float64).reshape(-1))
    object.__setattr__(p, "translation", np.asarray(translation, dtype=np.float64).reshape(-1))
    return p


def canonicalize_pose(theta: np.ndarray) -> np.ndarray:
    """Wrap each joint's axis-angle to the ball of radius pi."""
    theta = np.array(theta, dtype=np.float64).reshape(-1, 3)
    out = theta.copy()
    for j, aa in enumerate(theta):
        angle = np.linalg.norm(aa)
        if angle <= np.pi or angle < 1e-12:
            continue
        wrapped = np.remainder(angle, 2 * np.pi)
        if wrapped > np.pi:
            wrapped -= 2 * np.pi
        out[j] = aa / angle * wrapped
    return out.reshape(-1)


@dataclass(frozen=True)
class JointLimits:
    """Per joint, per Euler axis rotation bounds in radians."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64)
        hi = np.asarray(self.upper, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 2 or lo.shape[1] != 3:
            raise ValueError("limits must both be (J, 3)")
        if (lo > hi).any():
            raise ValueError("lower limits must not exceed upper limits")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def permissive(cls, n_joints: int = NUM_JOINTS) -> "JointLimits":
        return cls(-np.pi * np.ones((n_joints, 3)), np.pi * np.ones((n_joints, 3)))


@dataclass(frozen=True)
class BodyModel:
    """Template mesh, kinematic tree, regressor, blendshapes, skin weights."""

    template_vertices: np.ndarray
    faces: np.ndarray
    kinematic_tree: tuple
    joint_regressor: np.ndarray
    shape_blendshapes: np.ndarray
    skinning_weights: np.ndarray
    joint_names: tuple = JOINT_NAMES

    def __post_init__(self):
        v = np.asarray(self.template_vertices, dtype=np.float64)
        object.__setattr__(self, "template_vertices", v)
        object.__setattr__(self, "faces", np.asarray(self.faces, dtype=np.int64))
        object.__setattr__(self, "kinematic_tree", tuple(int(p) for p in self.kinematic_tree))
        object.__setattr__(self, "joint_regressor", np.asarray(self.joint_regressor, dtype=np.float64))
        object.__setattr__(self, "shape_blendshapes", np.asarray(self.shape_blendshapes, dtype=np.float64))
        object.__setattr__(self, "skinning_weights", np.asarray(self.skinning_weights, dtype=np.float64))
        nv = len(v)
        nj = len(self.kinematic_tree)
        if self.joint_regressor.shape != (nj, nv):
            raise ValueError("joint_regressor must be (J, V)")
        if self.shape_blendshapes.shape != (nv, 3, NUM_SHAPE):
            raise ValueError("shape_blendshapes must be (V, 3, 10)")
        if self.skinning_weights.shape != (nv, nj):
            raise ValueError("skinning_weights must be (V, J)")
        roots = [j for j, p in enumerate(self.kinematic_tree) if p < 0]
        if roots != [0]:
            raise ValueError("kinematic tree must have joint 0 as its single root")
        for j, p in enumerate(self.kinematic_tree):
            if j > 0 and not 0 <= p < j:
                raise ValueError("parents must precede children")
        if (self.skinning_weights < -1e-12).any():
            raise ValueError("skin weights must be non-negative")
        if np.abs(self.skinning_weights.sum(axis=1) - 1.0).max() > 1e-6:
            raise ValueError("skin weight rows must sum to 1")
        if np.abs(self.joint_regressor.sum(axis=1) - 1.0).max() > 1e-6:
            raise ValueError("regressor rows must sum to 1")

    @property
    def num_vertices(self) -> int:
        return len(self.template_vertices)

    @property
    def num_joints(self) -> int:
        return len(self.kinematic_tree)

    def shaped_vertices(self, beta: np.ndarray) -> np.ndarray:
        return self.template_vertices + self.shape_blendshapes @ np.asarray(beta, dtype=np.float64)

    def rest_joints(self, beta: np.ndarray) -> np.ndarray:
        return self.joint_regressor @ self.shaped_vertices(beta)


# ---------------------------------------------------------------------------
# forward model

def _global_transforms(model: BodyModel, rots: np.ndarray, rest_joints: np.ndarray):
    """Chain per-joint rotations into global (RG, joint position) pairs."""
    nj = model.num_joints
    parents = model.kinematic_tree
    rg = np.empty((nj, 3, 3))
    pos = np.empty((nj, 3))
    offsets = np.empty((nj, 3))
    offsets[0] = rest_joints[0]
    for k in range(1, nj):
        offsets[k] = rest_joints[k] - rest_joints[parents[k]]
    rg[0] = rots[0]
    pos[0] = rest_joints[0]
    for k in range(1, nj):
        q = parents[k]
        rg[k] = rg[q] @ rots[k]
        pos[k] = rg[q] @ offsets[k] + pos[q]
    return rg, pos, offsets


def forward(model: BodyModel, params: BodyParams) -> tuple[np.ndarray, np.ndarray]:
    """Pose the model: returns (vertices (V, 3), joints (J, 3)).

    vertices = LBS(template + blendshapes . beta, FK(theta)) + translation,
    joints = joint_regressor @ vertices.
    """
    shaped = model.shaped_vertices(params.beta)
    rest = model.joint_regressor @ shaped
    rots = np.array([rotation_from_axis_angle(aa) for aa in params.theta.reshape(-1, 3)])
    rg, pos, _ = _global_transforms(model, rots, rest)
    w = model.skinning_weights
    verts = np.zeros_like(shaped)
    for k in range(model.num_joints):
        wk = w[:, k]
        if not wk.any():
            continue
        verts += wk[:, None] * ((shaped - rest[k]) @ rg[k].T + pos[k])
    verts += params.translation
    joints = model.joint_regressor @ verts
    return verts, joints


def param_blocks(wrt=("theta", "beta", "transl")) -> dict[str, slice]:
    """Column layout of a parameter Jacobian for the requested blocks."""
    blocks = {}
    start = 0
    for name, size in (("theta", NUM_JOINTS * 3), ("beta", NUM_SHAPE), ("transl", 3)):
        if name in wrt:
            blocks[name] = slice(start, start + size)
            start += size
    return blocks


def _fk_derivatives(model: BodyModel, params: BodyParams, wrt):
    """Forward pass plus d(RG_k)/dp and d(pos_k)/dp for every joint.

    Returns (shaped, rest, rg, pos, drg (J,n,3,3), dpos (J,n,3), blocks,
    dshaped (V,3,10) or None, drest (J,3,10) or None).
    """
    blocks = param_blocks(wrt)
    n = max((s.stop for s in blocks.values()), default=0)
    nj = model.num_joints
    parents = model.kinematic_tree

    shaped = model.shaped_vertices(params.beta)
    rest = model.joint_regressor @ shaped
    theta = params.theta.reshape(-1, 3)
    rots = np.empty((nj, 3, 3))
    drots = np.empty((nj, 3, 3, 3))
    for k in range(nj):
        rots[k], drots[k] = rotation_jacobian(theta[k])
    rg, pos, offsets = _global_transforms(model, rots, rest)

    drest = None
    doffsets = None
    if "beta" in blocks:
        # d rest joints / d beta_b, shaped as (J, 3, 10)
        drest = np.einsum("jv,vcb->jcb", model.joint_regressor, model.shape_blendshapes)
        doffsets = np.empty_like(drest)
        doffsets[0] = drest[0]
        for k in range(1, nj):
            doffsets[k] = drest[k] - drest[parents[k]]

    drg = np.zeros((nj, n, 3, 3))
    dpos = np.zeros((nj, n, 3))
    for k in range(nj):
        q = parents[k]
        if k == 0:
            if "theta" in blocks:
                s = blocks["theta"].start
                drg[0, s : s + 3] = drots[0]
            if "beta" in blocks:
                dpos[0, blocks["beta"]] = drest[0].T
            continue
        drg[k] = np.einsum("nij,jk->nik", drg[q], rots[k])
        if "theta" in blocks:
            s = blocks["theta"].start + 3 * k
            drg[k, s : s + 3] += np.einsum("ij,njk->nik", rg[q], drots[k])
        dpos[k] = np.einsum("nij,j->ni", drg[q], offsets[k]) + dpos[q]
        if "beta" in blocks:
            dpos[k, blocks["beta"]] += (rg[q] @ doffsets[k]).T
    return shaped, rest, rg, pos, drg, dpos, blocks, drest


def forward_jacobian(model: BodyModel, params: BodyParams, wrt=("theta", "beta", "transl")):
    """Pose the model and differentiate it w.r.t. the requested blocks.

    Returns (vertices, joints, dverts (V,3,n), djoints (J,3,n), blocks).
    """
    shaped, rest, rg, pos, drg, dpos, blocks, _ = _fk_derivatives(model, params, wrt)
    n = max((s.stop for s in blocks.values()), default=0)
    w = model.skinning_weights
    nv = model.num_vertices

    verts = np.zeros((nv, 3))
    dverts = np.zeros((nv, 3, n))
    for k in range(model.num_joints):
        wk = w[:, k]
        if not wk.any():
            continue
        xk = shaped - rest[k]
        verts += wk[:, None] * (xk @ rg[k].T + pos[k])
        contrib = np.einsum("nij,vj->vin", drg[k], xk) + dpos[k].T[None, :, :]
        if "beta" in blocks:
            dxk = model.shape_blendshapes - (model.joint_regressor[k] @
                  model.shape_blendshapes.reshape(nv, -1)).reshape(1, 3, NUM_SHAPE)
            contrib[:, :, blocks["beta"]] += np.einsum("ij,vjb->vib", rg[k], dxk)
        dverts += wk[:, None, None] * contrib
    verts += params.translation
    if "transl" in blocks:
        s = blocks["transl"].start
        for i in range(3):
            dverts[:, i, s + i] += 1.0
    joints = model.joint_regressor @ verts
    djoints = np.einsum("jv,vcn->jcn", model.joint_regressor, dverts)
    return verts, joints, dverts, djoints, blocks


def joints_with_jacobian(model: BodyModel, params: BodyParams, wrt=("theta", "transl")):
    """Regressed joints and their Jacobian without forming vertex Jacobians.

    Exact for any model: the regressor/skinning contraction over vertices is
    precomputed once per model, so per-call cost is O(J^2 n).
    """
    shaped, rest, rg, pos, drg, dpos, blocks, _ = _fk_derivatives(model, params, wrt)
    n = max((s.stop for s in blocks.values()), default=0)
    a, m0, rb = _regressor_contraction(model)
    nj = model.num_joints

    # m[j, k] = sum_v r_jv w_vk shaped_v
    m = m0 + rb @ params.beta if rb is not None else m0
    joints = np.zeros((nj, 3))
    djoints = np.zeros((nj, 3, n))
    for k in range(nj):
        col = a[:, k]
        if not col.any():
            continue
        xk = m[:, k, :] - col[:, None] * rest[k]
        joints += xk @ rg[k].T + col[:, None] * pos[k]
        djoints += np.einsum("nij,vj->vin", drg[k], xk)
        djoints += col[:, None, None] * dpos[k].T[None, :, :]
        if "beta" in blocks:
            dxk = rb[:, k] - col[:, None, None] * (
                model.joint_regressor[k] @ model.shape_blendshapes.reshape(model.num_vertices, -1)
            ).reshape(1, 3, NUM_SHAPE)
            djoints[:, :, blocks["beta"]] += np.einsum("ij,vjb->vib", rg[k], dxk)
    joints += params.translation
    if "transl" in blocks:
        s = blocks["transl"].start
        for i in range(3):
            djoints[:, i, s + i] += 1.0
    return joints, djoints, blocks


def _regressor_contraction(model: BodyModel):
    """Cache sum_v r_jv w_vk {1, x_v, B_v} contractions on the model."""
    cache = getattr(model, "_contraction_cache", None)
    if cache is None:
        r, w = model.joint_regressor, model.skinning_weights
        a = r @ w
        m0 = np.einsum("jv,vk,vc->jkc", r, w, model.template_vertices)
        rb = np.einsum("jv,vk,vcb->jkcb", r, w, model.shape_blendshapes)
        cache = (a, m0, rb)
        object.__setattr__(model, "_contraction_cache", cache)
    return cache


# ---------------------------------------------------------------------------
# procedural asset

_BONE_RADII = {
    "spine1": 0.10, "spine2": 0.11, "spine3": 0.11, "neck": 0.05,
    "head": 0.08, "left_collar": 0.05, "right_collar": 0.05,
    "left_shoulder": 0.045, "right_shoulder": 0.045,
    "left_elbow": 0.04, "right_elbow": 0.04,
    "left_wrist": 0.032, "right_wrist": 0.032,
    "left_hand": 0.02, "right_hand": 0.02,
    "left_hip": 0.07, "right_hip": 0.07,
    "left_knee": 0.06, "right_knee": 0.06,
    "left_ankle": 0.045, "right_ankle": 0.045,
    "left_foot": 0.025, "right_foot": 0.025,
}

_REST_JOINTS = np.array([
    (0.00, 0.00, 0.00),    # pelvis
    (0.09, 0.00, -0.06),   # left_hip
    (-0.09, 0.00, -0.06),  # right_hip
    (0.00, 0.00, 0.11),    # spine1
    (0.10, 0.00, -0.48),   # left_knee
    (-0.10, 0.00, -0.48),  # right_knee
    (0.00, 0.00, 0.24),    # spine2
    (0.10, 0.00, -0.88),   # left_ankle
    (-0.10, 0.00, -0.88),  # right_ankle
    (0.00, 0.00, 0.35),    # spine3
    (0.11, 0.12, -0.94),   # left_foot
    (-0.11, 0.12, -0.94),  # right_foot
    (0.00, 0.00, 0.50),    # neck
    (0.07, 0.02, 0.43),    # left_collar
    (-0.07, 0.02, 0.43),   # right_collar
    (0.00, 0.01, 0.62),    # head
    (0.18, 0.00, 0.46),    # left_shoulder
    (-0.18, 0.00, 0.46),   # right_shoulder
    (0.44, 0.00, 0.46),    # left_elbow
    (-0.44, 0.00, 0.46),   # right_elbow
    (0.68, 0.00, 0.46),    # left_wrist
    (-0.68, 0.00, 0.46),   # right_wrist
    (0.76, 0.00, 0.46),    # left_hand
    (-0.76, 0.00, 0.46),   # right_hand
])

_MARKER_DIRS = np.array(
    [(1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)], dtype=np.float64
) / np.sqrt(3.0)


def _blendshape_fields(pos: np.ndarray) -> np.ndarray:
    """Ten smooth displacement fields of the rest position, (V, 3, 10)."""
    x, y, z = pos[:, 0], pos[:, 1], pos[:, 2]
    zero = np.zeros_like(x)
    fields = [
        0.05 * pos.T,                                  # overall scale
        np.stack([zero, zero, 0.08 * z]),              # height
        np.stack([0.06 * x, 0.06 * y, zero]),          # girth
        np.stack([0.04 * np.sin(2.0 * z), zero, zero]),
        np.stack([zero, 0.04 * np.sin(2.0 * x), zero]),
        np.stack([zero, zero, 0.04 * np.sin(2.0 * y + 0.5)]),
        np.stack([0.03 * np.cos(3.1 * z), 0.03 * np.cos(3.1 * x), zero]),
        np.stack([zero, 0.03 * np.cos(2.3 * z), 0.03 * np.sin(1.7 * x)]),
        np.stack([0.03 * np.sin(1.3 * x + 0.3), zero, 0.03 * np.cos(2.9 * z)]),
        np.stack([0.015 * z, 0.015 * x, 0.015 * y]),
    ]
    return np.stack(fields, axis=2).transpose(1, 0, 2)


def procedural_body() -> BodyModel:
    """Low-poly 24-joint body with marker-exact joint regression.

    Each joint carries a small tetrahedron of rigidly skinned marker
    vertices whose centroid defines the regressed joint; each bone carries
    two six-vertex rings blended between its end joints.
    """
    verts = []
    faces = []
    weights_rows = []
    nj = NUM_JOINTS
    regressor = np.zeros((nj, 96 + 23 * 12))

    for j in range(nj):
        base = len(verts)
        for d in _MARKER_DIRS:
            verts.append(_REST_JOINTS[j] + 0.015 * d)
            row = np.zeros(nj)
            row[j] = 1.0
            weights_rows.append(row)
        regressor[j, base : base + 4] = 0.25
        faces += [
            (base, base + 1, base + 2),
            (base, base + 3, base + 1),
            (base, base + 2, base + 3),
            (base + 1, base + 3, base + 2),
        ]

    for k in range(1, nj):
        p = KINEMATIC_PARENTS[k]
        a, b = _REST_JOINTS[p], _REST_JOINTS[k]
        axis = b - a
        axis = axis / np.linalg.norm(axis)
        u = np.array([1.0, 0.0, 0.0])
        u = u - (u @ axis) * axis
        if np.linalg.norm(u) < 1e-6:
            u = np.array([0.0, 1.0, 0.0])
            u = u - (u @ axis) * axis
        u /= np.linalg.norm(u)
        v = np.cross(axis, u)
        radius = _BONE_RADII[JOINT_NAMES[k]]
        ring_start = len(verts)
        for s in (0.3, 0.7):
            center = a + s * (b - a)
            for i in range(6):
                phi = 2 * np.pi * i / 6
                verts.append(center + radius * (np.cos(phi) * u + np.sin(phi) * v))
                row = np.zeros(nj)
                row[k] = 0.5 * s
                row[p] = 1.0 - 0.5 * s
                weights_rows.append(row)
        for i in range(6):
            i2 = (i + 1) % 6
            r0, r1 = ring_start, ring_start + 6
            faces.append((r0 + i, r0 + i2, r1 + i))
            faces.append((r1 + i, r0 + i2, r1 + i2))

    verts = np.array(verts)
    return BodyModel(
        template_vertices=verts,
        faces=np.array(faces, dtype=np.int64),
        kinematic_tree=KINEMATIC_PARENTS,
        joint_regressor=regressor,
        shape_blendshapes=_blendshape_fields(verts),
        skinning_weights=np.array(weights_rows),
    )


# ---------------------------------------------------------------------------
# asset and limit files

def save_model(path, model: BodyModel) -> None:
    doc = {
        "template_vertices": model.template_vertices.tolist(),
        "faces": model.faces.tolist(),
        "kinematic_tree": list(model.kinematic_tree),
        "joint_regressor": model.joint_regressor.tolist(),
        "shape_blendshapes": model.shape_blendshapes.tolist(),
        "skinning_weights": model.skinning_weights.tolist(),
        "joint_names": list(model.joint_names),
    }
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True)
        f.write("\n")


def load_model(path) -> BodyModel:
    with open(path) as f:
        doc = json.load(f)
    return BodyModel(
        template_vertices=np.array(doc["template_vertices"]),
        faces=np.array(doc["faces"], dtype=np.int64),
        kinematic_tree=tuple(doc["kinematic_tree"]),
        joint_regressor=np.array(doc["joint_regressor"]),
        shape_blendshapes=np.array(doc["shape_blendshapes"]),
        skinning_weights=np.array(doc["skinning_weights"]),
        joint_names=tuple(doc.get("joint_names", JOINT_NAMES)),
    )


def save_joint_limits(path, limits: JointLimits, joint_names=JOINT_NAMES) -> None:
    doc = {
        name: [[float(limits.lower[j, i]), float(limits.upper[j, i])] for i in range(3)]
        for j, name in enumerate(joint_names)
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_joint_limits(path, joint_names=JOINT_NAMES) -> JointLimits:
    with open(path) as f:
        doc = json.load(f)
    nj = len(joint_names)
    lo = np.full((nj, 3), -np.pi)
    hi = np.full((nj, 3), np.pi)
    for j, name in enumerate(joint_names):
        if name in doc:
            for i in range(3):
                lo[j, i], hi[j, i] = doc[name][i]
    return JointLimits(lower=lo, upper=hi)
