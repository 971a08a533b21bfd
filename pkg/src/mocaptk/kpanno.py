"""Keypoint annotation: confidence filtering, iterative camera selection,
triangulation, reprojection, and temporal/bone-length refinement.

A 2D keypoint frame holds one (P, 3) array of [u, v, confidence] per camera;
absent observations carry NaN pixel coordinates and zero confidence. 3D
sequences are (T, P, 3) with NaN rows for absent keypoints.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .camgeom import Camera, project_points, triangulate_dlt
from .errors import (
    BoneNeverObserved,
    DegenerateGeometry,
    InsufficientViews,
    OptimizationDiverged,
)
from .optim import minimize_monotone, safe_unit

DEFAULT_NUM_KEYPOINTS = 133

_ABSENT = (np.nan, np.nan, 0.0)


@dataclass
class KeypointFrame2D:
    """Per-view detections: camera id -> (P, 3) array of [u, v, confidence]."""

    views: dict

    def __post_init__(self):
        views = {}
        p = None
        for cam_id, arr in self.views.items():
            arr = np.asarray(arr, dtype=np.float64)
            if arr.ndim != 2 or arr.shape[1] != 3:
                raise ValueError(f"view {cam_id} must be (P, 3)")
            if p is None:
                p = arr.shape[0]
            elif arr.shape[0] != p:
                raise ValueError("all views must have the same keypoint count")
            conf = arr[:, 2]
            if ((conf < 0) | (conf > 1)).any():
                raise ValueError("confidences must lie in [0, 1]")
            views[str(cam_id)] = arr
        self.views = views

    @property
    def num_keypoints(self) -> int:
        return next(iter(self.views.values())).shape[0] if self.views else 0

    def present(self, cam_id: str) -> np.ndarray:
        """Boolean mask of observations present in a view."""
        arr = self.views[cam_id]
        return np.isfinite(arr[:, 0]) & np.isfinite(arr[:, 1])


@dataclass
class KeypointSequence3D:
    """(T, P, 3) keypoint positions in meters; NaN rows mark absent points."""

    frames: np.ndarray
    frame_rate: float

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[2] != 3 or self.frames.shape[0] < 1:
            raise ValueError("frames must be (T >= 1, P, 3)")
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")
        finite = np.isfinite(self.frames)
        if (finite.any(axis=2) & ~finite.all(axis=2)).any():
            raise ValueError("points must be fully present or fully absent")

    @property
    def present(self) -> np.ndarray:
        return np.isfinite(self.frames).all(axis=2)


@dataclass(frozen=True)
class SkeletonTopology:
    """Bone list as (parent index, child index) pairs forming a forest."""

    bones: tuple

    def __post_init__(self):
        bones = tuple((int(a), int(b)) for a, b in self.bones)
        if len(set(bones)) != len(bones):
            raise ValueError("duplicate bones")
        nodes = {i for bone in bones for i in bone}
        parent = {i: i for i in nodes}

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for a, b in bones:
            if a < 0 or b < 0:
                raise ValueError("bone indices must be non-negative")
            ra, rb = find(a), find(b)
            if ra == rb:
                raise ValueError("bones must form a forest (cycle found)")
            parent[ra] = rb
        object.__setattr__(self, "bones", bones)

    @property
    def num_bones(self) -> int:
        return len(self.bones)

    def max_index(self) -> int:
        return max((max(a, b) for a, b in self.bones), default=-1)


@dataclass
class BoneLengths:
    """Per-bone median lengths aligned with a SkeletonTopology."""

    lengths: np.ndarray

    def __post_init__(self):
        self.lengths = np.asarray(self.lengths, dtype=np.float64)
        if (self.lengths <= 0).any():
            raise ValueError("bone lengths must be positive")


@dataclass
class AnnotationConfig:
    """Thresholds and weights for annotation and refinement.

    tau_k filters detections by confidence; camera selection escalates the
    reprojection threshold from tau_min to tau_max in delta_c steps, keeping
    the n_c best views. lambda1/lambda2 weight the smoothness and bone terms,
    speed_eps floors the adaptive smoothness weight, and data_weight scales
    the point-to-ray data term anchoring refinement to the detections.
    """

    tau_k: float = 0.5
    tau_min: float = 5.0
    tau_max: float = 50.0
    delta_c: float = 5.0
    n_c: int | None = None  # None keeps every camera under the threshold
    lambda1: float = 1.0
    lambda2: float = 1.0
    speed_eps: float = 0.05
    data_weight: float = 0.1
    refine_max_iterations: int = 400
    refine_tolerance: float = 1e-10

    def __post_init__(self):
        if not 0.0 <= self.tau_k <= 1.0:
            raise ValueError("tau_k must lie in [0, 1]")
        if not 0.0 < self.tau_min <= self.tau_max:
            raise ValueError("need 0 < tau_min <= tau_max")
        if self.delta_c <= 0:
            raise ValueError("delta_c must be positive")
        if self.n_c is not None and self.n_c < 2:
            raise ValueError("n_c must be >= 2")
        if self.lambda1 < 0 or self.lambda2 < 0 or self.data_weight < 0:
            raise ValueError("weights must be non-negative")
        if self.speed_eps <= 0:
            raise ValueError("speed_eps must be positive")


@dataclass
class FrameAnnotation:
    """Per-frame output: 3D points, per-view reprojections, selected views."""

    points: np.ndarray
    reprojections: dict
    selected: list


def filter_keypoints(frame: KeypointFrame2D, tau_k: float) -> KeypointFrame2D:
    """Mark observations with confidence < tau_k absent; keep the rest."""
    views = {}
    for cam_id, arr in frame.views.items():
        out = arr.copy()
        out[out[:, 2] < tau_k] = _ABSENT
        views[cam_id] = out
    return KeypointFrame2D(views=views)


def select_cameras(errors: dict, tau_c: float, n_c: int | None) -> set:
    """Ids of the n_c smallest reprojection errors that are also <= tau_c.

    Ties break toward the ascending camera id; n_c of None keeps every
    camera under the threshold.
    """
    ranked = sorted(errors.items(), key=lambda kv: (kv[1], kv[0]))
    if n_c is not None:
        ranked = ranked[:n_c]
    return {cam_id for cam_id, err in ranked if err <= tau_c}


def annotate_frame(
    frame: KeypointFrame2D, rig: list[Camera], config: AnnotationConfig | None = None
) -> FrameAnnotation:
    """Triangulate every keypoint with escalating-threshold camera selection.

    Per keypoint: filter by confidence, triangulate from the candidate views,
    reproject into every view holding a detection, and re-select cameras with
    the reprojection threshold escalating from tau_min by delta_c until at
    least three consistent views are found; repeat until the selected set is
    stable. Keypoints whose loop exhausts tau_max are marked absent.
    """
    if len(rig) < 2:
        raise InsufficientViews("rig must hold at least two cameras")
    config = config or AnnotationConfig()
    cams = {cam.id: cam for cam in rig}
    filtered = filter_keypoints(frame, config.tau_k)
    num_kp = filtered.num_keypoints

    points = np.full((num_kp, 3), np.nan)
    selected: list = [frozenset()] * num_kp
    for p in range(num_kp):
        obs = {
            cam_id: arr[p, :2]
            for cam_id, arr in filtered.views.items()
            if cam_id in cams and np.isfinite(arr[p, :2]).all()
        }
        result = _annotate_keypoint(obs, cams, config)
        if result is not None:
            points[p], selected[p] = result

    reprojections = {}
    for cam_id, cam in cams.items():
        uv, z = project_points(cam, np.nan_to_num(points))
        uv[~(np.isfinite(points).all(axis=1) & (z > 0))] = np.nan
        reprojections[cam_id] = uv
    return FrameAnnotation(points=points, reprojections=reprojections, selected=selected)


def _annotate_keypoint(obs: dict, cams: dict, config: AnnotationConfig):
    """Escalating-threshold selection loop for one keypoint.

    Returns (point, selected ids) or None when the threshold budget runs out
    before the selected set stabilizes.
    """
    if len(obs) < 2:
        return None
    tau_c = config.tau_min
    current = set(obs)
    while tau_c <= config.tau_max:
        try:
            point = triangulate_dlt([(cams[c], obs[c]) for c in sorted(current)])
        except (InsufficientViews, DegenerateGeometry):
            return None
        errors = {}
        for cam_id, uv in obs.items():
            proj, z = project_points(cams[cam_id], point[None])
            errors[cam_id] = (
                float(np.linalg.norm(proj[0] - uv)) if z[0] > 0 else np.inf
            )
        chosen: set = set()
        while tau_c <= config.tau_max and len(chosen) < 3:
            chosen = select_cameras(errors, tau_c, config.n_c)
            tau_c += config.delta_c
        if chosen == current:
            return point, frozenset(current)
        current = chosen
        if len(current) < 2:
            return None
    return None


def median_bone_lengths(
    seq: KeypointSequence3D, topo: SkeletonTopology
) -> BoneLengths:
    """Per-bone median length over frames where both endpoints are present.

    Uses the lower median for even counts.
    """
    present = seq.present
    lengths = np.empty(topo.num_bones)
    for b, (i, j) in enumerate(topo.bones):
        both = present[:, i] & present[:, j]
        if not both.any():
            raise BoneNeverObserved(f"bone ({i}, {j}) never observed")
        d = np.sort(np.linalg.norm(seq.frames[both, i] - seq.frames[both, j], axis=1))
        lengths[b] = d[(len(d) - 1) // 2]
    return BoneLengths(lengths=lengths)


# ---------------------------------------------------------------------------
# refinement

def _ray_bundles(frames2d, rig, present, config, selected):
    """Fixed per-camera ray fields from the filtered detections.

    Returns (origins (C,3), dirs (C,T,P,3) zero-filled where unused,
    masks (C,T,P) bool).
    """
    t_dim, p_dim = present.shape
    cams = sorted(rig, key=lambda c: c.id)
    origins = np.array([c.center for c in cams])
    dirs = np.zeros((len(cams), t_dim, p_dim, 3))
    masks = np.zeros((len(cams), t_dim, p_dim), dtype=bool)
    for ci, cam in enumerate(cams):
        k = cam.intrinsics
        rot_t = cam.extrinsics.rotation.T
        for t in range(t_dim):
            frame = filter_keypoints(frames2d[t], config.tau_k)
            if cam.id not in frame.views:
                continue
            arr = frame.views[cam.id]
            ok = np.isfinite(arr[:, 0]) & np.isfinite(arr[:, 1]) & present[t]
            if selected is not None:
                ok &= np.array([cam.id in selected[t][p] for p in range(p_dim)])
            if not ok.any():
                continue
            uv = np.nan_to_num(arr[:, :2])
            d_cam = np.stack(
                [(uv[:, 0] - k.cx) / k.fx, (uv[:, 1] - k.cy) / k.fy, np.ones(p_dim)],
                axis=1,
            )
            d_world = d_cam @ rot_t.T
            d_world /= np.linalg.norm(d_world, axis=1, keepdims=True)
            dirs[ci, t][ok] = d_world[ok]
            masks[ci, t] = ok
    return origins, dirs, masks


def _build_refine_objective(seq, topo, bones, frames2d, rig, config, selected):
    """Objective and gradient over the flattened present coordinates."""
    x0 = np.nan_to_num(seq.frames)
    t_dim, p_dim, _ = x0.shape
    present = seq.present
    origins, dirs, masks = _ray_bundles(frames2d, rig, present, config, selected)
    n_sel = np.maximum(masks.sum(axis=0), 1)
    smooth_w = _smoothness_weights(seq.frames, present, seq.frame_rate, config)
    bone_pairs = np.array(topo.bones, dtype=np.int64).reshape(-1, 2)
    target_len = bones.lengths
    flat_idx = np.nonzero(present.reshape(-1))[0]

    def fun_grad(xflat):
        x = x0.reshape(-1, 3).copy()
        x[flat_idx] = xflat.reshape(-1, 3)
        x = x.reshape(t_dim, p_dim, 3)
        f = 0.0
        g = np.zeros_like(x)

        if config.data_weight > 0:
            for c in range(len(origins)):
                m = masks[c]
                if not m.any():
                    continue
                rel = x - origins[c]
                along = np.einsum("tpc,tpc->tp", rel, dirs[c])
                perp = rel - along[..., None] * dirs[c]
                dist, unit = safe_unit(perp)
                w = np.where(m, config.data_weight / n_sel, 0.0)
                f += float((w * dist).sum())
                # perp is orthogonal to the ray, so the pull is just its unit
                g += w[..., None] * unit

        both = present[:-1] & present[1:]
        diff = x[1:] - x[:-1]
        norms, units = safe_unit(diff)
        w = np.where(both, smooth_w, 0.0)
        f += float((w * norms).sum())
        gd = w[..., None] * units
        g[1:] += gd
        g[:-1] -= gd

        if config.lambda2 > 0 and len(bone_pairs):
            pi, pj = bone_pairs[:, 0], bone_pairs[:, 1]
            both_b = present[:, pi] & present[:, pj]
            lens, units_b = safe_unit(x[:, pi] - x[:, pj])
            counts = both_b.sum(axis=0)
            observed = counts > 0
            means = np.where(both_b, lens, 0.0).sum(axis=0) / np.maximum(counts, 1)
            resid = np.where(observed, target_len - means, 0.0)
            f += float(config.lambda2 * np.abs(resid).sum())
            slope = np.where(
                observed, -config.lambda2 * np.sign(resid) / np.maximum(counts, 1), 0.0
            )
            gb = (slope[None, :, None] * units_b) * both_b[..., None]
            np.add.at(g, (slice(None), pi), gb)
            np.add.at(g, (slice(None), pj), -gb)

        return f, g.reshape(-1, 3)[flat_idx].ravel()

    return fun_grad, x0.reshape(-1, 3)[flat_idx].ravel(), flat_idx


def refine_sequence(
    seq: KeypointSequence3D,
    topo: SkeletonTopology,
    bones: BoneLengths,
    frames2d: list[KeypointFrame2D],
    rig: list[Camera],
    config: AnnotationConfig | None = None,
    selected: list | None = None,
) -> KeypointSequence3D:
    """Joint smoothness and bone-length refinement of a triangulated sequence.

    Minimizes a point-to-ray data term over the selected views plus
    lambda1 * sum_t ||P(t+1) - P(t)|| with the per-keypoint weight scaled by
    speed_eps / max(mean speed, speed_eps), plus lambda2 * sum_bones
    |B - mean length|. Descent is monotone from the input sequence, so the
    objective never increases versus the initialization.
    """
    config = config or AnnotationConfig()
    if seq.frames.shape[0] < 2:
        raise ValueError("refinement needs at least two frames")
    fun_grad, x0_flat, flat_idx = _build_refine_objective(
        seq, topo, bones, frames2d, rig, config, selected
    )
    x_opt, f_final, _, _ = minimize_monotone(
        fun_grad,
        x0_flat,
        max_iterations=config.refine_max_iterations,
        tolerance=config.refine_tolerance,
    )
    if not np.isfinite(f_final):
        raise OptimizationDiverged("refinement objective is not finite")
    out = np.full_like(seq.frames.reshape(-1, 3), np.nan)
    out[np.nonzero(seq.present.reshape(-1))[0]] = x_opt.reshape(-1, 3)
    out = out.reshape(seq.frames.shape)
    out[~seq.present] = np.nan
    return KeypointSequence3D(frames=out, frame_rate=seq.frame_rate)


def refinement_objective(
    seq, topo, bones, frames2d, rig, config=None, selected=None
) -> float:
    """Evaluate the refinement objective at a sequence (before/after checks)."""
    config = config or AnnotationConfig()
    fun_grad, x0_flat, _ = _build_refine_objective(
        seq, topo, bones, frames2d, rig, config, selected
    )
    return fun_grad(x0_flat)[0]


def _smoothness_weights(x0, present, fps, config) -> np.ndarray:
    """Per-step adaptive weights: lambda1 * eps / max(mean speed, eps).

    Mean speed per frame is the average-velocity magnitude over a centered
    five-frame window of the initial sequence (net displacement over elapsed
    time, which keeps genuine motion fast while jitter averages out); each
    step takes the mean of its two endpoint frames.
    """
    t_dim = x0.shape[0]
    v = np.full((t_dim, x0.shape[1]), config.speed_eps)
    for t in range(t_dim):
        lo, hi = max(0, t - 2), min(t_dim - 1, t + 2)
        if hi <= lo:
            continue
        disp = np.linalg.norm(x0[hi] - x0[lo], axis=1)
        ok = present[hi] & present[lo] & np.isfinite(disp)
        v[t, ok] = disp[ok] * fps / (hi - lo)
    v_step = 0.5 * (v[:-1] + v[1:])
    return config.lambda1 * config.speed_eps / np.maximum(v_step, config.speed_eps)


# ---------------------------------------------------------------------------
# file formats

def save_keypoints2d(path, frames: list[KeypointFrame2D], fps: float) -> None:
    """Write `{"fps", "num_keypoints", "frames": [{"views": {...}}]}`;
    absent observations serialize as null."""
    num_kp = frames[0].num_keypoints if frames else 0
    doc = {
        "fps": fps,
        "num_keypoints": num_kp,
        "frames": [
            {
                "views": {
                    cam_id: [
                        [float(u), float(v), float(c)] if np.isfinite(u) else None
                        for u, v, c in arr
                    ]
                    for cam_id, arr in frame.views.items()
                }
            }
            for frame in frames
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True)
        f.write("\n")


def load_keypoints2d(path) -> tuple[list[KeypointFrame2D], float]:
    with open(path) as f:
        doc = json.load(f)
    frames = []
    for fr in doc["frames"]:
        views = {
            cam_id: np.array(
                [row if row is not None else _ABSENT for row in rows], dtype=np.float64
            )
            for cam_id, rows in fr["views"].items()
        }
        frames.append(KeypointFrame2D(views=views))
    return frames, float(doc["fps"])


def save_keypoints3d(path, seq: KeypointSequence3D) -> None:
    """Write `{"fps", "frames": [[[x,y,z]|null, ...], ...]}` in meters."""
    doc = {
        "fps": seq.frame_rate,
        "frames": [
            [
                [float(v) for v in row] if np.isfinite(row).all() else None
                for row in frame
            ]
            for frame in seq.frames
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True)
        f.write("\n")


def load_keypoints3d(path) -> KeypointSequence3D:
    with open(path) as f:
        doc = json.load(f)
    frames = np.array(
        [
            [row if row is not None else [np.nan] * 3 for row in frame]
            for frame in doc["frames"]
        ],
        dtype=np.float64,
    )
    return KeypointSequence3D(frames=frames, frame_rate=float(doc["fps"]))


def save_topology(path, topo: SkeletonTopology) -> None:
    """Write the bone list as a JSON array of [parent, child] pairs."""
    with open(path, "w") as f:
        json.dump([[a, b] for a, b in topo.bones], f)
        f.write("\n")


def load_topology(path) -> SkeletonTopology:
    with open(path) as f:
        return SkeletonTopology(bones=tuple((a, b) for a, b in json.load(f)))
