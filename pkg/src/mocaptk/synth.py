"""Synthetic-scene oracle: camera rigs, skeleton motions, noisy detections,
depth renders, and cube-stack scenes with exact ground truth.

Everything is deterministic under a seed; randomness comes from a Philox
counter-based generator so reruns are reproducible across platforms.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camgeom import Camera, Intrinsics, RigidTransform, project_points
from .cloudproc import DepthImage, PointCloud
from .kpanno import KeypointFrame2D, KeypointSequence3D, SkeletonTopology

RNG_ALGORITHM = "numpy-philox4x64"


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


# ---------------------------------------------------------------------------
# stick-figure skeleton

STICK_FIGURE_NAMES = (
    "pelvis", "spine", "neck", "head",
    "left_shoulder", "left_elbow", "left_wrist",
    "right_shoulder", "right_elbow", "right_wrist",
    "left_hip", "left_knee", "left_ankle",
    "right_hip", "right_knee", "right_ankle",
    "nose",
)

_STICK_BONES = (
    (0, 1), (1, 2), (2, 3),
    (2, 4), (4, 5), (5, 6),
    (2, 7), (7, 8), (8, 9),
    (0, 10), (10, 11), (11, 12),
    (0, 13), (13, 14), (14, 15),
    (3, 16),
)

_STICK_REST = np.array([
    (0.00, 0.00, 0.00),
    (0.00, 0.00, 0.25),
    (0.00, 0.00, 0.50),
    (0.00, 0.00, 0.65),
    (0.20, 0.00, 0.45),
    (0.45, 0.00, 0.45),
    (0.70, 0.00, 0.45),
    (-0.20, 0.00, 0.45),
    (-0.45, 0.00, 0.45),
    (-0.70, 0.00, 0.45),
    (0.10, 0.00, -0.05),
    (0.10, 0.00, -0.50),
    (0.10, 0.00, -0.90),
    (-0.10, 0.00, -0.05),
    (-0.10, 0.00, -0.50),
    (-0.10, 0.00, -0.90),
    (0.00, 0.10, 0.68),
])


def stick_figure() -> tuple[np.ndarray, SkeletonTopology]:
    """Rest positions (17, 3) and bone topology of the test skeleton."""
    return _STICK_REST.copy(), SkeletonTopology(bones=_STICK_BONES)


@dataclass
class MotionScript:
    """Keyframed joint trajectories with linear interpolation."""

    keyframes: list  # [(time_s, (P, 3) positions)], times ascending

    def __post_init__(self):
        if not self.keyframes:
            raise ValueError("need at least one keyframe")
        times = [t for t, _ in self.keyframes]
        if times != sorted(times):
            raise ValueError("keyframe times must be ascending")

    def sample(self, t: float) -> np.ndarray:
        ks = self.keyframes
        if t <= ks[0][0]:
            return np.array(ks[0][1], dtype=np.float64)
        if t >= ks[-1][0]:
            return np.array(ks[-1][1], dtype=np.float64)
        for (t0, p0), (t1, p1) in zip(ks, ks[1:]):
            if t0 <= t <= t1:
                a = (t - t0) / (t1 - t0) if t1 > t0 else 0.0
                return (1 - a) * np.asarray(p0) + a * np.asarray(p1)
        raise AssertionError("unreachable")


def static_script(points: np.ndarray, duration_s: float) -> MotionScript:
    return MotionScript(keyframes=[(0.0, points), (duration_s, points)])


def linear_script(points: np.ndarray, velocity, duration_s: float) -> MotionScript:
    v = np.asarray(velocity, dtype=np.float64)
    return MotionScript(
        keyframes=[(0.0, points), (duration_s, points + v * duration_s)]
    )


def swing_script(
    points: np.ndarray, amplitude: float, period_s: float, duration_s: float, fps: float
) -> MotionScript:
    """Sinusoidal limb swing: wrists and ankles sweep forward/back while the
    body sways laterally. Dense keyframes, one per frame."""
    keys = []
    n = max(2, int(round(duration_s * fps)) + 1)
    swing_idx = [5, 6, 8, 9, 11, 12, 14, 15]  # elbows out to ankles
    for i in range(n):
        t = i / fps
        phase = 2 * np.pi * t / period_s
        p = points.copy()
        p[:, 0] += 0.1 * amplitude * np.sin(phase)
        p[swing_idx, 1] += amplitude * np.sin(phase)
        p[swing_idx[:4], 2] += 0.3 * amplitude * np.cos(phase)
        keys.append((t, p))
    return MotionScript(keyframes=keys)


# ---------------------------------------------------------------------------
# scene specification

@dataclass
class SceneSpec:
    """Rig geometry, skeleton, motion, and noise model for one scene."""

    n_cameras: int = 10
    radius: float = 2.0
    ring_height: float = 1.0
    image_width: int = 1920
    image_height: int = 1080
    focal_px: float = 960.0
    fps: float = 30.0
    duration_s: float = 2.0
    pixel_sigma: float = 0.0
    outlier_view_prob: float = 0.0
    outlier_px: float = 50.0
    depth_sigma: float = 0.0
    emit_depth: bool = False
    depth_width: int = 320
    depth_height: int = 288
    topology: SkeletonTopology = field(default_factory=lambda: SkeletonTopology(_STICK_BONES))
    motion: MotionScript | None = None

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("ring radius must be positive")
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        if not 0.0 <= self.outlier_view_prob <= 1.0:
            raise ValueError("outlier probability must lie in [0, 1]")
        if self.n_cameras < 2:
            raise ValueError("need at least two cameras")
        if self.motion is None:
            rest, _ = stick_figure()
            self.motion = static_script(rest + (0.0, 0.0, 1.0), self.duration_s)

    @property
    def num_frames(self) -> int:
        return max(1, int(round(self.duration_s * self.fps)))


def look_at(position, target, up=(0.0, 0.0, 1.0)) -> RigidTransform:
    """World->camera transform for a camera at `position` aimed at `target`."""
    position = np.asarray(position, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - position
    z = z / np.linalg.norm(z)
    up = np.asarray(up, dtype=np.float64)
    x = np.cross(z, up)
    if np.linalg.norm(x) < 1e-9:
        x = np.cross(z, np.array([0.0, 1.0, 0.0]))
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    rot = np.stack([x, y, z])
    return RigidTransform(rot, -rot @ position)


def synth_rig(spec: SceneSpec, look_target=(0.0, 0.0, 1.0)) -> list[Camera]:
    """Cameras evenly spaced on a ring, all aimed at the target point."""
    intr = Intrinsics(
        fx=spec.focal_px, fy=spec.focal_px,
        cx=(spec.image_width - 1) / 2.0, cy=(spec.image_height - 1) / 2.0,
        width=spec.image_width, height=spec.image_height,
    )
    cams = []
    for k in range(spec.n_cameras):
        phi = 2 * np.pi * k / spec.n_cameras
        pos = np.array(
            [spec.radius * np.cos(phi), spec.radius * np.sin(phi), spec.ring_height]
        )
        cams.append(
            Camera(id=f"cam{k:02d}", intrinsics=intr, extrinsics=look_at(pos, look_target))
        )
    return cams


def synth_sequence(
    spec: SceneSpec, rig: list[Camera], seed: int = 0
) -> tuple[KeypointSequence3D, list[KeypointFrame2D], dict | None]:
    """Ground-truth 3D keypoints plus noisy per-view 2D detections.

    With pixel_sigma zero and no outliers the 2D observations are exact
    projections. Returns (gt sequence, 2D frames, depth images or None);
    depth images (camera id -> list of DepthImage) render a sphere per joint.
    """
    rng = make_rng(seed)
    n_frames = spec.num_frames
    gt = np.stack([spec.motion.sample(i / spec.fps) for i in range(n_frames)])
    frames2d = []
    for t in range(n_frames):
        views = {}
        for cam in rig:
            uv, z = project_points(cam, gt[t])
            arr = np.concatenate([uv, np.ones((len(uv), 1))], axis=1)
            arr[z <= 0] = (np.nan, np.nan, 0.0)
            if spec.pixel_sigma > 0:
                arr[:, :2] += rng.normal(0.0, spec.pixel_sigma, size=(len(uv), 2))
            if spec.outlier_view_prob > 0 and rng.random() < spec.outlier_view_prob:
                direction = rng.normal(size=2)
                direction /= np.linalg.norm(direction)
                arr[:, :2] += spec.outlier_px * direction
            views[cam.id] = arr
        frames2d.append(KeypointFrame2D(views=views))
    seq = KeypointSequence3D(frames=gt, frame_rate=spec.fps)

    depths = None
    if spec.emit_depth:
        depths = {cam.id: [] for cam in rig}
        radii = np.full(gt.shape[1], 0.07)
        for t in range(n_frames):
            for cam in rig:
                img = render_sphere_depth(
                    cam, gt[t], radii, spec.depth_width, spec.depth_height
                )
                if spec.depth_sigma > 0:
                    noise = rng.normal(0.0, spec.depth_sigma, img.depths.shape)
                    img.depths[img.valid] += noise[img.valid]
                depths[cam.id].append(img)
    return seq, frames2d, depths


def render_sphere_depth(
    camera: Camera, centers: np.ndarray, radii: np.ndarray, width: int, height: int
) -> DepthImage:
    """Depth-only rasterizer stub: nearest ray-sphere intersection per pixel.

    The camera's intrinsics are rescaled to the requested raster size.
    """
    k = camera.intrinsics
    sx = width / k.width
    sy = height / k.height
    fx, fy = k.fx * sx, k.fy * sy
    cx, cy = k.cx * sx, k.cy * sy
    us, vs = np.meshgrid(np.arange(width), np.arange(height))
    d = np.stack(
        [(us - cx) / fx, (vs - cy) / fy, np.ones_like(us, dtype=np.float64)], axis=-1
    )
    d2 = np.einsum("hwc,hwc->hw", d, d)
    cam_centers = camera.extrinsics.apply(np.asarray(centers, dtype=np.float64))
    best_t = np.full((height, width), np.inf)
    for c, r in zip(cam_centers, np.asarray(radii, dtype=np.float64)):
        b = np.einsum("hwc,c->hw", d, c)
        disc = b * b - d2 * (c @ c - r * r)
        hit = disc >= 0
        t = np.where(hit, (b - np.sqrt(np.maximum(disc, 0.0))) / d2, np.inf)
        t = np.where(t > 0, t, np.inf)
        best_t = np.minimum(best_t, t)
    depth = np.where(np.isfinite(best_t), best_t, 0.0)  # z = t since d_z = 1
    return DepthImage(width=width, height=height, depths=depth)


# ---------------------------------------------------------------------------
# cube-stack scene for calibration

def cube_stack_points(spacing: float = 0.02) -> tuple[np.ndarray, np.ndarray]:
    """Surface samples of three stacked boxes: (points (N, 3), normals)."""
    boxes = [
        ((0.00, 0.00, 0.25), (0.50, 0.50, 0.50)),
        ((0.10, 0.05, 0.65), (0.30, 0.34, 0.30)),
        ((-0.12, -0.08, 0.95), (0.26, 0.22, 0.30)),
    ]
    pts, nrm = [], []
    for center, size in boxes:
        center = np.asarray(center)
        half = np.asarray(size) / 2.0
        for axis in range(3):
            for sign in (-1.0, 1.0):
                a, b = [i for i in range(3) if i != axis]
                na = max(2, int(round(size[a] / spacing)) + 1)
                nb = max(2, int(round(size[b] / spacing)) + 1)
                ga, gb = np.meshgrid(
                    np.linspace(-half[a], half[a], na),
                    np.linspace(-half[b], half[b], nb),
                )
                face = np.zeros((ga.size, 3))
                face[:, a] = ga.ravel()
                face[:, b] = gb.ravel()
                face[:, axis] = sign * half[axis]
                pts.append(face + center)
                normal = np.zeros(3)
                normal[axis] = sign
                nrm.append(np.tile(normal, (len(face), 1)))
    return np.vstack(pts), np.vstack(nrm)


def synth_cube_scene(
    rig: list[Camera], spacing: float = 0.02
) -> tuple[dict, np.ndarray]:
    """Per-camera clouds (camera frame) of the cube-stack scene.

    Each camera sees the front-facing subset of a shared world sampling, so
    overlapping regions correspond exactly. Returns (clouds by camera id,
    world points).
    """
    world, normals = cube_stack_points(spacing)
    clouds = {}
    for cam in rig:
        to_cam = cam.center - world
        visible = np.einsum("nc,nc->n", normals, to_cam) > 0
        clouds[cam.id] = PointCloud(points=cam.extrinsics.apply(world[visible]))
    return clouds, world


def perturbed_extrinsics(
    rig: list[Camera], rot_deg: float, transl_m: float, seed: int = 0, keep_first: bool = True
) -> dict:
    """Extrinsics with a fixed-magnitude random rotation/translation applied.

    The first camera is left exact by default so it can serve as the gauge.
    """
    rng = make_rng(seed)
    out = {}
    for i, cam in enumerate(rig):
        if keep_first and i == 0:
            out[cam.id] = cam.extrinsics
            continue
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = np.deg2rad(rot_deg)
        kx = np.array(
            [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
        )
        rot = np.eye(3) + np.sin(angle) * kx + (1 - np.cos(angle)) * (kx @ kx)
        shift = rng.normal(size=3)
        shift = shift / np.linalg.norm(shift) * transl_m
        delta = RigidTransform(rot, shift)
        out[cam.id] = delta @ cam.extrinsics
    return out
