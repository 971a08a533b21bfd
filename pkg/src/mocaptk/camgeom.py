"""Pinhole camera model, rigid transforms, projection, and DLT triangulation.

Conventions:
  - World and camera frames are right-handed; extrinsics map world -> camera.
  - Pixel coordinates are (u, v) with u along image columns, v along rows.
  - All distances are in meters, all pixel quantities in pixels.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCamera, DegenerateGeometry, InsufficientViews

_ORTHO_TOL = 1e-9


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics with image resolution."""

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

    @property
    def matrix(self) -> np.ndarray:
        """3x3 calibration matrix K."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation; x_out = rotation @ x_in + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _freeze(self.rotation))
        object.__setattr__(self, "translation", _freeze(self.translation))
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation length 3")
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err > _ORTHO_TOL:
            raise ValueError(f"rotation is not orthonormal (deviation {err:.3g})")
        if abs(np.linalg.det(self.rotation) - 1.0) > _ORTHO_TOL:
            raise ValueError("rotation must have determinant +1")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or a stack (..., 3)."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self @ other).apply(x) == self.apply(other.apply(x))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    @property
    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


@dataclass(frozen=True)
class Camera:
    """A calibrated camera: id, intrinsics, world->camera extrinsics."""

    id: str
    intrinsics: Intrinsics
    extrinsics: RigidTransform

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        e = self.extrinsics
        return -(e.rotation.T @ e.translation)

    @property
    def projection_matrix(self) -> np.ndarray:
        """3x4 projection matrix K [R | t]."""
        e = self.extrinsics
        return self.intrinsics.matrix @ np.hstack(
            [e.rotation, e.translation[:, None]]
        )


@dataclass(frozen=True)
class Observation2D:
    """A detected 2D keypoint with confidence in [0, 1]."""

    u: float
    v: float
    confidence: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")


def project(camera: Camera, point: np.ndarray) -> np.ndarray:
    """Project a world point to pixel coordinates.

    Raises BehindCamera when the camera-frame depth is <= 0.
    """
    p = np.asarray(point, dtype=np.float64)
    pc = camera.extrinsics.apply(p)
    if pc[2] <= 0.0:
        raise BehindCamera(f"depth {pc[2]:.6g} behind camera {camera.id}")
    k = camera.intrinsics
    return np.array([k.fx * pc[0] / pc[2] + k.cx, k.fy * pc[1] / pc[2] + k.cy])


def project_points(camera: Camera, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection of (N, 3) world points.

    Returns (pixels (N, 2), depths (N,)); callers must mask depths <= 0
    themselves. No exception is raised here so bulk paths stay branch-free.
    """
    pc = camera.extrinsics.apply(np.asarray(points, dtype=np.float64))
    z = pc[..., 2]
    k = camera.intrinsics
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.stack(
            [k.fx * pc[..., 0] / z + k.cx, k.fy * pc[..., 1] / z + k.cy], axis=-1
        )
    return uv, z


def lift(camera: Camera, pixel: np.ndarray, depth: float) -> np.ndarray:
    """Back-project a pixel at the given camera-frame depth to a world point."""
    if depth <= 0:
        raise BehindCamera("depth must be positive")
    u, v = np.asarray(pixel, dtype=np.float64)
    k = camera.intrinsics
    pc = np.array([(u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth])
    return camera.extrinsics.inverse().apply(pc)


def pixel_ray(camera: Camera, pixel: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """World-frame ray (origin, unit direction) through a pixel."""
    u, v = np.asarray(pixel, dtype=np.float64)
    k = camera.intrinsics
    d_cam = np.array([(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0])
    d = camera.extrinsics.rotation.T @ d_cam
    return camera.center, d / np.linalg.norm(d)


def reprojection_error(camera: Camera, point: np.ndarray, obs: np.ndarray) -> float:
    """Euclidean pixel distance between project(camera, point) and obs."""
    return float(np.linalg.norm(project(camera, point) - np.asarray(obs, dtype=np.float64)))


def triangulate_dlt(observations: list[tuple[Camera, np.ndarray]]) -> np.ndarray:
    """Direct linear transform triangulation from >= 2 calibrated views.

    Stacks the standard cross-product rows u*P[2]-P[0], v*P[2]-P[1] per view
    and takes the right singular vector of the smallest singular value.

    Raises InsufficientViews for < 2 observations and DegenerateGeometry when
    the stacked system is rank-deficient or the solution lies at infinity
    (e.g. coincident camera centers).
    """
    if len(observations) < 2:
        raise InsufficientViews(f"need >= 2 views, got {len(observations)}")
    centers = np.array([cam.center for cam, _ in observations])
    spread = np.linalg.norm(centers - centers[0], axis=1).max()
    if spread < 1e-9:
        raise DegenerateGeometry("camera centers coincide")
    rows = []
    for cam, uv in observations:
        p = cam.projection_matrix
        u, v = np.asarray(uv, dtype=np.float64)
        rows.append(u * p[2] - p[0])
        rows.append(v * p[2] - p[1])
    a = np.array(rows)
    _, s, vt = np.linalg.svd(a)
    if s[-2] <= 1e-12 * s[0]:
        raise DegenerateGeometry("triangulation system is rank-deficient")
    x = vt[-1]
    if abs(x[3]) <= 1e-12 * np.linalg.norm(x[:3]):
        raise DegenerateGeometry("triangulated point lies at infinity")
    return x[:3] / x[3]


def load_rig(path) -> list[Camera]:
    """Read a rig JSON file into a list of cameras."""
    with open(path) as f:
        doc = json.load(f)
    cams = []
    for c in doc["cameras"]:
        intr = Intrinsics(
            fx=c["fx"], fy=c["fy"], cx=c["cx"], cy=c["cy"],
            width=int(c["width"]), height=int(c["height"]),
        )
        extr = RigidTransform(
            np.array(c["rotation"], dtype=np.float64).reshape(3, 3),
            np.array(c["translation"], dtype=np.float64),
        )
        cams.append(Camera(id=str(c["id"]), intrinsics=intr, extrinsics=extr))
    return cams


def save_rig(path, cameras: list[Camera]) -> None:
    """Write cameras to the rig JSON schema (row-major rotation)."""
    doc = {
        "cameras": [
            {
                "id": cam.id,
                "width": cam.intrinsics.width,
                "height": cam.intrinsics.height,
                "fx": cam.intrinsics.fx,
                "fy": cam.intrinsics.fy,
                "cx": cam.intrinsics.cx,
                "cy": cam.intrinsics.cy,
                "rotation": [float(x) for x in cam.extrinsics.rotation.ravel()],
                "translation": [float(x) for x in cam.extrinsics.translation],
            }
            for cam in cameras
        ]
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
