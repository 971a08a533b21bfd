"""Depth-image and point-cloud hygiene.

Depth maps use 0 to mark invalid pixels. Lifting goes pixel -> camera frame
via intrinsics, then camera -> world via the inverse extrinsics.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .camgeom import Camera
from .errors import ResolutionMismatch, TooFewPoints


@dataclass
class DepthImage:
    """Row-major metric depth raster; 0 means invalid."""

    width: int
    height: int
    depths: np.ndarray

    def __post_init__(self):
        self.depths = np.asarray(self.depths, dtype=np.float64)
        if self.depths.shape != (self.height, self.width):
            raise ResolutionMismatch(
                f"depth array {self.depths.shape} vs {self.height}x{self.width}"
            )
        if (self.depths < 0).any():
            raise ValueError("depths must be non-negative")

    @property
    def valid(self) -> np.ndarray:
        return self.depths > 0


@dataclass
class PointCloud:
    """N x 3 points in meters with optional aligned colors in [0, 1]."""

    points: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.isfinite(self.points).all():
            raise ValueError("points must be finite")
        if self.colors is not None:
            self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
            if len(self.colors) != len(self.points):
                raise ValueError("colors must align with points")

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class BinaryMask:
    """One bit per pixel; True marks masked-out pixels."""

    width: int
    height: int
    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.shape != (self.height, self.width):
            raise ResolutionMismatch(
                f"mask array {self.bits.shape} vs {self.height}x{self.width}"
            )


def depth_to_points(depth: DepthImage, camera: Camera) -> PointCloud:
    """Lift every valid pixel to a world-frame point (row-major order)."""
    k = camera.intrinsics
    if (depth.width, depth.height) != (k.width, k.height):
        raise ResolutionMismatch(
            f"depth {depth.width}x{depth.height} vs camera {k.width}x{k.height}"
        )
    rows, cols = np.nonzero(depth.valid)
    z = depth.depths[rows, cols]
    x = (cols - k.cx) / k.fx * z
    y = (rows - k.cy) / k.fy * z
    cam_pts = np.stack([x, y, z], axis=1)
    world = camera.extrinsics.inverse().apply(cam_pts)
    return PointCloud(points=world)


def boundary_mask(depth: DepthImage, sigma: float, threshold: float) -> BinaryMask:
    """Mask pixels where |LoG * depth| exceeds the threshold.

    LoG is a Gaussian blur (truncated at 3 sigma, replicate borders)
    followed by a 4-neighbor Laplacian. Invalid pixels are excluded from
    the blur normalization and always masked.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    valid = depth.valid
    num = ndimage.gaussian_filter(depth.depths * valid, sigma, mode="nearest", truncate=3.0)
    den = ndimage.gaussian_filter(valid.astype(np.float64), sigma, mode="nearest", truncate=3.0)
    blurred = np.zeros_like(num)
    ok = den > 1e-12
    blurred[ok] = num[ok] / den[ok]
    lap_kernel = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])
    log = ndimage.convolve(blurred, lap_kernel, mode="nearest")
    bits = (np.abs(log) > threshold) | ~valid | ~ok
    return BinaryMask(width=depth.width, height=depth.height, bits=bits)


def dilate_mask(mask: BinaryMask, radius: int) -> BinaryMask:
    """Grow the masked region by a circular structuring element."""
    if radius <= 0:
        return BinaryMask(mask.width, mask.height, mask.bits.copy())
    yy, xx = np.mgrid[-radius : radius + 1, -radius : radius + 1]
    structure = xx * xx + yy * yy <= radius * radius
    grown = ndimage.binary_dilation(mask.bits, structure=structure)
    return BinaryMask(mask.width, mask.height, grown)


def statistical_outlier_removal(
    cloud: PointCloud, k: int, std_ratio: float
) -> PointCloud:
    """Drop points whose mean k-NN distance exceeds mean + std_ratio * std.

    Uses the population standard deviation of the per-point mean distances.
    Survivor order matches the input.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if std_ratio <= 0:
        raise ValueError("std_ratio must be positive")
    n = len(cloud)
    if n <= k:
        raise TooFewPoints(f"{n} points with k={k}")
    tree = cKDTree(cloud.points)
    dists, _ = tree.query(cloud.points, k=k + 1)
    mean_dist = dists[:, 1:].mean(axis=1)
    mu = mean_dist.mean()
    sigma = mean_dist.std()
    keep = mean_dist <= mu + std_ratio * sigma
    colors = cloud.colors[keep] if cloud.colors is not None else None
    return PointCloud(points=cloud.points[keep], colors=colors)


def depth_consistency_mask(
    rendered: DepthImage, observed: DepthImage, tau_d: float
) -> BinaryMask:
    """Mask pixels where either depth is invalid or they differ by more than tau_d."""
    if (rendered.width, rendered.height) != (observed.width, observed.height):
        raise ResolutionMismatch(
            f"{rendered.width}x{rendered.height} vs {observed.width}x{observed.height}"
        )
    invalid = ~rendered.valid | ~observed.valid
    diff = np.abs(rendered.depths - observed.depths) > tau_d
    return BinaryMask(rendered.width, rendered.height, invalid | diff)
