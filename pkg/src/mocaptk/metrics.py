"""Pose evaluation metrics: MPJPE and Procrustes-aligned MPJPE, in mm."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfiguration, ShapeMismatch


@dataclass
class Metrics:
    """Sequence-level errors with per-frame breakdowns (all mm)."""

    mpjpe: float
    pa_mpjpe: float
    per_frame_mpjpe: np.ndarray
    per_frame_pa_mpjpe: np.ndarray

    def __post_init__(self):
        if self.pa_mpjpe > self.mpjpe + 1e-9:
            raise ValueError("alignment must not worsen the fit")


def _check_shapes(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"{pred.shape} vs {gt.shape}")
    if pred.ndim != 3 or pred.shape[2] != 3:
        raise ShapeMismatch("expected (T, J, 3) joint arrays")
    return pred, gt


def mpjpe(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean per-joint position error in mm over all frames and joints.

    Joints absent (NaN) in either array are skipped.
    """
    pred, gt = _check_shapes(pred, gt)
    mask = np.isfinite(pred).all(axis=2) & np.isfinite(gt).all(axis=2)
    if not mask.any():
        raise ShapeMismatch("no jointly present joints")
    d = np.linalg.norm(np.where(mask[..., None], pred - gt, 0.0), axis=2)
    return float(d[mask].mean() * 1000.0)


def similarity_procrustes(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Least-squares similarity (scale, rotation, translation) of pred onto gt.

    Both are (J, 3) with J >= 3 non-collinear points. Returns aligned pred.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if len(pred) < 3:
        raise DegenerateConfiguration("need at least three joints")
    mu_p = pred.mean(axis=0)
    mu_g = gt.mean(axis=0)
    xp = pred - mu_p
    xg = gt - mu_g
    k = xp.T @ xg
    u, s, vt = np.linalg.svd(k)
    if s[1] <= 1e-12 * max(s[0], 1e-30):
        raise DegenerateConfiguration("joints are collinear")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    var_p = (xp ** 2).sum()
    scale = (s[0] + s[1] + d * s[2]) / var_p
    return scale * xp @ rot.T + mu_g


def pa_mpjpe(pred: np.ndarray, gt: np.ndarray) -> float:
    """MPJPE after per-frame similarity Procrustes alignment, in mm."""
    pred, gt = _check_shapes(pred, gt)
    total = []
    for t in range(pred.shape[0]):
        mask = np.isfinite(pred[t]).all(axis=1) & np.isfinite(gt[t]).all(axis=1)
        aligned = similarity_procrustes(pred[t][mask], gt[t][mask])
        total.append(np.linalg.norm(aligned - gt[t][mask], axis=1))
    return float(np.concatenate(total).mean() * 1000.0)


def evaluate(pred: np.ndarray, gt: np.ndarray) -> Metrics:
    """Full metric set with per-frame breakdowns."""
    pred, gt = _check_shapes(pred, gt)
    per_mpjpe = np.empty(pred.shape[0])
    per_pa = np.empty(pred.shape[0])
    for t in range(pred.shape[0]):
        per_mpjpe[t] = mpjpe(pred[t : t + 1], gt[t : t + 1])
        per_pa[t] = pa_mpjpe(pred[t : t + 1], gt[t : t + 1])
    return Metrics(
        mpjpe=mpjpe(pred, gt),
        pa_mpjpe=pa_mpjpe(pred, gt),
        per_frame_mpjpe=per_mpjpe,
        per_frame_pa_mpjpe=per_pa,
    )
