"""Monotone first-order minimizer shared by registration and refinement.

Gradient descent with a Barzilai-Borwein step proposal and Armijo
backtracking, so accepted iterates never increase the objective.
"""
from __future__ import annotations

import numpy as np

from .errors import OptimizationDiverged


def minimize_monotone(
    fun_grad,
    x0: np.ndarray,
    max_iterations: int = 500,
    tolerance: float = 1e-8,
    armijo_c: float = 1e-4,
    max_backtracks: int = 40,
):
    """Minimize fun_grad(x) -> (f, g) from x0.

    Returns (x, f, converged, n_iterations). `converged` means the relative
    decrease fell below `tolerance` (or the gradient vanished) before the
    iteration cap. Raises OptimizationDiverged on NaN.
    """
    x = np.array(x0, dtype=np.float64)
    f, g = fun_grad(x)
    if not np.isfinite(f):
        raise OptimizationDiverged("objective is not finite at the start")
    step = 1.0 / max(1.0, float(np.linalg.norm(g)))
    prev_x = None
    prev_g = None
    for it in range(max_iterations):
        gnorm2 = float(g @ g)
        if gnorm2 <= 1e-30:
            return x, f, True, it
        if prev_x is not None:
            dx = x - prev_x
            dg = g - prev_g
            denom = float(dx @ dg)
            if denom > 1e-30:
                step = float(dx @ dx) / denom
        step = float(np.clip(step, 1e-12, 1e6))
        accepted = False
        t = step
        for _ in range(max_backtracks):
            x_new = x - t * g
            f_new, g_new = fun_grad(x_new)
            if np.isnan(f_new):
                raise OptimizationDiverged("objective became NaN")
            if f_new <= f - armijo_c * t * gnorm2:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            return x, f, True, it
        rel_drop = (f - f_new) / max(abs(f), 1e-30)
        prev_x, prev_g = x, g
        x, f, g = x_new, f_new, g_new
        if rel_drop < tolerance:
            return x, f, True, it + 1
    return x, f, False, max_iterations


def safe_unit(v: np.ndarray, axis: int = -1, eps: float = 1e-12):
    """Norms and unit vectors with zero vectors mapped to zero gradient."""
    n = np.linalg.norm(v, axis=axis, keepdims=True)
    unit = np.where(n > eps, v / np.where(n > eps, n, 1.0), 0.0)
    return np.squeeze(n, axis=axis), unit
