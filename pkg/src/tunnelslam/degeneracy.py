"""Geometric-degeneracy analysis of converged scan registrations.

The per-pair cost xi_k is the squared misalignment of a corresponding point
pair under the registration transform, parameterized over
``(t_x, t_y, t_z, theta_x, theta_y, theta_z)`` with Z-Y-X Euler angles
evaluated at the converged rotation. The approximate Hessian is the sum of
outer products of the per-pair cost gradients; its condition number kappa
flags scenes that leave some motion direction unconstrained.

Because the gradients of xi_k vanish at a perfect alignment, the metric
lives off the residual noise; a Gauss-Newton variant built from the
Jacobian of the misalignment vector itself is available via ``mode``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Pose3, matrix_to_euler_zyx
from .registration import Correspondences


class InsufficientCorrespondences(RuntimeError):
    pass


class DegenerateLabels(ValueError):
    pass


@dataclass(frozen=True)
class DegeneracyReport:
    eigenvalues: np.ndarray              # 6 values, sorted descending, >= 0
    condition_number: float              # lambda_max / lambda_min
    log_kappa: float                     # log10 of condition number
    least_observable_direction: np.ndarray  # unit 6-vector over (tx,ty,tz,rx,ry,rz)
    degenerate: bool


def _euler_rotation_derivatives(rx: float, ry: float, rz: float) -> tuple[np.ndarray, ...]:
    """dR/drx, dR/dry, dR/drz for R = Rz @ Ry @ Rx."""
    cx, sx = math.cos(rx), math.sin(rx)
    cy, sy = math.cos(ry), math.sin(ry)
    cz, sz = math.cos(rz), math.sin(rz)
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    dRx = np.array([[0, 0, 0], [0, -sx, -cx], [0, cx, -sx]])
    dRy = np.array([[-sy, 0, cy], [0, 0, 0], [-cy, 0, -sy]])
    dRz = np.array([[-sz, -cz, 0], [cz, -sz, 0], [0, 0, 0]])
    return Rz @ Ry @ dRx, Rz @ dRy @ Rx, dRz @ Ry @ Rx


def misalignment(transform: Pose3, p_source: np.ndarray, p_target: np.ndarray) -> np.ndarray:
    """d_k = u * p_source - p_target."""
    return transform.apply_one(p_source) - np.asarray(p_target, dtype=np.float64)


def point_cost_gradient(transform: Pose3, p_source: np.ndarray, p_target: np.ndarray) -> np.ndarray:
    """Gradient of xi_k = |d_k|^2 over (tx, ty, tz, rx, ry, rz).

    The translation block is 2 d_k; the rotation block differentiates the
    rotated source point through the Euler parameterization at the
    converged transform.
    """
    p_source = np.asarray(p_source, dtype=np.float64)
    d = misalignment(transform, p_source, p_target)
    rx, ry, rz = matrix_to_euler_zyx(transform.rotation())
    dRs = _euler_rotation_derivatives(rx, ry, rz)
    grad = np.empty(6)
    grad[:3] = 2.0 * d
    for i, dR in enumerate(dRs):
        grad[3 + i] = 2.0 * d @ (dR @ p_source)
    return grad


def gradient_rows(transform: Pose3, corr: Correspondences) -> np.ndarray:
    """(N, 6) stack of per-pair cost gradients (vectorized point_cost_gradient)."""
    d = transform.apply(corr.source) - corr.target    # (N, 3)
    rx, ry, rz = matrix_to_euler_zyx(transform.rotation())
    dRx, dRy, dRz = _euler_rotation_derivatives(rx, ry, rz)
    rows = np.empty((corr.count, 6))
    rows[:, :3] = 2.0 * d
    rows[:, 3] = 2.0 * np.sum(d * (corr.source @ dRx.T), axis=1)
    rows[:, 4] = 2.0 * np.sum(d * (corr.source @ dRy.T), axis=1)
    rows[:, 5] = 2.0 * np.sum(d * (corr.source @ dRz.T), axis=1)
    return rows


def _misalignment_jacobians(transform: Pose3, corr: Correspondences) -> np.ndarray:
    """(N, 3, 6) Jacobians of d_k itself (Gauss-Newton variant)."""
    rx, ry, rz = matrix_to_euler_zyx(transform.rotation())
    dRx, dRy, dRz = _euler_rotation_derivatives(rx, ry, rz)
    n = corr.count
    J = np.zeros((n, 3, 6))
    J[:, :, :3] = np.eye(3)
    J[:, :, 3] = corr.source @ dRx.T
    J[:, :, 4] = corr.source @ dRy.T
    J[:, :, 5] = corr.source @ dRz.T
    return J


def hessian(transform: Pose3, corr: Correspondences, mode: str = "gradient") -> np.ndarray:
    """Approximate 6x6 Hessian from the final correspondence set.

    mode "gradient" sums outer products of the scalar-cost gradients;
    mode "gauss_newton" sums J^T J of the misalignment vectors.
    """
    if corr.count < 6:
        raise InsufficientCorrespondences(f"{corr.count} pairs < 6")
    if mode == "gradient":
        rows = gradient_rows(transform, corr)
        H = rows.T @ rows
    elif mode == "gauss_newton":
        J = _misalignment_jacobians(transform, corr)
        H = np.einsum("nij,nik->jk", J, J)
    else:
        raise ValueError(f"unknown hessian mode {mode!r}")
    return 0.5 * (H + H.T)


def assess(transform: Pose3, corr: Correspondences, kappa_th: float = 2.0,
           mode: str = "gradient") -> DegeneracyReport:
    """Eigen-analysis of the approximate Hessian.

    The pose is degenerate when log10(kappa) >= kappa_th; a singular
    Hessian yields kappa = inf and is degenerate by definition.
    """
    H = hessian(transform, corr, mode=mode)
    w, V = np.linalg.eigh(H)
    w = np.maximum(w, 0.0)                 # PSD by construction; clamp round-off
    order = np.argsort(w)[::-1]
    w = w[order]
    V = V[:, order]
    lam_max, lam_min = w[0], w[5]
    if lam_min <= 0.0:
        kappa = math.inf
        log_kappa = math.inf
    else:
        kappa = float(lam_max / lam_min)
        log_kappa = math.log10(kappa)
    direction = V[:, 5] / np.linalg.norm(V[:, 5])
    return DegeneracyReport(w, kappa, log_kappa, direction, bool(log_kappa >= kappa_th))


def roc_curve(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, float]:
    """Threshold sweep over distinct scores; returns ((FPR, TPR) points, AUC).

    ``labels`` are 1 for degenerate (positive); a sample is predicted
    positive when its score is >= the threshold. AUC by trapezoidal rule.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("need at least one positive and one negative label")
    thresholds = np.concatenate(([np.inf], np.unique(scores)[::-1]))
    points = np.empty((thresholds.shape[0] + 1, 2))
    for i, th in enumerate(thresholds):
        pred = scores >= th
        points[i, 0] = np.sum(pred & ~labels) / n_neg   # FPR
        points[i, 1] = np.sum(pred & labels) / n_pos    # TPR
    points[-1] = (1.0, 1.0)
    auc = float(np.trapezoid(points[:, 1], points[:, 0]))
    return points, auc
