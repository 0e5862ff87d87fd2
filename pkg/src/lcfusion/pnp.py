"""Extrinsic calibration from LiDAR point / image pixel correspondences.

The pose (rotation + translation from the LiDAR frame to the camera frame)
is estimated in two stages, the way the bench workflow runs it:

1. ``solve_pnp_linear`` builds the 2n x 12 direct-linear-transform system
   from at least six correspondences, takes the smallest-singular-vector
   solution, fixes scale and sign, and projects the rotation block onto the
   nearest orthonormal matrix.
2. ``refine_pnp_lm`` polishes that initial pose with a damped least-squares
   (Levenberg-Marquardt) loop over the 6 pose parameters (axis-angle
   rotation + translation), minimizing squared pixel reprojection error.

``apply_fine_tune`` supports the manual nudge workflow on top of a solved
pose: the rotation increment composes on the camera side (left-compose), so
on-screen adjustments stay axis-aligned with the camera view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ToolkitError
from .geometry import (
    BehindCamera,
    DistortionParams,
    ExtrinsicTransform,
    IntrinsicMatrix,
    PixelCoord,
    Point3D,
    RotationMatrix,
    RotationVector,
    matrix_to_rodrigues,
    rodrigues_to_matrix,
    _check_distortion,
)

__all__ = [
    "Correspondence",
    "LMConfig",
    "PnPSolution",
    "FineTuneDelta",
    "TooFewPairs",
    "DegenerateConfiguration",
    "NumericalBreakdown",
    "MIN_PAIRS",
    "solve_pnp_linear",
    "refine_pnp_lm",
    "reprojection_residuals",
    "pose_jacobian",
    "apply_fine_tune",
]

MIN_PAIRS = 6

# sigma_min / sigma_second_min above this marks an ill-separated nullspace
DEGENERACY_RATIO = 0.1

# damping ceiling: normal equations unsolvable past this means breakdown
LAMBDA_MAX = 1e12


class TooFewPairs(ToolkitError):
    def __init__(self, got: int):
        self.got = got
        super().__init__(f"need at least {MIN_PAIRS} correspondences, got {got}")


class DegenerateConfiguration(ToolkitError):
    """The correspondence geometry does not pin down a unique pose."""


class NumericalBreakdown(ToolkitError):
    """Normal equations unsolvable even at maximum damping."""


@dataclass(frozen=True)
class Correspondence:
    """One (LiDAR 3D point, image pixel) pair, optionally tagged."""

    lidar_point: Point3D
    pixel: PixelCoord
    label: str = ""


@dataclass(frozen=True)
class LMConfig:
    """Damping schedule and stopping thresholds for the LM refinement."""

    lambda_init: float = 1e-3
    lambda_up: float = 10.0
    lambda_down: float = 10.0
    max_iters: int = 100
    cost_tol: float = 1e-12
    step_tol: float = 1e-12

    def __post_init__(self):
        for name in ("lambda_init", "lambda_up", "lambda_down", "max_iters", "cost_tol", "step_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lambda_up <= 1 or self.lambda_down <= 1:
            raise ValueError("lambda_up and lambda_down must exceed 1")


@dataclass(frozen=True)
class PnPSolution:
    """Refined pose plus the diagnostics the workflow reports.

    ``stop_reason`` records which criterion ended the loop ("step_tol",
    "cost_tol", "max_iters", or "cancelled"); ``cost_history`` holds the
    initial cost followed by every accepted-step cost, in order.
    """

    rvec: RotationVector
    tvec: np.ndarray
    rmse_px: float
    iterations: int
    converged: bool
    stop_reason: str
    cost_history: tuple[float, ...] = field(default=())

    def __post_init__(self):
        t = np.asarray(self.tvec, dtype=float).reshape(3)
        t.flags.writeable = False
        object.__setattr__(self, "tvec", t)
        if self.rmse_px < 0:
            raise ValueError("rmse_px must be non-negative")

    @property
    def extrinsic(self) -> ExtrinsicTransform:
        return ExtrinsicTransform(rodrigues_to_matrix(self.rvec), self.tvec)


@dataclass(frozen=True)
class FineTuneDelta:
    """Small manual pose increment: per-axis rotation (rad) and translation (m)."""

    d_rvec: tuple[float, float, float] = (0.0, 0.0, 0.0)
    d_tvec: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        vals = (*self.d_rvec, *self.d_tvec)
        if len(self.d_rvec) != 3 or len(self.d_tvec) != 3:
            raise ValueError("deltas must have three components each")
        for v in vals:
            if not math.isfinite(v):
                raise ValueError("delta components must be finite")
        if math.sqrt(sum(v * v for v in self.d_rvec)) > math.pi:
            raise ValueError("rotation increment magnitude must not exceed pi")


def _corr_arrays(corrs: Sequence[Correspondence]) -> tuple[np.ndarray, np.ndarray]:
    pts = np.array([[c.lidar_point.x, c.lidar_point.y, c.lidar_point.z] for c in corrs])
    obs = np.array([[c.pixel.u, c.pixel.v] for c in corrs])
    return pts, obs


def _residuals_arrays(
    rmat: np.ndarray, tvec: np.ndarray, pts: np.ndarray, obs: np.ndarray, K: IntrinsicMatrix
) -> tuple[np.ndarray, np.ndarray]:
    """Residual vector (predicted - observed, interleaved u,v) and depths."""
    pc = pts @ rmat.T + tvec
    z = pc[:, 2]
    res = np.empty(2 * len(pts))
    with np.errstate(divide="ignore", invalid="ignore"):
        res[0::2] = K.fx * pc[:, 0] / z + K.ox - obs[:, 0]
        res[1::2] = K.fy * pc[:, 1] / z + K.oy - obs[:, 1]
    return res, z


def reprojection_residuals(
    ext: ExtrinsicTransform,
    corrs: Sequence[Correspondence],
    K: IntrinsicMatrix,
    dist: DistortionParams | None = None,
) -> tuple[np.ndarray, float]:
    """Pixel residuals of a pose over correspondences, plus their RMSE.

    The vector has length 2 x n, ordered (u residual, v residual) per pair
    in input order.  Raises BehindCamera naming the first offending pair if
    any transformed point has non-positive depth.
    """
    _check_distortion(dist)
    if not corrs:
        return np.empty(0), 0.0
    pts, obs = _corr_arrays(corrs)
    res, z = _residuals_arrays(ext.rotation.matrix, ext.translation, pts, obs, K)
    bad = np.nonzero(z <= 0)[0]
    if bad.size:
        raise BehindCamera(float(z[bad[0]]), index=int(bad[0]))
    rmse = math.sqrt(float(res @ res) / res.size)
    return res, rmse


def _rotation_point_jacobians(rvec: np.ndarray, pts: np.ndarray, rmat: np.ndarray) -> np.ndarray:
    """d(R(rvec) @ p) / d(rvec) for each point, shape (n, 3, 3).

    Exact derivative with respect to the axis-angle components themselves
    (Gallego & Yezzi's compact formula), with the first-order limit at the
    origin.
    """
    n = len(pts)
    theta2 = float(rvec @ rvec)
    rp = pts @ rmat.T
    out = np.empty((n, 3, 3))
    if theta2 < 1e-16:
        # at v = 0: d(Rp)/dv = -[p]x
        for i, p in enumerate(pts):
            out[i] = np.array([[0, p[2], -p[1]], [-p[2], 0, p[0]], [p[1], -p[0], 0]])
        return out
    eye_minus_r = np.eye(3) - rmat
    for i in range(n):
        w = rp[i]
        vxw = np.cross(rvec, w)
        for j in range(3):
            col = (rvec[j] * vxw + np.cross(np.cross(rvec, eye_minus_r[:, j]), w)) / theta2
            out[i, :, j] = col
    return out


def pose_jacobian(
    rvec: RotationVector | np.ndarray,
    tvec: np.ndarray,
    corrs: Sequence[Correspondence],
    K: IntrinsicMatrix,
) -> np.ndarray:
    """Analytic Jacobian of the residual vector w.r.t. (rvec, tvec).

    Shape (2n, 6); columns are d/d(rx, ry, rz, tx, ty, tz).  All points must
    be in front of the camera.
    """
    rv = rvec.as_array() if isinstance(rvec, RotationVector) else np.asarray(rvec, dtype=float)
    tv = np.asarray(tvec, dtype=float).reshape(3)
    pts, _ = _corr_arrays(corrs)
    rmat = rodrigues_to_matrix(RotationVector(*rv)).matrix
    z = pts @ rmat[2] + tv[2]
    bad = np.nonzero(z <= 0)[0]
    if bad.size:
        raise BehindCamera(float(z[bad[0]]), index=int(bad[0]))
    return _pose_jacobian_arrays(rv, tv, pts, K)


def solve_pnp_linear(
    corrs: Sequence[Correspondence],
    K: IntrinsicMatrix,
    dist: DistortionParams | None = None,
) -> ExtrinsicTransform:
    """Direct linear transform pose initialization from >= 6 correspondences.

    Pixels are normalized by the intrinsics, the homogeneous 2n x 12 system
    is solved by the smallest right singular vector, the solution sign is
    fixed by requiring positive depth at the point centroid, scale comes
    from the rotation block's singular values, and the rotation block is
    projected to the nearest orthonormal matrix.

    Raises TooFewPairs, DegenerateConfiguration (ill-separated nullspace, as
    with an all-coplanar target), or BehindCamera when the recovered pose
    leaves some input point at non-positive depth.
    """
    _check_distortion(dist)
    if len(corrs) < MIN_PAIRS:
        raise TooFewPairs(len(corrs))
    pts, obs = _corr_arrays(corrs)
    xn = (obs[:, 0] - K.ox) / K.fx
    yn = (obs[:, 1] - K.oy) / K.fy

    n = len(corrs)
    a = np.zeros((2 * n, 12))
    hom = np.hstack([pts, np.ones((n, 1))])
    a[0::2, 0:4] = hom
    a[0::2, 8:12] = -xn[:, None] * hom
    a[1::2, 4:8] = hom
    a[1::2, 8:12] = -yn[:, None] * hom

    _, s, vt = np.linalg.svd(a)
    # a second near-zero singular value means the nullspace has dimension > 1
    # (coplanar targets produce four), so the ratio alone is noise there
    if s[-2] <= s[0] * 1e-12 or s[-1] / s[-2] > DEGENERACY_RATIO:
        raise DegenerateConfiguration(
            f"nullspace not separated: sigma_min/sigma_next = "
            f"{(s[-1] / s[-2]) if s[-2] > 0 else float('inf'):.3g}"
        )
    m = vt[-1].reshape(3, 4)

    centroid = np.append(pts.mean(axis=0), 1.0)
    if float(m[2] @ centroid) < 0:
        m = -m

    b = m[:, :3]
    u, sb, vbt = np.linalg.svd(b)
    scale = float(sb.mean())
    rot = u @ vbt
    if np.linalg.det(rot) < 0:
        rot = u @ np.diag([1.0, 1.0, -1.0]) @ vbt
    t = m[:, 3] / scale

    z = pts @ rot[2] + t[2]
    bad = np.nonzero(z <= 0)[0]
    if bad.size:
        raise BehindCamera(float(z[bad[0]]), index=int(bad[0]))
    return ExtrinsicTransform(RotationMatrix(rot), t)


def refine_pnp_lm(
    init: ExtrinsicTransform,
    corrs: Sequence[Correspondence],
    K: IntrinsicMatrix,
    cfg: LMConfig = LMConfig(),
    dist: DistortionParams | None = None,
    cancel: Callable[[], bool] | None = None,
) -> PnPSolution:
    """Damped least-squares refinement of an initial pose.

    Classic Levenberg-Marquardt on the 6-vector (axis-angle rotation,
    translation) with plain lambda*I damping: a step is accepted only if it
    strictly decreases the summed squared pixel error, lambda shrinks on
    acceptance and grows on rejection.  Accepted costs therefore form a
    non-increasing sequence.  A trial step that pushes any point behind the
    camera is rejected like any cost increase.

    ``cancel`` is polled once per iteration; returning True stops the loop
    with converged=False and stop_reason "cancelled".
    """
    _check_distortion(dist)
    if len(corrs) < MIN_PAIRS:
        raise TooFewPairs(len(corrs))
    pts, obs = _corr_arrays(corrs)

    rvec = matrix_to_rodrigues(init.rotation).as_array()
    tvec = np.array(init.translation, dtype=float)
    rmat = rodrigues_to_matrix(RotationVector(*rvec)).matrix
    res, z = _residuals_arrays(rmat, tvec, pts, obs, K)
    bad = np.nonzero(z <= 0)[0]
    if bad.size:
        raise BehindCamera(float(z[bad[0]]), index=int(bad[0]))
    cost = float(res @ res)
    cost_history = [cost]

    lam = cfg.lambda_init
    converged = False
    stop_reason = "max_iters"
    iterations = 0

    for _ in range(cfg.max_iters):
        iterations += 1
        if cancel is not None and cancel():
            stop_reason = "cancelled"
            break
        if cost == 0.0:
            converged = True
            stop_reason = "cost_tol"
            break

        jac = _pose_jacobian_arrays(rvec, tvec, pts, K)
        grad = jac.T @ res
        hess = jac.T @ jac

        while True:
            try:
                delta = np.linalg.solve(hess + lam * np.eye(6), -grad)
            except np.linalg.LinAlgError:
                delta = None
            if delta is not None and np.all(np.isfinite(delta)):
                break
            lam *= cfg.lambda_up
            if lam > LAMBDA_MAX:
                raise NumericalBreakdown(
                    f"normal equations unsolvable at lambda={lam:.3g}"
                )

        if float(np.linalg.norm(delta)) <= cfg.step_tol:
            converged = True
            stop_reason = "step_tol"
            break

        trial_rvec = rvec + delta[:3]
        trial_tvec = tvec + delta[3:]
        trial_rmat = rodrigues_to_matrix(RotationVector(*trial_rvec)).matrix
        trial_res, trial_z = _residuals_arrays(trial_rmat, trial_tvec, pts, obs, K)
        if np.any(trial_z <= 0) or not np.all(np.isfinite(trial_res)):
            trial_cost = math.inf
        else:
            trial_cost = float(trial_res @ trial_res)

        if trial_cost < cost:
            # canonicalize the axis-angle parameterization each accepted step
            rvec = matrix_to_rodrigues(trial_rmat).as_array()
            tvec = trial_tvec
            res = trial_res
            prev = cost
            cost = trial_cost
            cost_history.append(cost)
            lam /= cfg.lambda_down
            if prev - cost <= cfg.cost_tol * prev:
                converged = True
                stop_reason = "cost_tol"
                break
        else:
            lam *= cfg.lambda_up

    rmse = math.sqrt(cost / (2 * len(corrs))) if math.isfinite(cost) else math.inf
    return PnPSolution(
        rvec=RotationVector(*rvec),
        tvec=tvec,
        rmse_px=rmse,
        iterations=iterations,
        converged=converged,
        stop_reason=stop_reason,
        cost_history=tuple(cost_history),
    )


def _pose_jacobian_arrays(
    rvec: np.ndarray, tvec: np.ndarray, pts: np.ndarray, K: IntrinsicMatrix
) -> np.ndarray:
    rmat = rodrigues_to_matrix(RotationVector(*rvec)).matrix
    pc = pts @ rmat.T + tvec
    dp_dr = _rotation_point_jacobians(rvec, pts, rmat)
    jac = np.empty((2 * len(pts), 6))
    for i in range(len(pts)):
        x, y, zi = pc[i]
        duv_dpc = np.array(
            [[K.fx / zi, 0.0, -K.fx * x / (zi * zi)], [0.0, K.fy / zi, -K.fy * y / (zi * zi)]]
        )
        jac[2 * i : 2 * i + 2, :3] = duv_dpc @ dp_dr[i]
        jac[2 * i : 2 * i + 2, 3:] = duv_dpc
    return jac


def apply_fine_tune(ext: ExtrinsicTransform, delta: FineTuneDelta) -> ExtrinsicTransform:
    """Apply a manual nudge: left-compose the rotation increment, add the
    translation increment.

    Left composition applies the increment in the camera frame, so each
    control axis nudges the overlay the same way regardless of the current
    pose.  The inverse nudge (negated increments) restores the original.
    """
    d_rot = rodrigues_to_matrix(RotationVector(*delta.d_rvec)).matrix
    new_rot = d_rot @ ext.rotation.matrix
    new_t = ext.translation + np.asarray(delta.d_tvec, dtype=float)
    # re-orthonormalize: float drift from repeated nudges must not accumulate
    u, _, vt = np.linalg.svd(new_rot)
    rot = u @ vt
    if np.linalg.det(rot) < 0:
        rot = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return ExtrinsicTransform(RotationMatrix(rot), new_t)
