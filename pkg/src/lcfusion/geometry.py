"""Camera model and rigid-body transforms for LiDAR-to-image projection.

Conventions: pixel origin at the top-left corner, u rightward, v downward;
all angles in radians, all distances in meters.  The camera is the standard
pinhole: a point in camera coordinates (x, y, z) with z > 0 maps to

    u = fx * x / z + ox
    v = fy * y / z + oy

and the LiDAR-to-camera change of basis is Pc = R * Pw + T.

Everything here is pure and stateless.  Scalar operations have vectorized
counterparts (``transform_points``, ``project_points``) that evaluate the
same floating-point expressions elementwise, so the two paths agree
bit-for-bit on every point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ToolkitError

__all__ = [
    "BehindCamera",
    "NotSupported",
    "Point3D",
    "PixelCoord",
    "IntrinsicMatrix",
    "DistortionParams",
    "RotationVector",
    "RotationMatrix",
    "ExtrinsicTransform",
    "rodrigues_to_matrix",
    "matrix_to_rodrigues",
    "transform_point",
    "transform_points",
    "project_camera_point",
    "project_points",
    "project_lidar_point",
]


class BehindCamera(ToolkitError):
    """Point has non-positive depth in the camera frame and cannot be imaged."""

    def __init__(self, z: float, index: int | None = None):
        self.z = float(z)
        self.index = index
        where = f" (pair {index})" if index is not None else ""
        super().__init__(f"point behind camera{where}: z={z} <= 0")


class NotSupported(ToolkitError):
    """Requested a capability that is intentionally not implemented."""


def _require_finite(label: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"{label}: components must be finite, got {v!r}")


@dataclass(frozen=True)
class Point3D:
    """A point in the LiDAR (world) frame, meters."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        _require_finite("Point3D", self.x, self.y, self.z)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


@dataclass(frozen=True)
class PixelCoord:
    """Real-valued pixel coordinates (u = column, v = row).

    Rounding to integer pixels happens only at overlay rendering time.
    """

    u: float
    v: float

    def __post_init__(self):
        _require_finite("PixelCoord", self.u, self.v)


@dataclass(frozen=True)
class IntrinsicMatrix:
    """Pinhole camera parameters: focal lengths and principal point, in pixels."""

    fx: float
    fy: float
    ox: float
    oy: float

    def __post_init__(self):
        _require_finite("IntrinsicMatrix", self.fx, self.fy, self.ox, self.oy)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    def as_matrix(self) -> np.ndarray:
        """The 3x3 projection matrix with the conventional (0, 0, 1) bottom row."""
        return np.array(
            [[self.fx, 0.0, self.ox], [0.0, self.fy, self.oy], [0.0, 0.0, 1.0]], dtype=float
        )


@dataclass(frozen=True)
class DistortionParams:
    """Lens distortion coefficients (radial k1, k2, k3; tangential p1, p2).

    Carried through interfaces for completeness, but this toolkit models
    low-FOV lenses only: any non-zero coefficient is rejected with
    NotSupported instead of being silently ignored.
    """

    k1: float = 0.0
    k2: float = 0.0
    p1: float = 0.0
    p2: float = 0.0
    k3: float = 0.0

    def __post_init__(self):
        _require_finite("DistortionParams", self.k1, self.k2, self.p1, self.p2, self.k3)

    @property
    def is_zero(self) -> bool:
        return self.k1 == 0.0 and self.k2 == 0.0 and self.p1 == 0.0 and self.p2 == 0.0 and self.k3 == 0.0


def _check_distortion(dist: DistortionParams | None) -> None:
    if dist is not None and not dist.is_zero:
        raise NotSupported("non-zero lens distortion is not supported; coefficients must all be zero")


@dataclass(frozen=True)
class RotationVector:
    """Axis-angle rotation: direction is the axis, magnitude the angle in radians."""

    rx: float
    ry: float
    rz: float

    def __post_init__(self):
        _require_finite("RotationVector", self.rx, self.ry, self.rz)

    def as_array(self) -> np.ndarray:
        return np.array([self.rx, self.ry, self.rz], dtype=float)

    @property
    def angle(self) -> float:
        return math.sqrt(self.rx * self.rx + self.ry * self.ry + self.rz * self.rz)


_ORTHONORMAL_ATOL = 1e-9


@dataclass(frozen=True, eq=False)
class RotationMatrix:
    """A proper 3x3 rotation: orthonormal within 1e-9 with determinant +1."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"rotation matrix must be 3x3, got shape {m.shape}")
        _validate_rotation(m, atol=_ORTHONORMAL_ATOL)
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "RotationMatrix":
        return cls(np.eye(3))

    def as_array(self) -> np.ndarray:
        return np.array(self.matrix)


def _validate_rotation(m: np.ndarray, atol: float) -> None:
    if not np.all(np.isfinite(m)):
        raise ValueError("rotation matrix has non-finite entries")
    err = np.abs(m.T @ m - np.eye(3)).max()
    if err > atol:
        raise ValueError(f"matrix is not orthonormal: max |R'R - I| = {err:.3e} > {atol:g}")
    det = float(np.linalg.det(m))
    if abs(det - 1.0) > atol:
        raise ValueError(f"matrix determinant {det} is not +1 within {atol:g}")


@dataclass(frozen=True, eq=False)
class ExtrinsicTransform:
    """Rigid change of basis from the LiDAR (world) frame to the camera frame."""

    rotation: RotationMatrix
    translation: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(3)
        _require_finite("translation", *t.tolist())
        t = t.copy()
        t.flags.writeable = False
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "ExtrinsicTransform":
        return cls(RotationMatrix.identity(), np.zeros(3))

    @classmethod
    def from_rt(cls, rotation: np.ndarray, translation) -> "ExtrinsicTransform":
        return cls(RotationMatrix(rotation), np.asarray(translation, dtype=float))

    @classmethod
    def from_vectors(cls, rvec: RotationVector, tvec) -> "ExtrinsicTransform":
        return cls(rodrigues_to_matrix(rvec), np.asarray(tvec, dtype=float))

    def as_matrix4(self) -> np.ndarray:
        """The homogeneous 4x4 [R T; 0 1] matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation.matrix
        m[:3, 3] = self.translation
        return m


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]], dtype=float
    )


def rodrigues_to_matrix(rvec: RotationVector) -> RotationMatrix:
    """Expand an axis-angle vector into the rotation matrix it encodes.

    The zero vector maps to the identity.  The returned matrix rotates by
    ``|rvec|`` radians about ``rvec / |rvec|``.
    """
    v = rvec.as_array()
    theta2 = float(v @ v)
    theta = math.sqrt(theta2)
    k = _skew(v)
    if theta < 1e-6:
        # series for sin(t)/t and (1-cos t)/t^2; exact enough at this scale
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / theta2
    m = np.eye(3) + a * k + b * (k @ k)
    return RotationMatrix(m)


def matrix_to_rodrigues(rotation: RotationMatrix | np.ndarray) -> RotationVector:
    """Recover the axis-angle vector of a rotation matrix.

    The returned angle lies in [0, pi].  At exactly pi the axis sign is
    ambiguous; the representative whose first non-zero component is positive
    is returned.  Raw arrays are accepted and rejected if they violate
    orthonormality beyond 1e-6.
    """
    if isinstance(rotation, RotationMatrix):
        m = rotation.matrix
    else:
        m = np.asarray(rotation, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"rotation matrix must be 3x3, got shape {m.shape}")
        _validate_rotation(m, atol=1e-6)

    # antisymmetric part encodes sin(theta) * axis
    s_vec = np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
    sin_theta = 0.5 * math.sqrt(float(s_vec @ s_vec))
    cos_theta = 0.5 * (float(np.trace(m)) - 1.0)
    theta = math.atan2(sin_theta, cos_theta)

    if theta < 1e-10:
        return RotationVector(*(0.5 * s_vec))

    if theta < math.pi - 1e-6:
        axis = s_vec / (2.0 * sin_theta)
    else:
        # near pi the antisymmetric part vanishes; use k*k' = (R + I)/2
        b = 0.25 * (m + m.T) + 0.5 * np.eye(3)
        i = int(np.argmax(np.diag(b)))
        axis = b[:, i] / math.sqrt(max(float(b[i, i]), 1e-300))
        axis = axis / math.sqrt(float(axis @ axis))
        if sin_theta > 1e-13:
            if float(axis @ s_vec) < 0.0:
                axis = -axis
        else:
            for c in axis:
                if abs(c) > 1e-12:
                    if c < 0.0:
                        axis = -axis
                    break
    r = theta * axis
    return RotationVector(float(r[0]), float(r[1]), float(r[2]))


def transform_point(ext: ExtrinsicTransform, pw: Point3D) -> Point3D:
    """Apply the change of basis Pc = R * Pw + T to one world point."""
    m = ext.rotation.matrix
    t = ext.translation
    x = m[0, 0] * pw.x + m[0, 1] * pw.y + m[0, 2] * pw.z + t[0]
    y = m[1, 0] * pw.x + m[1, 1] * pw.y + m[1, 2] * pw.z + t[1]
    z = m[2, 0] * pw.x + m[2, 1] * pw.y + m[2, 2] * pw.z + t[2]
    return Point3D(float(x), float(y), float(z))


def transform_points(ext: ExtrinsicTransform, xyz: np.ndarray) -> np.ndarray:
    """Vectorized transform of an (N, 3) array of world points.

    Evaluates the same expression as transform_point elementwise, so results
    match the scalar path exactly.
    """
    xyz = np.asarray(xyz, dtype=float)
    m = ext.rotation.matrix
    t = ext.translation
    x, y, z = xyz[:, 0], xyz[:, 1], xyz[:, 2]
    out = np.empty_like(xyz)
    out[:, 0] = m[0, 0] * x + m[0, 1] * y + m[0, 2] * z + t[0]
    out[:, 1] = m[1, 0] * x + m[1, 1] * y + m[1, 2] * z + t[1]
    out[:, 2] = m[2, 0] * x + m[2, 1] * y + m[2, 2] * z + t[2]
    return out


def project_camera_point(
    K: IntrinsicMatrix, pc: Point3D, dist: DistortionParams | None = None
) -> PixelCoord:
    """Project a camera-frame point to the image plane.

    Raises BehindCamera when the depth is not positive; performs no
    in-bounds check (callers clip against the image if they need to).
    """
    _check_distortion(dist)
    if pc.z <= 0.0:
        raise BehindCamera(pc.z)
    u = K.fx * pc.x / pc.z + K.ox
    v = K.fy * pc.y / pc.z + K.oy
    return PixelCoord(float(u), float(v))


def project_points(K: IntrinsicMatrix, pc: np.ndarray) -> np.ndarray:
    """Vectorized pinhole projection of (N, 3) camera-frame points with z > 0.

    Same elementwise expression as project_camera_point; the caller must
    have filtered out non-positive depths.
    """
    pc = np.asarray(pc, dtype=float)
    x, y, z = pc[:, 0], pc[:, 1], pc[:, 2]
    uv = np.empty((pc.shape[0], 2))
    uv[:, 0] = K.fx * x / z + K.ox
    uv[:, 1] = K.fy * y / z + K.oy
    return uv


def project_lidar_point(
    K: IntrinsicMatrix,
    ext: ExtrinsicTransform,
    pw: Point3D,
    dist: DistortionParams | None = None,
) -> PixelCoord:
    """Full LiDAR-to-pixel projection: extrinsic change of basis, then pinhole."""
    return project_camera_point(K, transform_point(ext, pw), dist)
