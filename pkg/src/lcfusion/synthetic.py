"""Synthetic bench scenes for tests and demos.

Builds the calibration geometry the projection stack is exercised against:
flat poster boards facing the sensor at chosen distances, a known
LiDAR-to-camera pose, and the point/pixel correspondences an operator would
have picked by hand.  The LiDAR frame is x forward, y left, z up; the
camera looks down the LiDAR +x axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fusion import BoardRegion, PointCloudFrame
from .geometry import (
    ExtrinsicTransform,
    IntrinsicMatrix,
    PixelCoord,
    Point3D,
    RotationMatrix,
    RotationVector,
    project_lidar_point,
    rodrigues_to_matrix,
)
from .pnp import Correspondence

DEFAULT_INTRINSICS = IntrinsicMatrix(fx=800.0, fy=800.0, ox=640.0, oy=360.0)
IMAGE_WIDTH = 1280
IMAGE_HEIGHT = 720


def lidar_to_camera_base() -> np.ndarray:
    """Axis permutation from LiDAR (x fwd, y left, z up) to camera (z fwd,
    x right, y down)."""
    return np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])


def make_pose(
    rvec_perturb=(0.04, -0.03, 0.02), translation=(0.05, -0.08, 0.10)
) -> ExtrinsicTransform:
    """A generic ground-truth extrinsic: the axis permutation plus a small
    rotation offset and a small mounting translation."""
    r = rodrigues_to_matrix(RotationVector(*rvec_perturb)).matrix @ lidar_to_camera_base()
    return ExtrinsicTransform(RotationMatrix(r), np.asarray(translation, dtype=float))


def board_corners(center, half_width: float, half_height: float) -> list[Point3D]:
    """Corners of an upright board facing the sensor, clockwise from top-left
    as seen from the origin."""
    cx, cy, cz = center
    return [
        Point3D(cx, cy + half_width, cz + half_height),
        Point3D(cx, cy - half_width, cz + half_height),
        Point3D(cx, cy - half_width, cz - half_height),
        Point3D(cx, cy + half_width, cz - half_height),
    ]


def board_grid(center, half_width: float, half_height: float, n: int = 20) -> np.ndarray:
    """(n*n, 3) grid of points covering the board face."""
    cx, cy, cz = center
    ys = np.linspace(cy - half_width, cy + half_width, n)
    zs = np.linspace(cz - half_height, cz + half_height, n)
    yy, zz = np.meshgrid(ys, zs)
    return np.column_stack([np.full(yy.size, float(cx)), yy.ravel(), zz.ravel()])


def make_correspondences(
    pose: ExtrinsicTransform,
    K: IntrinsicMatrix = DEFAULT_INTRINSICS,
    board_centers=((3.0, 1.5, 0.2), (6.0, 0.0, 0.0), (9.0, -2.5, -0.3)),
    half_width: float = 0.45,
    half_height: float = 0.3,
    pixel_noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
) -> list[Correspondence]:
    """Corner correspondences for boards spread over the image, as picked in
    the manual workflow (4 corners per board)."""
    if rng is None:
        rng = np.random.default_rng(0)
    corrs = []
    for b, center in enumerate(board_centers):
        for c, corner in enumerate(board_corners(center, half_width, half_height)):
            px = project_lidar_point(K, pose, corner)
            u, v = px.u, px.v
            if pixel_noise_sigma > 0:
                u += rng.normal(scale=pixel_noise_sigma)
                v += rng.normal(scale=pixel_noise_sigma)
            corrs.append(Correspondence(corner, PixelCoord(u, v), label=f"board{b}-corner{c}"))
    return corrs


@dataclass(frozen=True)
class BoardScene:
    """An evaluation scene: one target board inside a sparse background."""

    pose: ExtrinsicTransform
    intrinsics: IntrinsicMatrix
    image_width: int
    image_height: int
    cloud: PointCloudFrame
    board: BoardRegion
    board_point_count: int
    calibration_corrs: list[Correspondence]


def make_board_scene(
    distance_m: float,
    pose: ExtrinsicTransform | None = None,
    K: IntrinsicMatrix = DEFAULT_INTRINSICS,
    image_width: int = IMAGE_WIDTH,
    image_height: int = IMAGE_HEIGHT,
    board_half: float = 0.2,
    grid_n: int = 20,
    timestamp_ns: int = 0,
) -> BoardScene:
    """A poster board at ``distance_m`` from the LiDAR origin plus background
    structure (ground strip and side posts) that projects outside the board.

    The board polygon is the projection of the physical corners under the
    ground-truth pose.  Construction asserts that no background point lands
    inside the polygon, so a correct calibration scores TPR = 1.0.
    """
    if pose is None:
        pose = make_pose()
    center = (distance_m, 0.0, 0.0)
    board_pts = board_grid(center, board_half, board_half, grid_n)

    # ground strip below the sensor and two posts flanking the board
    xs = np.linspace(1.5, distance_m + 3.0, 40)
    ground = np.column_stack([xs, np.full(xs.size, 0.9), np.full(xs.size, -1.4)])
    post_z = np.linspace(-1.0, 1.0, 25)
    post_left = np.column_stack(
        [np.full(post_z.size, distance_m * 0.8), np.full(post_z.size, 2.0), post_z]
    )
    post_right = np.column_stack(
        [np.full(post_z.size, distance_m * 1.2), np.full(post_z.size, -2.2), post_z]
    )
    background = np.vstack([ground, post_left, post_right])

    corners = board_corners(center, board_half, board_half)
    polygon = [project_lidar_point(K, pose, c) for c in corners]
    board = BoardRegion(
        polygon=np.array([[p.u, p.v] for p in polygon]),
        ground_truth_range_m=distance_m,
        name=f"board-{distance_m:g}m",
    )

    for p in background:
        try:
            px = project_lidar_point(K, pose, Point3D(*p))
        except Exception:
            continue
        if board.contains(px.u, px.v):
            raise AssertionError("background point projects onto the board polygon")

    xyz = np.vstack([board_pts, background])
    cloud = PointCloudFrame(
        timestamp_ns=timestamp_ns,
        xyz=xyz,
        intensity=np.full(len(xyz), 200, dtype=np.uint8),
    )
    return BoardScene(
        pose=pose,
        intrinsics=K,
        image_width=image_width,
        image_height=image_height,
        cloud=cloud,
        board=board,
        board_point_count=len(board_pts),
        calibration_corrs=make_correspondences(pose, K),
    )
