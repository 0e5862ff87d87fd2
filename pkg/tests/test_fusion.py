import math

import numpy as np
import pytest

from lcfusion import synthetic
from lcfusion.fusion import (
    BoardRegion,
    DimensionMismatch,
    FusionReport,
    NoPointsOnBoard,
    OverlayResult,
    PointCloudFrame,
    evaluate_tpr,
    project_cloud,
    render_overlay,
)
from lcfusion.geometry import (
    BehindCamera,
    ExtrinsicTransform,
    Point3D,
    project_camera_point,
    transform_point,
)

K = synthetic.DEFAULT_INTRINSICS
W, H = synthetic.IMAGE_WIDTH, synthetic.IMAGE_HEIGHT


def empty_frame():
    return PointCloudFrame(0, np.empty((0, 3)), np.empty(0, dtype=np.uint8))


def brute_force_overlay(frame, K, ext, width, height):
    """Per-point filter through the scalar geometry path (the oracle)."""
    entries = []
    for i, (p, _inten) in enumerate(frame.points):
        pc = transform_point(ext, p)
        if pc.z <= 0:
            continue
        px = project_camera_point(K, pc)
        if not (0 <= px.u < width and 0 <= px.v < height):
            continue
        r = math.sqrt(p.x * p.x + p.y * p.y + p.z * p.z)
        if r <= 0:
            continue
        entries.append((i, px.u, px.v, r))
    return entries


class TestProjectCloud:
    def test_empty_frame(self):
        ov = project_cloud(empty_frame(), K, ExtrinsicTransform.identity(), W, H)
        assert len(ov) == 0

    def test_single_point_on_principal_ray(self):
        frame = PointCloudFrame(0, np.array([[0.0, 0.0, 5.0]]), np.array([7], dtype=np.uint8))
        ov = project_cloud(frame, K, ExtrinsicTransform.identity(), W, H)
        assert len(ov) == 1
        i, px, r = next(iter(ov.projected))
        assert i == 0
        assert (px.u, px.v) == (640.0, 360.0)
        assert r == 5.0

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(31)
        xyz = rng.uniform(-12, 12, size=(1000, 3))
        frame = PointCloudFrame(0, xyz, rng.integers(0, 256, 1000).astype(np.uint8))
        ext = synthetic.make_pose()
        ov = project_cloud(frame, K, ext, W, H)
        got = [(int(i), float(u), float(v), float(r))
               for i, (u, v), r in zip(ov.indices, ov.pixels, ov.ranges)]
        assert got == brute_force_overlay(frame, K, ext, W, H)

    def test_entries_reproject_in_bounds(self):
        scene = synthetic.make_board_scene(5.9)
        ov = project_cloud(scene.cloud, K, scene.pose, W, H)
        for i, px, r in ov.projected:
            again = project_camera_point(K, transform_point(scene.pose, Point3D(*scene.cloud.xyz[i])))
            assert abs(again.u - px.u) < 1e-9 and abs(again.v - px.v) < 1e-9
            assert 0 <= px.u < W and 0 <= px.v < H

    def test_zero_range_point_dropped(self):
        shifted = ExtrinsicTransform(
            ExtrinsicTransform.identity().rotation, np.array([0.0, 0.0, 4.0])
        )
        frame = PointCloudFrame(
            0, np.array([[0.0, 0.0, 0.0], [0.1, 0.0, 0.0]]), np.array([1, 1], dtype=np.uint8)
        )
        ov = project_cloud(frame, K, shifted, W, H)
        assert list(ov.indices) == [1]


class TestRenderOverlay:
    def test_empty_overlay_copies_input(self):
        img = np.random.default_rng(32).integers(0, 256, (H, W, 3)).astype(np.uint8)
        ov = project_cloud(empty_frame(), K, ExtrinsicTransform.identity(), W, H)
        out = render_overlay(img, ov)
        assert out is not img
        np.testing.assert_array_equal(out, img)

    def test_radius_zero_paints_single_pixel(self):
        img = np.zeros((H, W, 3), dtype=np.uint8)
        ov = OverlayResult(np.array([0]), np.array([[640.0, 360.0]]), np.array([5.0]), W, H)
        out = render_overlay(img, ov, radius=0)
        changed = np.argwhere((out != img).any(axis=2))
        assert [tuple(c) for c in changed] == [(360, 640)]
        np.testing.assert_array_equal(out[360, 640], [0, 255, 0])

    def test_corner_dot_is_clipped(self):
        img = np.zeros((H, W, 3), dtype=np.uint8)
        ov = OverlayResult(np.array([0]), np.array([[0.0, 0.0]]), np.array([5.0]), W, H)
        out = render_overlay(img, ov, radius=3)
        assert out.shape == img.shape
        np.testing.assert_array_equal(out[0, 0], [0, 255, 0])

    def test_idempotent_rendering(self):
        img = np.random.default_rng(33).integers(0, 256, (H, W, 3)).astype(np.uint8)
        ov = OverlayResult(
            np.arange(3),
            np.array([[100.2, 50.7], [600.0, 300.0], [10.0, 700.0]]),
            np.array([3.0, 4.0, 5.0]),
            W,
            H,
        )
        once = render_overlay(img, ov)
        twice = render_overlay(once, ov)
        np.testing.assert_array_equal(once, twice)

    def test_dimension_mismatch(self):
        img = np.zeros((10, 10, 3), dtype=np.uint8)
        ov = OverlayResult(np.array([0]), np.array([[1.0, 1.0]]), np.array([2.0]), W, H)
        with pytest.raises(DimensionMismatch):
            render_overlay(img, ov)


def square_board(gt, name="b"):
    return BoardRegion(np.array([[100, 100], [200, 100], [200, 200], [100, 200]], dtype=float), gt, name)


def overlay_at(pixels, ranges):
    pixels = np.asarray(pixels, dtype=float)
    return OverlayResult(np.arange(len(pixels)), pixels, np.asarray(ranges, dtype=float), W, H)


class TestEvaluateTpr:
    def test_correct_calibration_scores_one(self):
        for d in (3.8, 5.9, 9.6):
            scene = synthetic.make_board_scene(d)
            ov = project_cloud(scene.cloud, K, scene.pose, W, H)
            rep = evaluate_tpr(ov, scene.board, tolerance_fraction=0.05)
            assert rep.tpr == 1.0
            assert rep.wrong == 0
            # edge-of-board grid points sit within float epsilon of the
            # polygon boundary; at least the full interior must be counted
            assert rep.tp >= 18 * 18

    def test_all_out_of_tolerance(self):
        ov = overlay_at([[150, 150]] * 10, [10.0] * 10)
        rep = evaluate_tpr(ov, square_board(5.0), 0.05)
        assert rep.tpr == 0.0 and rep.wrong == 10

    def test_eight_of_ten(self):
        ranges = [5.0] * 8 + [9.0, 11.0]
        rep = evaluate_tpr(overlay_at([[150, 150]] * 10, ranges), square_board(5.0), 0.05)
        assert rep.tp == 8 and rep.wrong == 2
        assert rep.tpr == pytest.approx(0.8)

    def test_no_points_on_board(self):
        ov = overlay_at([[500, 500]], [5.0])
        with pytest.raises(NoPointsOnBoard):
            evaluate_tpr(ov, square_board(5.0), 0.05)

    def test_boundary_pixel_counts_inside(self):
        rep = evaluate_tpr(overlay_at([[100, 150]], [5.0]), square_board(5.0), 0.05)
        assert rep.tp == 1

    def test_tolerance_monotonicity(self):
        rng = np.random.default_rng(34)
        ranges = rng.uniform(4, 6, 50)
        ov = overlay_at([[150, 150]] * 50, ranges)
        last = -1.0
        for tol in (0.01, 0.02, 0.05, 0.1, 0.2, 0.5):
            tpr = evaluate_tpr(ov, square_board(5.0), tol).tpr
            assert tpr >= last
            last = tpr

    def test_tpr_bounds(self):
        rng = np.random.default_rng(35)
        for _ in range(20):
            ranges = rng.uniform(1, 12, 20)
            rep = evaluate_tpr(overlay_at([[150, 150]] * 20, ranges), square_board(5.0), 0.05)
            assert 0.0 <= rep.tpr <= 1.0
            assert rep.tp + rep.wrong == 20

    def test_rejects_nonpositive_tolerance(self):
        with pytest.raises(ValueError):
            evaluate_tpr(overlay_at([[150, 150]], [5.0]), square_board(5.0), 0.0)


class TestTypes:
    def test_frame_caps_point_count(self):
        with pytest.raises(ValueError):
            PointCloudFrame(0, np.zeros((131_073, 3)), np.zeros(131_073, dtype=np.uint8))

    def test_frame_rejects_negative_timestamp(self):
        with pytest.raises(ValueError):
            PointCloudFrame(-1, np.zeros((1, 3)), np.zeros(1, dtype=np.uint8))

    def test_overlay_rejects_out_of_bounds(self):
        with pytest.raises(ValueError):
            OverlayResult(np.array([0]), np.array([[W + 1.0, 0.0]]), np.array([1.0]), W, H)

    def test_board_requires_convex(self):
        bow_tie = np.array([[0, 0], [10, 10], [10, 0], [0, 10]], dtype=float)
        with pytest.raises(ValueError):
            BoardRegion(bow_tie, 5.0, "x")

    def test_board_requires_positive_range(self):
        with pytest.raises(ValueError):
            square_board(0.0)

    def test_report_fields(self):
        rep = FusionReport("b", 8, 2, 0.8, 0.05)
        assert rep.tp == 8 and rep.wrong == 2
