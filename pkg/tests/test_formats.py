import math

import numpy as np
import pytest

from lcfusion import formats
from lcfusion.fusion import FusionReport, OverlayResult
from lcfusion.geometry import PixelCoord, Point3D, RotationVector
from lcfusion.kinematics import TtcReport
from lcfusion.pnp import Correspondence, PnPSolution


class TestIntrinsics:
    TEXT = """
# bench camera
fx 800.0
fy 801.5
ox 640.0
oy 360.0
image_width 1280
image_height 720
"""

    def test_parse(self):
        cfg = formats.parse_intrinsics(self.TEXT)
        assert cfg.intrinsics.fx == 800.0
        assert cfg.intrinsics.fy == 801.5
        assert cfg.image_width == 1280
        assert cfg.distortion.is_zero

    def test_round_trip(self):
        cfg = formats.parse_intrinsics(self.TEXT)
        again = formats.parse_intrinsics(formats.format_intrinsics(cfg))
        assert again == cfg

    def test_missing_key(self):
        with pytest.raises(formats.ParseError):
            formats.parse_intrinsics("fx 800\nfy 800\nox 1\noy 1\nimage_width 10\n")

    def test_unknown_key_reports_line(self):
        with pytest.raises(formats.ParseError) as ei:
            formats.parse_intrinsics("fx 800\nbogus 1\n")
        assert ei.value.line == 2

    def test_distortion_keys(self):
        cfg = formats.parse_intrinsics(self.TEXT + "k1 0.01\n")
        assert cfg.distortion.k1 == 0.01
        assert not cfg.distortion.is_zero


class TestCorrespondences:
    def test_round_trip(self):
        corrs = [
            Correspondence(Point3D(1.5, -0.25, 3.0), PixelCoord(640.25, 359.5), "b0-c0"),
            Correspondence(Point3D(9.0, 2.0, -0.5), PixelCoord(100.0, 700.0), "b2-c3"),
        ]
        text = formats.format_correspondences(corrs)
        assert formats.parse_correspondences(text) == corrs

    def test_comments_and_blanks_skipped(self):
        text = "# header\n\nb0 640 360 1 2 3\n"
        corrs = formats.parse_correspondences(text)
        assert len(corrs) == 1
        assert corrs[0].pixel == PixelCoord(640, 360)
        assert corrs[0].lidar_point == Point3D(1, 2, 3)

    def test_field_count_error_carries_line(self):
        with pytest.raises(formats.ParseError) as ei:
            formats.parse_correspondences("b0 640 360 1 2\n", source="pairs.txt")
        assert "pairs.txt:1" in str(ei.value)


class TestSolution:
    def test_round_trip(self):
        sol = PnPSolution(
            RotationVector(0.04, -0.03, 0.02),
            np.array([0.05, -0.08, 0.1]),
            1.25e-7,
            9,
            True,
            "cost_tol",
        )
        text = formats.format_solution(sol)
        again = formats.parse_solution(text)
        assert again.rvec == sol.rvec
        np.testing.assert_array_equal(again.tvec, sol.tvec)
        assert again.rmse_px == sol.rmse_px
        assert again.iterations == 9
        assert again.converged and again.stop_reason == "cost_tol"

    def test_bad_file(self):
        with pytest.raises(formats.ParseError):
            formats.parse_solution("rvec 1 2\n")


class TestBoards:
    def test_round_trip(self):
        text = "b59 5.9 600 300 700 300 700 420 600 420\n"
        boards = formats.parse_board_regions(text)
        assert len(boards) == 1
        assert boards[0].name == "b59"
        assert boards[0].ground_truth_range_m == 5.9
        again = formats.parse_board_regions(formats.format_board_regions(boards))
        np.testing.assert_array_equal(again[0].polygon, boards[0].polygon)

    def test_odd_coordinate_count(self):
        with pytest.raises(formats.ParseError):
            formats.parse_board_regions("b 5.9 1 2 3 4 5 6 7\n")

    def test_nonconvex_rejected_with_line(self):
        with pytest.raises(formats.ParseError) as ei:
            formats.parse_board_regions("b 5.9 0 0 10 10 10 0 0 10\n")
        assert ei.value.line == 1


class TestOverlayCsv:
    def test_round_trip(self):
        ov = OverlayResult(
            np.array([3, 5, 9]),
            np.array([[100.5, 200.25], [640.0, 360.0], [12.0, 700.0]]),
            np.array([3.8, 5.9, 9.6]),
            1280,
            720,
        )
        text = formats.overlay_to_csv(ov)
        assert text.splitlines()[0] == "point_index,u,v,range_m"
        again = formats.overlay_from_csv(text, image_width=1280, image_height=720)
        np.testing.assert_array_equal(again.indices, ov.indices)
        np.testing.assert_array_equal(again.pixels, ov.pixels)
        np.testing.assert_array_equal(again.ranges, ov.ranges)

    def test_dims_inferred_when_missing(self):
        text = "point_index,u,v,range_m\n0,100.0,50.0,4.0\n"
        ov = formats.overlay_from_csv(text)
        assert ov.image_width >= 101 and ov.image_height >= 51

    def test_header_required(self):
        with pytest.raises(formats.ParseError):
            formats.overlay_from_csv("0,1.0,2.0,3.0\n")


class TestReportCsv:
    def test_format(self):
        text = formats.reports_to_csv([FusionReport("b59", 360, 0, 1.0, 0.05)])
        lines = text.splitlines()
        assert lines[0] == "board,tp,wrong,tpr,tolerance"
        assert lines[1] == "b59,360,0,1.0,0.05"


class TestTracksCsv:
    def test_enu_tracks(self):
        text = (
            "id,timestamp_ns,east,north,up\n"
            "ego,0,0.0,0.0,0.0\n"
            "ego,1000000000,2.0,0.0,0.0\n"
            "car,0,20.0,0.0,0.0\n"
            "car,1000000000,20.0,0.0,0.0\n"
        )
        tracks = formats.parse_tracks_csv(text)
        assert set(tracks) == {"ego", "car"}
        assert tracks["ego"].samples[1].east_m == 2.0

    def test_geo_tracks_share_first_origin(self):
        text = (
            "id,timestamp_ns,lat,lon,alt\n"
            "ego,0,39.7700,-86.1600,200.0\n"
            "ego,1000000000,39.7701,-86.1600,200.0\n"
            "car,0,39.7702,-86.1600,200.0\n"
            "car,1000000000,39.7702,-86.1600,200.0\n"
        )
        tracks = formats.parse_tracks_csv(text)
        assert tracks["ego"].samples[0].north_m == 0.0
        # car sits two ego-steps north of the shared origin
        assert tracks["car"].samples[0].north_m == pytest.approx(
            2 * tracks["ego"].samples[1].north_m, rel=1e-9
        )

    def test_bad_header(self):
        with pytest.raises(formats.ParseError):
            formats.parse_tracks_csv("id,time,x,y,z\n")


class TestTtcCsv:
    def test_none_ttc_prints_empty(self):
        text = formats.ttc_reports_to_csv(
            [TtcReport(0, 20.0, 5.0, 4.0), TtcReport(1, 25.0, -1.0, None)]
        )
        lines = text.splitlines()
        assert lines[0] == "t_ns,range_m,closing_speed_mps,ttc_s"
        assert lines[1] == "0,20.0,5.0,4.0"
        assert lines[2] == "1,25.0,-1.0,"
