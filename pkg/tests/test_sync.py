import numpy as np
import pytest

from lcfusion.fusion import PointCloudFrame
from lcfusion.ingest import BagRecord, SyncStats, UnsortedInput, synchronize

MS = 1_000_000


def lidar_at(ts_list):
    return [
        PointCloudFrame(ts, np.zeros((1, 3)), np.zeros(1, dtype=np.uint8))
        for ts in ts_list
    ]


def records_at(ts_list, topic=2):
    return [BagRecord(topic, ts, b"") for ts in ts_list]


def ten_hz(start_ms, count):
    return [(start_ms + 100 * i) * MS for i in range(count)]


class TestSynchronize:
    def test_perfectly_aligned_streams(self):
        ts = ten_hz(0, 100)
        samples, stats = synchronize(
            lidar_at(ts), {"cam": records_at(ts)}, records_at(ts, topic=7), tolerance_ns=50 * MS
        )
        assert stats.matched == 100 and stats.skipped == 0
        assert all(s.skew_ns == {"cam": 0, "gps": 0} for s in samples)

    def test_constant_camera_offset(self):
        ts = ten_hz(0, 50)
        cam = [t + 30 * MS for t in ts]
        samples, stats = synchronize(
            lidar_at(ts), {"cam": records_at(cam)}, records_at(ts, topic=7), tolerance_ns=50 * MS
        )
        assert stats.matched == 50
        assert all(s.skew_ns["cam"] == 30 * MS for s in samples)

    def test_gps_gap_skips_predicted_count(self):
        # 10 s of lidar at 10 Hz; gps silent for the 2 s interval [3.0, 5.0)
        lid = ten_hz(0, 100)
        gps = [t for t in lid if not (3_000 * MS <= t < 5_000 * MS)]
        samples, stats = synchronize(
            lidar_at(lid), {}, records_at(gps, topic=7), tolerance_ns=100 * MS
        )
        # matching is strict (< tolerance), so the frames co-timed with the
        # 20 missing fixes are all at least exactly-tolerance away and skip
        assert stats.skipped == 20
        assert stats.matched == 80
        assert stats.skipped_by_stream == {"gps": 20}
        assert abs(stats.skipped - 2 * 10) <= 1  # gap seconds x 10 Hz within +-1

    def test_earlier_record_wins_tie(self):
        lid = [1000 * MS]
        gps = records_at([990 * MS, 1010 * MS], topic=7)
        samples, _ = synchronize(lidar_at(lid), {}, gps, tolerance_ns=50 * MS)
        assert samples[0].gps is gps[0]
        assert samples[0].skew_ns["gps"] == 10 * MS

    def test_output_in_lidar_order_and_within_tolerance(self):
        rng = np.random.default_rng(51)
        lid = ten_hz(1000, 60)
        cam = [t + int(rng.integers(-40, 40)) * MS for t in lid]
        cam.sort()
        samples, _ = synchronize(
            lidar_at(lid), {"cam": records_at(cam)}, records_at(lid, topic=7), tolerance_ns=45 * MS
        )
        out_ts = [s.lidar.timestamp_ns for s in samples]
        assert out_ts == sorted(out_ts)
        assert all(skew <= 45 * MS for s in samples for skew in s.skew_ns.values())

    def test_multiple_cameras(self):
        lid = ten_hz(1000, 10)
        streams = {
            "cam_left": records_at([t + 5 * MS for t in lid]),
            "cam_right": records_at([t - 8 * MS for t in lid]),
        }
        samples, stats = synchronize(lidar_at(lid), streams, records_at(lid, topic=7), 50 * MS)
        assert stats.matched == 10
        s = samples[0]
        assert s.skew_ns == {"cam_left": 5 * MS, "cam_right": 8 * MS, "gps": 0}

    def test_unsorted_input_names_stream_and_index(self):
        lid = ten_hz(0, 3)
        bad_cam = records_at([200 * MS, 100 * MS, 300 * MS])
        with pytest.raises(UnsortedInput) as ei:
            synchronize(lidar_at(lid), {"cam": bad_cam}, records_at(lid, topic=7), 50 * MS)
        assert ei.value.stream == "cam"
        assert ei.value.index == 1

    def test_empty_side_stream_skips_everything(self):
        lid = ten_hz(0, 5)
        samples, stats = synchronize(lidar_at(lid), {"cam": []}, records_at(lid, topic=7), 50 * MS)
        assert samples == [] and stats.skipped == 5

    def test_rejects_nonpositive_tolerance(self):
        with pytest.raises(ValueError):
            synchronize([], {}, [], 0)
