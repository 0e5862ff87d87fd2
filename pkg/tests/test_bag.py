import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lcfusion.errors import ToolkitError
from lcfusion.fusion import PointCloudFrame
from lcfusion.ingest import (
    BadMagic,
    BagReader,
    BagRecord,
    BagTopic,
    BagWriter,
    TruncatedRecord,
    UnknownTopicId,
    bag_read,
    bag_write,
    decode_frame_payload,
    encode_frame_payload,
)

TOPICS = [
    BagTopic(1, "lidar", "pointcloud"),
    BagTopic(2, "cam_front", "image/png"),
    BagTopic(7, "gps", "nmea"),
]


def golden_records():
    return [
        BagRecord(1, 100, b"cloud-one"),
        BagRecord(2, 105, b"\x89PNG fake"),
        BagRecord(1, 200, b""),
        BagRecord(7, 210, b"$GPGGA,..."),
        BagRecord(2, 205, bytes(range(64))),
    ]


def write_bytes(topics, records):
    buf = io.BytesIO()
    bag_write(buf, topics, records)
    return buf.getvalue()


class TestRoundTrip:
    def test_empty_bag(self):
        data = write_bytes(TOPICS, [])
        reader = BagReader(data)
        assert reader.topics == TOPICS
        assert list(reader) == []

    def test_records_preserved_in_order(self):
        recs = golden_records()
        out = list(bag_read(write_bytes(TOPICS, recs)))
        assert out == recs

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "session.tbag"
        bag_write(path, TOPICS, golden_records())
        assert list(bag_read(path)) == golden_records()

    def test_header_bytes_exact(self):
        data = write_bytes([BagTopic(0x0102, "ab", "xyz")], [])
        expected = b"TBAG" + bytes([1]) + struct.pack("<H", 1)
        expected += struct.pack("<HB", 0x0102, 2) + b"ab" + bytes([3]) + b"xyz"
        assert data == expected

    @settings(max_examples=200, deadline=None)
    @given(
        payloads=st.lists(st.binary(min_size=0, max_size=300), min_size=0, max_size=12),
        timestamps=st.lists(st.integers(min_value=0, max_value=2**64 - 1), min_size=12, max_size=12),
    )
    def test_round_trip_property(self, payloads, timestamps):
        recs = [BagRecord(1, ts, p) for ts, p in zip(timestamps, payloads)]
        out = list(bag_read(write_bytes(TOPICS, recs)))
        assert out == recs


class TestErrors:
    def test_bad_magic(self):
        with pytest.raises(BadMagic):
            BagReader(b"NOPE" + b"\x00" * 10)

    def test_unsupported_version(self):
        data = bytearray(write_bytes(TOPICS, []))
        data[4] = 99
        with pytest.raises(BadMagic):
            BagReader(bytes(data))

    def test_unknown_topic_on_write(self):
        buf = io.BytesIO()
        with BagWriter(buf, TOPICS) as w:
            with pytest.raises(UnknownTopicId):
                w.write(BagRecord(99, 0, b"x"))

    def test_unknown_topic_on_read(self):
        data = write_bytes(TOPICS, []) + struct.pack("<HQI", 99, 0, 0)
        with pytest.raises(UnknownTopicId) as ei:
            list(bag_read(data))
        assert ei.value.topic_id == 99

    def test_truncation_mid_record_returns_prefix(self):
        recs = golden_records()
        data = write_bytes(TOPICS, recs)
        # cut inside the last record's payload
        out = []
        with pytest.raises(TruncatedRecord):
            for r in bag_read(data[:-3]):
                out.append(r)
        assert out == recs[:-1]

    def test_truncation_at_every_byte_offset(self):
        recs = golden_records()
        data = write_bytes(TOPICS, recs)
        # byte offset where each record ends
        header_len = len(write_bytes(TOPICS, []))
        ends = []
        off = header_len
        for r in recs:
            off += 14 + len(r.payload)
            ends.append(off)
        assert off == len(data)

        boundaries = {header_len, *ends}
        for cut in range(len(data)):
            expected_n = sum(1 for e in ends if e <= cut)
            got = []
            raised = False
            try:
                for r in bag_read(data[:cut]):
                    got.append(r)
            except ToolkitError:
                raised = True
            assert got == recs[:expected_n], f"cut at {cut}"
            # a cut exactly on a record boundary leaves a valid shorter bag;
            # any other cut must surface an error
            assert raised != (cut in boundaries), f"cut at {cut}"


class TestFramePayload:
    def test_round_trip(self):
        rng = np.random.default_rng(41)
        frame = PointCloudFrame(
            777, rng.uniform(-20, 20, (50, 3)), rng.integers(0, 256, 50).astype(np.uint8)
        )
        payload = encode_frame_payload(frame)
        out = decode_frame_payload(payload, 777)
        assert out.timestamp_ns == 777
        np.testing.assert_allclose(out.xyz, frame.xyz, atol=1e-6)
        np.testing.assert_array_equal(out.intensity, frame.intensity)

    def test_length_validation(self):
        with pytest.raises(ValueError):
            decode_frame_payload(b"\x05\x00\x00\x00" + b"\x00" * 10, 0)
