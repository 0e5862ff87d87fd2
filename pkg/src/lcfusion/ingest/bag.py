"""Timestamped multi-topic recording container.

Bit-exact file layout, all integers little-endian:

    magic 'TBAG' (4 bytes) | version u8 = 1 | topic_count u16
    per topic:  topic_id u16 | name_len u8 | name utf-8 | type_len u8 | type utf-8
    records until EOF:  topic_id u16 | timestamp_ns u64 | payload_len u32 | payload

Topics are declared up front (the header is written once), so every record
must use a registered topic id.  Reading a truncated file yields every
complete record and then raises TruncatedRecord with the byte offset where
the incomplete structure starts.

Well-known topic type strings used by the CLI and demos: ``pointcloud``
(payload per encode_frame_payload), ``image/png`` (raw PNG bytes), and
``nmea`` (one ASCII sentence).
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from ..errors import ToolkitError
from ..fusion import PointCloudFrame

__all__ = [
    "MAGIC",
    "VERSION",
    "BagTopic",
    "BagRecord",
    "BagWriter",
    "BagReader",
    "BadMagic",
    "TruncatedRecord",
    "UnknownTopicId",
    "bag_write",
    "bag_read",
    "encode_frame_payload",
    "decode_frame_payload",
    "TOPIC_TYPE_POINTCLOUD",
    "TOPIC_TYPE_IMAGE_PNG",
    "TOPIC_TYPE_NMEA",
]

MAGIC = b"TBAG"
VERSION = 1

TOPIC_TYPE_POINTCLOUD = "pointcloud"
TOPIC_TYPE_IMAGE_PNG = "image/png"
TOPIC_TYPE_NMEA = "nmea"

_RECORD_HEADER = struct.Struct("<HQI")
_POINT_DTYPE = np.dtype([("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("intensity", "u1")])


class BadMagic(ToolkitError):
    pass


class TruncatedRecord(ToolkitError):
    def __init__(self, offset: int, what: str = "record"):
        self.offset = offset
        super().__init__(f"file truncated inside {what} starting at byte offset {offset}")


class UnknownTopicId(ToolkitError):
    def __init__(self, topic_id: int, offset: int | None = None):
        self.topic_id = topic_id
        self.offset = offset
        at = f" at byte offset {offset}" if offset is not None else ""
        super().__init__(f"topic id {topic_id} is not registered{at}")


@dataclass(frozen=True)
class BagTopic:
    topic_id: int
    name: str
    type: str

    def __post_init__(self):
        if not 0 <= self.topic_id <= 0xFFFF:
            raise ValueError("topic_id must fit u16")
        for label, text in (("name", self.name), ("type", self.type)):
            if len(text.encode("utf-8")) > 255:
                raise ValueError(f"topic {label} longer than 255 utf-8 bytes")


@dataclass(frozen=True)
class BagRecord:
    topic_id: int
    timestamp_ns: int
    payload: bytes

    def __post_init__(self):
        if not 0 <= self.topic_id <= 0xFFFF:
            raise ValueError("topic_id must fit u16")
        if not 0 <= self.timestamp_ns <= 0xFFFFFFFFFFFFFFFF:
            raise ValueError("timestamp_ns must fit u64")
        if len(self.payload) > 0xFFFFFFFF:
            raise ValueError("payload longer than u32 allows")


class BagWriter:
    """Writes the header at construction; records stream in afterwards."""

    def __init__(self, path_or_file, topics: Sequence[BagTopic]):
        ids = [t.topic_id for t in topics]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate topic ids")
        self._topics = {t.topic_id: t for t in topics}
        if hasattr(path_or_file, "write"):
            self._file = path_or_file
            self._owns = False
        else:
            self._file = open(path_or_file, "wb")
            self._owns = True
        header = io.BytesIO()
        header.write(MAGIC)
        header.write(struct.pack("<BH", VERSION, len(topics)))
        for t in topics:
            name = t.name.encode("utf-8")
            typ = t.type.encode("utf-8")
            header.write(struct.pack("<HB", t.topic_id, len(name)))
            header.write(name)
            header.write(struct.pack("<B", len(typ)))
            header.write(typ)
        self._file.write(header.getvalue())

    @property
    def topics(self) -> list[BagTopic]:
        return list(self._topics.values())

    def write(self, record: BagRecord) -> None:
        if record.topic_id not in self._topics:
            raise UnknownTopicId(record.topic_id)
        self._file.write(_RECORD_HEADER.pack(record.topic_id, record.timestamp_ns, len(record.payload)))
        self._file.write(record.payload)

    def close(self) -> None:
        if self._owns:
            self._file.close()

    def __enter__(self) -> "BagWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def bag_write(path_or_file, topics: Sequence[BagTopic], records: Iterable[BagRecord]) -> None:
    """One-shot write of a whole bag."""
    with BagWriter(path_or_file, topics) as w:
        for rec in records:
            w.write(rec)


class BagReader:
    """Parses the header eagerly; iterate for records in file order."""

    def __init__(self, path_or_bytes):
        if isinstance(path_or_bytes, (bytes, bytearray)):
            self._buf = bytes(path_or_bytes)
        else:
            with open(path_or_bytes, "rb") as f:
                self._buf = f.read()
        self._records_start = self._parse_header()

    def _parse_header(self) -> int:
        buf = self._buf
        if len(buf) < 4:
            raise TruncatedRecord(0, "magic")
        if buf[:4] != MAGIC:
            raise BadMagic(f"expected {MAGIC!r}, found {buf[:4]!r}")
        if len(buf) < 7:
            raise TruncatedRecord(4, "header")
        version, topic_count = struct.unpack_from("<BH", buf, 4)
        if version != VERSION:
            raise BadMagic(f"unsupported container version {version}")
        off = 7
        topics = []
        for _ in range(topic_count):
            if len(buf) - off < 3:
                raise TruncatedRecord(off, "topic table")
            topic_id, name_len = struct.unpack_from("<HB", buf, off)
            off += 3
            if len(buf) - off < name_len + 1:
                raise TruncatedRecord(off, "topic table")
            name = buf[off : off + name_len].decode("utf-8")
            off += name_len
            (type_len,) = struct.unpack_from("<B", buf, off)
            off += 1
            if len(buf) - off < type_len:
                raise TruncatedRecord(off, "topic table")
            typ = buf[off : off + type_len].decode("utf-8")
            off += type_len
            topics.append(BagTopic(topic_id, name, typ))
        self.topics = topics
        self._topic_ids = {t.topic_id for t in topics}
        return off

    def __iter__(self) -> Iterator[BagRecord]:
        buf = self._buf
        off = self._records_start
        while off < len(buf):
            if len(buf) - off < _RECORD_HEADER.size:
                raise TruncatedRecord(off)
            topic_id, ts, payload_len = _RECORD_HEADER.unpack_from(buf, off)
            if len(buf) - off - _RECORD_HEADER.size < payload_len:
                raise TruncatedRecord(off)
            if topic_id not in self._topic_ids:
                raise UnknownTopicId(topic_id, offset=off)
            payload = buf[off + _RECORD_HEADER.size : off + _RECORD_HEADER.size + payload_len]
            yield BagRecord(topic_id, ts, payload)
            off += _RECORD_HEADER.size + payload_len


def bag_read(path_or_bytes) -> Iterator[BagRecord]:
    """Stream records from a bag file (or raw bytes).

    Raises BadMagic / TruncatedRecord / UnknownTopicId; every record before
    the problem point is yielded first.
    """
    return iter(BagReader(path_or_bytes))


def encode_frame_payload(frame: PointCloudFrame) -> bytes:
    """Point-cloud record payload: point_count u32 then {x,y,z f32, intensity u8}."""
    points = np.empty(len(frame), dtype=_POINT_DTYPE)
    points["x"] = frame.xyz[:, 0]
    points["y"] = frame.xyz[:, 1]
    points["z"] = frame.xyz[:, 2]
    points["intensity"] = frame.intensity
    return struct.pack("<I", len(frame)) + points.tobytes()


def decode_frame_payload(payload: bytes, timestamp_ns: int) -> PointCloudFrame:
    if len(payload) < 4:
        raise ValueError("point cloud payload shorter than its count field")
    (count,) = struct.unpack_from("<I", payload, 0)
    expected = 4 + count * _POINT_DTYPE.itemsize
    if len(payload) != expected:
        raise ValueError(f"point cloud payload length {len(payload)} != expected {expected}")
    points = np.frombuffer(payload, dtype=_POINT_DTYPE, count=count, offset=4)
    xyz = np.column_stack([points["x"], points["y"], points["z"]]).astype(float)
    return PointCloudFrame(timestamp_ns=timestamp_ns, xyz=xyz, intensity=points["intensity"].copy())
