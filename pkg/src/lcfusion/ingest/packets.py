"""LiDAR packet wire format and frame reassembly.

One UDP-style packet carries a slice of one scan.  Wire layout, all
little-endian:

    frame_id u32 | packet_seq u16 | packets_in_frame u16 |
    timestamp_ns u64 | point_count u16 | point_count x {x f32, y f32, z f32, intensity u8}

Packets may arrive out of order, duplicated, or not at all.  The assembler
emits a frame exactly when every sequence number is present, keeps emission
in frame_id order, and drops incomplete frames that go stale (no packet
within ``frame_timeout_ns`` of the newest timestamp seen) or that overflow
the reorder window.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from ..errors import ToolkitError
from ..fusion import PointCloudFrame

__all__ = [
    "LidarPacket",
    "AssemblerStats",
    "FrameAssembler",
    "TruncatedPacket",
    "assemble_frames",
    "encode_packet",
    "decode_packet",
    "read_packet_file",
    "read_packets_bytes",
    "split_frame_into_packets",
]

_HEADER = struct.Struct("<IHHQH")
_POINT_DTYPE = np.dtype([("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("intensity", "u1")])


class TruncatedPacket(ToolkitError):
    def __init__(self, offset: int):
        self.offset = offset
        super().__init__(f"packet stream truncated at byte offset {offset}")


@dataclass(frozen=True, eq=False)
class LidarPacket:
    """One slice of a scan: points as (n, 3) float plus (n,) uint8 intensity."""

    frame_id: int
    packet_seq: int
    packets_in_frame: int
    timestamp_ns: int
    xyz: np.ndarray
    intensity: np.ndarray

    def __post_init__(self):
        if not 0 <= self.packet_seq < self.packets_in_frame:
            raise ValueError(
                f"packet_seq {self.packet_seq} must lie below packets_in_frame {self.packets_in_frame}"
            )
        xyz = np.asarray(self.xyz, dtype=np.float32).reshape(-1, 3)
        if len(xyz) == 0:
            raise ValueError("packet payload must be non-empty")
        inten = np.asarray(self.intensity, dtype=np.uint8)
        if inten.shape != (len(xyz),):
            raise ValueError("intensity length must match point count")
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "intensity", inten)


def encode_packet(pkt: LidarPacket) -> bytes:
    points = np.empty(len(pkt.xyz), dtype=_POINT_DTYPE)
    points["x"] = pkt.xyz[:, 0]
    points["y"] = pkt.xyz[:, 1]
    points["z"] = pkt.xyz[:, 2]
    points["intensity"] = pkt.intensity
    header = _HEADER.pack(
        pkt.frame_id, pkt.packet_seq, pkt.packets_in_frame, pkt.timestamp_ns, len(points)
    )
    return header + points.tobytes()


def decode_packet(buf: bytes, offset: int = 0) -> tuple[LidarPacket, int]:
    """Decode one packet at ``offset``; returns (packet, next offset)."""
    if len(buf) - offset < _HEADER.size:
        raise TruncatedPacket(offset)
    frame_id, seq, total, ts, count = _HEADER.unpack_from(buf, offset)
    body_start = offset + _HEADER.size
    body_len = count * _POINT_DTYPE.itemsize
    if len(buf) - body_start < body_len:
        raise TruncatedPacket(offset)
    points = np.frombuffer(buf, dtype=_POINT_DTYPE, count=count, offset=body_start)
    xyz = np.column_stack([points["x"], points["y"], points["z"]]).astype(np.float32)
    pkt = LidarPacket(frame_id, seq, total, ts, xyz, points["intensity"].copy())
    return pkt, body_start + body_len


def read_packets_bytes(buf: bytes) -> Iterator[LidarPacket]:
    """Iterate packets from concatenated wire records."""
    offset = 0
    while offset < len(buf):
        pkt, offset = decode_packet(buf, offset)
        yield pkt


def read_packet_file(path) -> Iterator[LidarPacket]:
    """Iterate packets from a file of concatenated wire records."""
    with open(path, "rb") as f:
        buf = f.read()
    yield from read_packets_bytes(buf)


def split_frame_into_packets(frame: PointCloudFrame, frame_id: int, points_per_packet: int) -> list[LidarPacket]:
    """Chop a frame into wire packets (fixture/loopback helper)."""
    n = len(frame)
    if n == 0:
        raise ValueError("cannot packetize an empty frame")
    count = (n + points_per_packet - 1) // points_per_packet
    packets = []
    for seq in range(count):
        sl = slice(seq * points_per_packet, min((seq + 1) * points_per_packet, n))
        packets.append(
            LidarPacket(
                frame_id=frame_id,
                packet_seq=seq,
                packets_in_frame=count,
                timestamp_ns=frame.timestamp_ns,
                xyz=frame.xyz[sl],
                intensity=frame.intensity[sl],
            )
        )
    return packets


@dataclass
class AssemblerStats:
    frames_emitted: int = 0
    frames_dropped: int = 0
    duplicate_packets: int = 0
    late_packets: int = 0
    inconsistent_packets: int = 0
    # per dropped frame: (frame_id, packets received, packets expected)
    dropped_detail: list[tuple[int, int, int]] = field(default_factory=list)


class _Pending:
    __slots__ = ("expected", "parts", "last_activity_ns")

    def __init__(self, expected: int):
        self.expected = expected
        self.parts: dict[int, LidarPacket] = {}
        self.last_activity_ns = 0

    @property
    def complete(self) -> bool:
        return len(self.parts) == self.expected


class FrameAssembler:
    """Stateful reassembler; feed packets with push(), finish with flush()."""

    def __init__(self, reorder_window: int = 32, frame_timeout_ns: int = 1_000_000_000):
        if reorder_window < 1:
            raise ValueError("reorder_window must be at least 1")
        if frame_timeout_ns <= 0:
            raise ValueError("frame_timeout_ns must be positive")
        self.reorder_window = reorder_window
        self.frame_timeout_ns = frame_timeout_ns
        self.stats = AssemblerStats()
        self._pending: dict[int, _Pending] = {}
        self._closed_ids: set[int] = set()
        self._last_emitted_id = -1
        self._newest_ts = 0

    def push(self, pkt: LidarPacket) -> list[PointCloudFrame]:
        """Add one packet; returns frames that became emittable, in id order."""
        self._newest_ts = max(self._newest_ts, pkt.timestamp_ns)
        if pkt.frame_id <= self._last_emitted_id or pkt.frame_id in self._closed_ids:
            self.stats.late_packets += 1
            return self._sweep()

        pending = self._pending.get(pkt.frame_id)
        if pending is None:
            pending = _Pending(pkt.packets_in_frame)
            self._pending[pkt.frame_id] = pending
        if pkt.packets_in_frame != pending.expected or pkt.packet_seq >= pending.expected:
            self.stats.inconsistent_packets += 1
            return self._sweep()
        if pkt.packet_seq in pending.parts:
            self.stats.duplicate_packets += 1
            return self._sweep()
        pending.parts[pkt.packet_seq] = pkt
        pending.last_activity_ns = max(pending.last_activity_ns, pkt.timestamp_ns)
        return self._sweep()

    def flush(self) -> list[PointCloudFrame]:
        """End of stream: emit remaining complete frames, drop the rest."""
        out = []
        for fid in sorted(self._pending):
            pending = self._pending.pop(fid)
            if pending.complete:
                out.append(self._build(fid, pending))
                self.stats.frames_emitted += 1
            else:
                self._drop(fid, pending)
        return out

    def _sweep(self) -> list[PointCloudFrame]:
        # stale incomplete frames go first, so they cannot block emission
        cutoff = self._newest_ts - self.frame_timeout_ns
        for fid in sorted(self._pending):
            pending = self._pending[fid]
            if not pending.complete and pending.last_activity_ns < cutoff:
                self._drop(fid, self._pending.pop(fid))

        out = []
        while self._pending:
            fid = min(self._pending)
            if self._pending[fid].complete:
                out.append(self._build(fid, self._pending.pop(fid)))
                self.stats.frames_emitted += 1
                self._last_emitted_id = fid
                self._prune_closed()
            elif len(self._pending) > self.reorder_window:
                self._drop(fid, self._pending.pop(fid))
            else:
                break
        return out

    def _drop(self, fid: int, pending: _Pending) -> None:
        self.stats.frames_dropped += 1
        self.stats.dropped_detail.append((fid, len(pending.parts), pending.expected))
        self._closed_ids.add(fid)

    def _prune_closed(self) -> None:
        self._closed_ids = {fid for fid in self._closed_ids if fid > self._last_emitted_id}

    def _build(self, fid: int, pending: _Pending) -> PointCloudFrame:
        parts = [pending.parts[seq] for seq in range(pending.expected)]
        xyz = np.vstack([p.xyz for p in parts]).astype(float)
        intensity = np.concatenate([p.intensity for p in parts])
        ts = min(p.timestamp_ns for p in parts)
        return PointCloudFrame(timestamp_ns=ts, xyz=xyz, intensity=intensity)


def assemble_frames(
    packets: Iterable[LidarPacket],
    reorder_window: int = 32,
    frame_timeout_ns: int = 1_000_000_000,
    stats: AssemblerStats | None = None,
) -> Iterator[PointCloudFrame]:
    """Reassemble a packet stream into complete frames, in frame_id order.

    Pass an AssemblerStats to receive drop/duplicate counters and per-frame
    completeness details.
    """
    asm = FrameAssembler(reorder_window=reorder_window, frame_timeout_ns=frame_timeout_ns)
    if stats is not None:
        asm.stats = stats
    for pkt in packets:
        yield from asm.push(pkt)
    yield from asm.flush()
