"""Time synchronization of sensor streams at the LiDAR cadence.

The LiDAR is the master clock: for every LiDAR frame the nearest record of
every other stream is selected by minimal |dt| (the earlier record wins an
exact tie).  A frame is emitted only when every stream has a neighbor
strictly closer than the tolerance; frames lacking one are skipped and
counted.  The strict bound makes gap arithmetic exact: a stream silent for
G seconds skips G x rate frames (within one) regardless of how the gap
edges align with the sampling grid.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from ..errors import ToolkitError
from ..fusion import PointCloudFrame

__all__ = ["SyncedSample", "SyncStats", "UnsortedInput", "synchronize"]


class UnsortedInput(ToolkitError):
    def __init__(self, stream: str, index: int):
        self.stream = stream
        self.index = index
        super().__init__(f"stream {stream!r} is not sorted by timestamp at index {index}")


@dataclass(frozen=True)
class SyncedSample:
    """One LiDAR frame with its nearest neighbor from every other stream.

    ``skew_ns`` holds the per-stream |dt| to the LiDAR timestamp, keyed the
    same way as ``cameras`` plus ``"gps"``.
    """

    lidar: PointCloudFrame
    cameras: dict[str, Any]
    gps: Any
    skew_ns: dict[str, int]


@dataclass
class SyncStats:
    matched: int = 0
    skipped: int = 0
    skipped_by_stream: dict[str, int] = field(default_factory=dict)


def _timestamps(stream: Sequence[Any], name: str) -> list[int]:
    ts = [int(item.timestamp_ns) for item in stream]
    for i in range(1, len(ts)):
        if ts[i] < ts[i - 1]:
            raise UnsortedInput(name, i)
    return ts


def _nearest(ts_list: list[int], t: int) -> tuple[int, int] | None:
    """(index, |dt|) of the nearest timestamp; earlier wins ties."""
    if not ts_list:
        return None
    pos = bisect_left(ts_list, t)
    best = None
    for i in (pos - 1, pos):
        if 0 <= i < len(ts_list):
            d = abs(ts_list[i] - t)
            if best is None or d < best[1]:
                best = (i, d)
    return best


def synchronize(
    lidar_frames: Sequence[PointCloudFrame],
    camera_streams: Mapping[str, Sequence[Any]],
    gps_fixes: Sequence[Any],
    tolerance_ns: int,
) -> tuple[list[SyncedSample], SyncStats]:
    """Match camera and GPS records to each LiDAR frame.

    Every input stream must be sorted by ``timestamp_ns`` (UnsortedInput
    names the stream and offending index otherwise).  Output is in LiDAR
    timestamp order; every skew is <= tolerance_ns.
    """
    if tolerance_ns <= 0:
        raise ValueError("tolerance_ns must be positive")
    lidar_ts = _timestamps(lidar_frames, "lidar")
    cam_ts = {name: _timestamps(stream, name) for name, stream in camera_streams.items()}
    gps_ts = _timestamps(gps_fixes, "gps")

    samples: list[SyncedSample] = []
    stats = SyncStats()
    for frame, t in zip(lidar_frames, lidar_ts):
        cameras: dict[str, Any] = {}
        skews: dict[str, int] = {}
        missing = None
        for name, ts_list in cam_ts.items():
            hit = _nearest(ts_list, t)
            if hit is None or hit[1] >= tolerance_ns:
                missing = name
                break
            cameras[name] = camera_streams[name][hit[0]]
            skews[name] = hit[1]
        if missing is None:
            hit = _nearest(gps_ts, t)
            if hit is None or hit[1] >= tolerance_ns:
                missing = "gps"
            else:
                gps = gps_fixes[hit[0]]
                skews["gps"] = hit[1]
        if missing is not None:
            stats.skipped += 1
            stats.skipped_by_stream[missing] = stats.skipped_by_stream.get(missing, 0) + 1
            continue
        samples.append(SyncedSample(lidar=frame, cameras=cameras, gps=gps, skew_ns=skews))
        stats.matched += 1
    return samples, stats
