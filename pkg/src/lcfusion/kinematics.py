"""Local planar trajectories and encounter analytics.

GPS fixes are projected into a local East-North-Up frame with the
equirectangular approximation (good to well under 0.1% at the few-km scale
these encounters live on), tracks interpolate linearly in time, and the
time-to-collision between two tracks uses the instantaneous closing speed
under the constant-velocity assumption:

    closing = -(rel_pos . rel_vel) / |rel_pos|
    ttc     = range / closing            (only while closing > 0)
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from typing import Sequence

from .errors import ToolkitError

__all__ = [
    "EARTH_RADIUS_M",
    "GeoPoint",
    "EnuPoint",
    "Track",
    "TtcReport",
    "OutOfApproximationRange",
    "SingleSample",
    "OutOfSpan",
    "geo_to_enu",
    "velocity_at",
    "position_at",
    "ttc",
]

EARTH_RADIUS_M = 6_371_000.0

# beyond this the flat-earth approximation is no longer honest
MAX_PLANAR_RANGE_M = 50_000.0


class OutOfApproximationRange(ToolkitError):
    pass


class SingleSample(ToolkitError):
    """Velocity needs at least two samples."""


class OutOfSpan(ToolkitError):
    def __init__(self, t_ns: int, start_ns: int, end_ns: int):
        super().__init__(f"t={t_ns} outside track span [{start_ns}, {end_ns}]")


@dataclass(frozen=True)
class GeoPoint:
    latitude: float
    longitude: float
    altitude_m: float
    timestamp_ns: int

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} out of range")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} out of range")


@dataclass(frozen=True)
class EnuPoint:
    east_m: float
    north_m: float
    up_m: float
    timestamp_ns: int

    def __post_init__(self):
        for v in (self.east_m, self.north_m, self.up_m):
            if not math.isfinite(v):
                raise ValueError("ENU components must be finite")


def geo_to_enu(origin: GeoPoint, p: GeoPoint) -> EnuPoint:
    """Project a fix into the planar frame anchored at ``origin``.

    east  = (lon - lon0) * cos(lat0) * R * pi/180
    north = (lat - lat0) * R * pi/180
    up    = alt - alt0

    Raises OutOfApproximationRange past 50 km, where the equirectangular
    model stops being trustworthy.
    """
    east = math.radians(p.longitude - origin.longitude) * math.cos(math.radians(origin.latitude)) * EARTH_RADIUS_M
    north = math.radians(p.latitude - origin.latitude) * EARTH_RADIUS_M
    if math.hypot(east, north) > MAX_PLANAR_RANGE_M:
        raise OutOfApproximationRange(
            f"point {math.hypot(east, north) / 1000:.1f} km from origin; limit is "
            f"{MAX_PLANAR_RANGE_M / 1000:.0f} km"
        )
    return EnuPoint(east, north, p.altitude_m - origin.altitude_m, p.timestamp_ns)


@dataclass(frozen=True)
class Track:
    """A time-ordered trajectory of one labeled road user."""

    id: str
    samples: tuple[EnuPoint, ...]

    def __post_init__(self):
        samples = tuple(self.samples)
        if not samples:
            raise ValueError("track needs at least one sample")
        for i in range(1, len(samples)):
            if samples[i].timestamp_ns <= samples[i - 1].timestamp_ns:
                raise ValueError(f"track {self.id!r}: timestamps must strictly increase at index {i}")
        object.__setattr__(self, "samples", samples)

    @property
    def start_ns(self) -> int:
        return self.samples[0].timestamp_ns

    @property
    def end_ns(self) -> int:
        return self.samples[-1].timestamp_ns

    @classmethod
    def from_geo(cls, track_id: str, fixes: Sequence[GeoPoint], origin: GeoPoint | None = None) -> "Track":
        if not fixes:
            raise ValueError("track needs at least one fix")
        if origin is None:
            origin = fixes[0]
        return cls(track_id, tuple(geo_to_enu(origin, p) for p in fixes))


@dataclass(frozen=True)
class TtcReport:
    """Encounter state at one instant.

    ``ttc_s`` is present only while the tracks are actually closing
    (closing_speed_mps > 0); coincident tracks report range 0 and ttc 0.
    """

    t_ns: int
    range_m: float
    closing_speed_mps: float
    ttc_s: float | None


def _segment_index(track: Track, t_ns: int) -> int:
    """Index i such that samples[i].t <= t <= samples[i+1].t."""
    if not track.start_ns <= t_ns <= track.end_ns:
        raise OutOfSpan(t_ns, track.start_ns, track.end_ns)
    ts = [s.timestamp_ns for s in track.samples]
    i = bisect_right(ts, t_ns) - 1
    return min(i, len(ts) - 2)


def position_at(track: Track, t_ns: int) -> tuple[float, float]:
    """Linearly interpolated planar position at ``t_ns``."""
    if len(track.samples) == 1:
        only = track.samples[0]
        if t_ns != only.timestamp_ns:
            raise OutOfSpan(t_ns, track.start_ns, track.end_ns)
        return only.east_m, only.north_m
    i = _segment_index(track, t_ns)
    a, b = track.samples[i], track.samples[i + 1]
    w = (t_ns - a.timestamp_ns) / (b.timestamp_ns - a.timestamp_ns)
    return (
        a.east_m + w * (b.east_m - a.east_m),
        a.north_m + w * (b.north_m - a.north_m),
    )


def _sample_velocities(track: Track, smooth_window: int | None) -> list[tuple[float, float]]:
    s = track.samples
    n = len(s)
    vels = []
    for k in range(n):
        if k == 0:
            a, b = s[0], s[1]
        elif k == n - 1:
            a, b = s[n - 2], s[n - 1]
        else:
            a, b = s[k - 1], s[k + 1]
        dt = (b.timestamp_ns - a.timestamp_ns) * 1e-9
        vels.append(((b.east_m - a.east_m) / dt, (b.north_m - a.north_m) / dt))
    if smooth_window is not None:
        if smooth_window < 1 or smooth_window % 2 == 0:
            raise ValueError("smooth_window must be a positive odd length")
        half = smooth_window // 2
        smoothed = []
        for k in range(n):
            lo, hi = max(0, k - half), min(n, k + half + 1)
            window = vels[lo:hi]
            smoothed.append(
                (sum(v[0] for v in window) / len(window), sum(v[1] for v in window) / len(window))
            )
        vels = smoothed
    return vels


def velocity_at(track: Track, t_ns: int, smooth_window: int | None = None) -> tuple[float, float]:
    """Planar velocity (east, north) m/s at ``t_ns``.

    Velocities at the sample points use central differences (one-sided at
    the track ends) and are interpolated linearly in time to ``t_ns``; an
    optional centered moving average (odd window) smooths the sample
    velocities first.
    """
    if len(track.samples) < 2:
        raise SingleSample(f"track {track.id!r} has a single sample")
    i = _segment_index(track, t_ns)
    vels = _sample_velocities(track, smooth_window)
    a, b = track.samples[i], track.samples[i + 1]
    w = (t_ns - a.timestamp_ns) / (b.timestamp_ns - a.timestamp_ns)
    va, vb = vels[i], vels[i + 1]
    return (va[0] + w * (vb[0] - va[0]), va[1] + w * (vb[1] - va[1]))


def ttc(a: Track, b: Track, t_ns: int, smooth_window: int | None = None) -> TtcReport:
    """Range, closing speed, and time-to-collision between two tracks at ``t_ns``.

    Symmetric in its arguments.  When the tracks coincide the report
    carries range 0 and ttc 0 (already in collision).
    """
    pa = position_at(a, t_ns)
    pb = position_at(b, t_ns)
    rel_e = pb[0] - pa[0]
    rel_n = pb[1] - pa[1]
    rng = math.hypot(rel_e, rel_n)

    va = velocity_at(a, t_ns, smooth_window)
    vb = velocity_at(b, t_ns, smooth_window)
    rel_ve = vb[0] - va[0]
    rel_vn = vb[1] - va[1]

    if rng == 0.0:
        return TtcReport(t_ns, 0.0, math.hypot(rel_ve, rel_vn), 0.0)

    closing = -(rel_e * rel_ve + rel_n * rel_vn) / rng
    ttc_s = rng / closing if closing > 0 else None
    return TtcReport(t_ns, rng, closing, ttc_s)
