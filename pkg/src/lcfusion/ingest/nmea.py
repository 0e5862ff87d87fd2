"""NMEA 0183 sentence parsing for GNSS fixes (GGA and RMC only).

The checksum (XOR of every byte between ``$`` and ``*``) is verified before
any field is touched, and the two checksum characters must be uppercase
hex: together these guarantee that any single-byte corruption of a sentence
is rejected.  Both ``GP`` and ``GN`` talker prefixes are accepted, since
RTK units emit GN-prefixed sentences.
"""

from __future__ import annotations

import datetime
import enum
from dataclasses import dataclass

from ..errors import ToolkitError

__all__ = [
    "FixQuality",
    "GgaFix",
    "RmcFix",
    "BadChecksum",
    "UnsupportedSentence",
    "MalformedSentence",
    "MalformedField",
    "parse_nmea",
    "nmea_checksum",
]


class BadChecksum(ToolkitError):
    def __init__(self, expected: int, actual: int):
        self.expected = expected
        self.actual = actual
        super().__init__(f"checksum mismatch: sentence says {actual:02X}, computed {expected:02X}")


class UnsupportedSentence(ToolkitError):
    """Valid NMEA, but not a GGA or RMC sentence from a GP/GN talker."""


class MalformedSentence(ToolkitError):
    """The line does not have the $...*hh framing."""


class MalformedField(ToolkitError):
    def __init__(self, index: int, reason: str):
        self.index = index
        super().__init__(f"field {index}: {reason}")


class FixQuality(enum.Enum):
    INVALID = "invalid"
    GPS = "gps"
    DGPS = "dgps"
    RTK_FIXED = "rtk_fixed"
    RTK_FLOAT = "rtk_float"
    OTHER = "other"


_QUALITY_BY_CODE = {0: FixQuality.INVALID, 1: FixQuality.GPS, 2: FixQuality.DGPS,
                    4: FixQuality.RTK_FIXED, 5: FixQuality.RTK_FLOAT}


@dataclass(frozen=True)
class GgaFix:
    """One GGA position fix."""

    utc_time: float  # seconds of day
    latitude: float  # signed decimal degrees, south negative
    longitude: float  # signed decimal degrees, west negative
    fix_quality: FixQuality
    satellites: int
    hdop: float
    altitude_m: float

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} out of range")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} out of range")
        if self.satellites < 0:
            raise ValueError("satellite count must be non-negative")


@dataclass(frozen=True)
class RmcFix:
    """One RMC recommended-minimum fix."""

    utc_time: float
    valid: bool
    latitude: float
    longitude: float
    speed_knots: float
    course_deg: float | None
    date: datetime.date | None

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} out of range")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} out of range")


def nmea_checksum(body: str) -> int:
    """XOR of all characters between '$' and '*'."""
    x = 0
    for ch in body:
        x ^= ord(ch)
    return x


_HEX_UPPER = set("0123456789ABCDEF")


def parse_nmea(line: str) -> GgaFix | RmcFix:
    """Parse one ``$...*hh`` sentence into a typed fix.

    Raises MalformedSentence for framing problems, BadChecksum when the XOR
    does not match, UnsupportedSentence for anything but GP/GN GGA/RMC, and
    MalformedField (with the 0-based field index) for unconvertible fields.
    """
    s = line.rstrip("\r\n")
    if not s.startswith("$"):
        raise MalformedSentence("sentence must start with '$'")
    body, star, checksum_text = s[1:].rpartition("*")
    if not star:
        raise MalformedSentence("sentence has no '*hh' checksum")
    if len(checksum_text) != 2 or not set(checksum_text) <= _HEX_UPPER:
        raise MalformedSentence(f"checksum field {checksum_text!r} is not two uppercase hex digits")
    stated = int(checksum_text, 16)
    computed = nmea_checksum(body)
    if computed != stated:
        raise BadChecksum(computed, stated)

    fields = body.split(",")
    tag = fields[0]
    if len(tag) != 5 or tag[:2] not in ("GP", "GN"):
        raise UnsupportedSentence(f"talker/type {tag!r}")
    kind = tag[2:]
    if kind == "GGA":
        return _parse_gga(fields)
    if kind == "RMC":
        return _parse_rmc(fields)
    raise UnsupportedSentence(f"sentence type {tag!r}")


def _field(fields: list[str], index: int) -> str:
    if index >= len(fields):
        raise MalformedField(index, "missing")
    return fields[index]


def _parse_utc(text: str, index: int) -> float:
    if len(text) < 6:
        raise MalformedField(index, f"time {text!r} too short")
    try:
        h, m, sec = int(text[:2]), int(text[2:4]), float(text[4:])
    except ValueError:
        raise MalformedField(index, f"time {text!r} not HHMMSS[.sss]") from None
    if h >= 24 or m >= 60 or sec >= 61.0:
        raise MalformedField(index, f"time {text!r} out of range")
    return h * 3600.0 + m * 60.0 + sec


def _parse_angle(text: str, hemi: str, index: int, degree_digits: int, positive: str, negative: str) -> float:
    """ddmm.mmmm (or dddmm.mmmm) plus hemisphere letter to signed degrees."""
    if len(text) <= degree_digits:
        raise MalformedField(index, f"coordinate {text!r} too short")
    try:
        deg = int(text[:degree_digits])
        minutes = float(text[degree_digits:])
    except ValueError:
        raise MalformedField(index, f"coordinate {text!r} not ddmm.mmmm") from None
    if minutes >= 60.0:
        raise MalformedField(index, f"minutes {minutes} out of range")
    value = deg + minutes / 60.0
    if hemi == negative:
        return -value
    if hemi == positive:
        return value
    raise MalformedField(index + 1, f"hemisphere {hemi!r} not {positive}/{negative}")


def _float_field(text: str, index: int, default: float | None = None) -> float:
    if text == "":
        if default is None:
            raise MalformedField(index, "empty")
        return default
    try:
        return float(text)
    except ValueError:
        raise MalformedField(index, f"{text!r} is not a number") from None


def _parse_gga(fields: list[str]) -> GgaFix:
    quality_text = _field(fields, 6)
    try:
        quality_code = int(quality_text)
    except ValueError:
        raise MalformedField(6, f"quality {quality_text!r} not an integer") from None
    quality = _QUALITY_BY_CODE.get(quality_code, FixQuality.OTHER)
    no_fix = quality is FixQuality.INVALID

    lat_text = _field(fields, 2)
    lon_text = _field(fields, 4)
    if lat_text == "" or lon_text == "":
        if not no_fix:
            raise MalformedField(2 if lat_text == "" else 4, "empty coordinate on a valid fix")
        lat = lon = 0.0
    else:
        lat = _parse_angle(lat_text, _field(fields, 3), 2, 2, "N", "S")
        lon = _parse_angle(lon_text, _field(fields, 5), 4, 3, "E", "W")

    time_text = _field(fields, 1)
    utc = 0.0 if (time_text == "" and no_fix) else _parse_utc(time_text, 1)

    sats_text = _field(fields, 7)
    try:
        sats = 0 if (sats_text == "" and no_fix) else int(sats_text)
    except ValueError:
        raise MalformedField(7, f"satellite count {sats_text!r}") from None

    hdop = _float_field(_field(fields, 8), 8, default=0.0)
    alt = _float_field(_field(fields, 9), 9, default=0.0)
    return GgaFix(utc, lat, lon, quality, sats, hdop, alt)


def _parse_rmc(fields: list[str]) -> RmcFix:
    status = _field(fields, 2)
    if status not in ("A", "V"):
        raise MalformedField(2, f"status {status!r} not A/V")
    valid = status == "A"

    lat_text = _field(fields, 3)
    lon_text = _field(fields, 5)
    if lat_text == "" or lon_text == "":
        if valid:
            raise MalformedField(3 if lat_text == "" else 5, "empty coordinate on a valid fix")
        lat = lon = 0.0
    else:
        lat = _parse_angle(lat_text, _field(fields, 4), 3, 2, "N", "S")
        lon = _parse_angle(lon_text, _field(fields, 6), 5, 3, "E", "W")

    time_text = _field(fields, 1)
    utc = 0.0 if (time_text == "" and not valid) else _parse_utc(time_text, 1)
    speed = _float_field(_field(fields, 7), 7, default=0.0)
    course_text = _field(fields, 8)
    course = None if course_text == "" else _float_field(course_text, 8)

    date_text = _field(fields, 9)
    if date_text == "":
        date = None
    else:
        if len(date_text) != 6 or not date_text.isdigit():
            raise MalformedField(9, f"date {date_text!r} not ddmmyy")
        day, month, yy = int(date_text[:2]), int(date_text[2:4]), int(date_text[4:])
        year = 1900 + yy if yy >= 80 else 2000 + yy
        try:
            date = datetime.date(year, month, day)
        except ValueError:
            raise MalformedField(9, f"date {date_text!r} invalid") from None
    return RmcFix(utc, valid, lat, lon, speed, course, date)
