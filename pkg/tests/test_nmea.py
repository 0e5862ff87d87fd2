import datetime

import pytest

from lcfusion.errors import ToolkitError
from lcfusion.ingest import (
    BadChecksum,
    FixQuality,
    GgaFix,
    MalformedField,
    MalformedSentence,
    RmcFix,
    UnsupportedSentence,
    nmea_checksum,
    parse_nmea,
)

GGA = "$GPGGA,123519,4807.038,N,01131.000,E,1,08,0.9,545.4,M,46.9,M,,*47"
RMC = "$GPRMC,123519,A,4807.038,N,01131.000,E,022.4,084.4,230394,003.1,W*6A"
GN_GGA = "$GNGGA,123519,4807.038,N,01131.000,E,4,12,0.6,545.4,M,46.9,M,,*58"
GSV = "$GPGSV,3,1,11,03,03,111,00,04,15,270,00,06,01,010,00,13,06,292,00*74"


class TestGolden:
    def test_gga(self):
        fix = parse_nmea(GGA)
        assert isinstance(fix, GgaFix)
        # hand conversion: 48 deg + 7.038 min / 60; 11 deg + 31.000 min / 60
        assert fix.latitude == pytest.approx(48 + 7.038 / 60, abs=1e-12)
        assert fix.longitude == pytest.approx(11 + 31.000 / 60, abs=1e-12)
        assert fix.utc_time == 12 * 3600 + 35 * 60 + 19
        assert fix.fix_quality is FixQuality.GPS
        assert fix.satellites == 8
        assert fix.hdop == 0.9
        assert fix.altitude_m == 545.4

    def test_rmc(self):
        fix = parse_nmea(RMC)
        assert isinstance(fix, RmcFix)
        assert fix.valid
        assert fix.latitude == pytest.approx(48.1173, abs=1e-12)
        assert fix.longitude == pytest.approx(11 + 31 / 60, abs=1e-12)
        assert fix.speed_knots == 22.4
        assert fix.course_deg == 84.4
        assert fix.date == datetime.date(1994, 3, 23)

    def test_gn_talker_accepted(self):
        fix = parse_nmea(GN_GGA)
        assert fix.fix_quality is FixQuality.RTK_FIXED
        assert fix.satellites == 12

    def test_southern_western_hemispheres(self):
        body = "GPGGA,023044,3751.650,S,14507.360,E,1,04,2.1,23.0,M,21.0,M,,"
        line = f"${body}*{nmea_checksum(body):02X}"
        fix = parse_nmea(line)
        assert fix.latitude == pytest.approx(-(37 + 51.650 / 60), abs=1e-12)
        assert fix.longitude == pytest.approx(145 + 7.360 / 60, abs=1e-12)

    def test_trailing_crlf_tolerated(self):
        assert parse_nmea(GGA + "\r\n") == parse_nmea(GGA)


class TestRejection:
    def test_bad_checksum(self):
        with pytest.raises(BadChecksum):
            parse_nmea(GGA[:-2] + "00")

    def test_unsupported_sentence(self):
        with pytest.raises(UnsupportedSentence):
            parse_nmea(GSV)

    def test_unsupported_talker(self):
        body = "GLGGA,123519,4807.038,N,01131.000,E,1,08,0.9,545.4,M,46.9,M,,"
        with pytest.raises(UnsupportedSentence):
            parse_nmea(f"${body}*{nmea_checksum(body):02X}")

    def test_missing_dollar(self):
        with pytest.raises(MalformedSentence):
            parse_nmea(GGA[1:])

    def test_missing_star(self):
        with pytest.raises(MalformedSentence):
            parse_nmea(GGA.replace("*", ""))

    def test_lowercase_checksum_rejected(self):
        body = "GPGGA,123519,4807.038,N,01131.000,E,1,08,0.9,545.4,M,46.9,M,,"
        cs = nmea_checksum(body)
        lower = f"${body}*{cs:02x}"
        if lower != f"${body}*{cs:02X}":
            with pytest.raises(MalformedSentence):
                parse_nmea(lower)

    def test_malformed_field_reports_index(self):
        body = "GPGGA,123519,4807.038,N,01131.000,E,one,08,0.9,545.4,M,46.9,M,,"
        line = f"${body}*{nmea_checksum(body):02X}"
        with pytest.raises(MalformedField) as ei:
            parse_nmea(line)
        assert ei.value.index == 6

    def test_bad_hemisphere_letter(self):
        body = "GPGGA,123519,4807.038,X,01131.000,E,1,08,0.9,545.4,M,46.9,M,,"
        line = f"${body}*{nmea_checksum(body):02X}"
        with pytest.raises(MalformedField):
            parse_nmea(line)


class TestCorruptionFuzz:
    def test_every_single_byte_corruption_rejected(self):
        # corrupting any one byte anywhere in the sentence must be rejected:
        # payload changes break the XOR, checksum changes break the match,
        # framing changes break the grammar
        replacements = [chr(c) for c in range(32, 127)] + ["\x00", "\x1b"]
        mutations = 0
        for sentence in (GGA, RMC):
            for pos in range(len(sentence)):
                orig = sentence[pos]
                for repl in replacements:
                    if repl == orig:
                        continue
                    corrupted = sentence[:pos] + repl + sentence[pos + 1 :]
                    mutations += 1
                    with pytest.raises(ToolkitError):
                        parse_nmea(corrupted)
        assert mutations >= 10_000

    def test_acceptance_iff_checksum_matches(self):
        # every possible checksum value: exactly one is accepted
        body = GGA[1 : GGA.index("*")]
        accepted = []
        for cs in range(256):
            line = f"${body}*{cs:02X}"
            try:
                parse_nmea(line)
                accepted.append(cs)
            except ToolkitError:
                pass
        assert accepted == [nmea_checksum(body)]


class TestInvalidFixHandling:
    def test_empty_fields_allowed_when_no_fix(self):
        body = "GPGGA,,,,,,0,00,,,M,,M,,"
        line = f"${body}*{nmea_checksum(body):02X}"
        fix = parse_nmea(line)
        assert fix.fix_quality is FixQuality.INVALID
        assert fix.satellites == 0

    def test_empty_coordinate_on_valid_fix_rejected(self):
        body = "GPGGA,123519,,N,01131.000,E,1,08,0.9,545.4,M,46.9,M,,"
        line = f"${body}*{nmea_checksum(body):02X}"
        with pytest.raises(MalformedField):
            parse_nmea(line)

    def test_void_rmc(self):
        body = "GPRMC,123519,V,,,,,,,230394,,"
        line = f"${body}*{nmea_checksum(body):02X}"
        fix = parse_nmea(line)
        assert not fix.valid
        assert fix.course_deg is None
