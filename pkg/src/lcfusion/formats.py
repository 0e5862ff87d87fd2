"""Text file formats shared by the CLI, the HTTP service, and the demos.

All formats are plain ASCII, whitespace- or comma-separated, with ``#``
starting a comment line.  Grammars:

- intrinsics config: one ``key value`` pair per line.  Required keys
  fx, fy, ox, oy, image_width, image_height; optional k1 k2 k3 p1 p2
  (default 0).
- correspondence file: one ``label u v X Y Z`` line per pair.
- solution file: ``rvec rx ry rz`` / ``tvec tx ty tz`` / ``rmse_px v`` /
  ``iterations n`` / ``converged true|false`` / ``stop_reason s``.
- board-region file: one ``name ground_truth_m u1 v1 u2 v2 ...`` per line.
- overlay CSV: header ``point_index,u,v,range_m``.
- report CSV: header ``board,tp,wrong,tpr,tolerance``.
- track CSV: header ``id,timestamp_ns,lat,lon,alt`` (geographic) or
  ``id,timestamp_ns,east,north,up`` (pre-projected).
- TTC CSV: header ``t_ns,range_m,closing_speed_mps,ttc_s`` (ttc_s empty
  when the tracks are not closing).

Parsers report problems as ParseError carrying the file label and
1-based line number.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import ToolkitError
from .fusion import BoardRegion, FusionReport, OverlayResult
from .geometry import DistortionParams, IntrinsicMatrix, PixelCoord, Point3D, RotationVector
from .kinematics import EnuPoint, GeoPoint, Track, TtcReport, geo_to_enu
from .pnp import Correspondence, PnPSolution

__all__ = [
    "ParseError",
    "CameraConfig",
    "parse_intrinsics",
    "load_intrinsics",
    "format_intrinsics",
    "parse_correspondences",
    "load_correspondences",
    "format_correspondences",
    "format_solution",
    "parse_solution",
    "parse_board_regions",
    "load_board_regions",
    "format_board_regions",
    "overlay_to_csv",
    "overlay_from_csv",
    "reports_to_csv",
    "parse_tracks_csv",
    "load_tracks_csv",
    "ttc_reports_to_csv",
]


class ParseError(ToolkitError):
    def __init__(self, source: str, line: int, message: str):
        self.source = source
        self.line = line
        super().__init__(f"{source}:{line}: {message}")


def _content_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line


@dataclass(frozen=True)
class CameraConfig:
    """One camera as described by an intrinsics config file."""

    intrinsics: IntrinsicMatrix
    distortion: DistortionParams
    image_width: int
    image_height: int


_INTRINSIC_KEYS = {"fx", "fy", "ox", "oy", "k1", "k2", "k3", "p1", "p2", "image_width", "image_height"}
_REQUIRED_KEYS = {"fx", "fy", "ox", "oy", "image_width", "image_height"}


def parse_intrinsics(text: str, source: str = "<intrinsics>") -> CameraConfig:
    values: dict[str, float] = {}
    for lineno, line in _content_lines(text):
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(source, lineno, f"expected 'key value', got {line!r}")
        key, raw = parts
        if key not in _INTRINSIC_KEYS:
            raise ParseError(source, lineno, f"unknown key {key!r}")
        if key in values:
            raise ParseError(source, lineno, f"duplicate key {key!r}")
        try:
            values[key] = float(raw)
        except ValueError:
            raise ParseError(source, lineno, f"{key}: {raw!r} is not a number") from None
    missing = _REQUIRED_KEYS - values.keys()
    if missing:
        raise ParseError(source, 0, f"missing required keys: {', '.join(sorted(missing))}")
    width, height = int(values["image_width"]), int(values["image_height"])
    if width <= 0 or height <= 0:
        raise ParseError(source, 0, "image dimensions must be positive")
    return CameraConfig(
        intrinsics=IntrinsicMatrix(values["fx"], values["fy"], values["ox"], values["oy"]),
        distortion=DistortionParams(
            k1=values.get("k1", 0.0),
            k2=values.get("k2", 0.0),
            p1=values.get("p1", 0.0),
            p2=values.get("p2", 0.0),
            k3=values.get("k3", 0.0),
        ),
        image_width=width,
        image_height=height,
    )


def load_intrinsics(path) -> CameraConfig:
    with open(path, "r", encoding="ascii") as f:
        return parse_intrinsics(f.read(), source=str(path))


def format_intrinsics(cfg: CameraConfig) -> str:
    d = cfg.distortion
    lines = [
        f"fx {cfg.intrinsics.fx!r}",
        f"fy {cfg.intrinsics.fy!r}",
        f"ox {cfg.intrinsics.ox!r}",
        f"oy {cfg.intrinsics.oy!r}",
        f"k1 {d.k1!r}",
        f"k2 {d.k2!r}",
        f"k3 {d.k3!r}",
        f"p1 {d.p1!r}",
        f"p2 {d.p2!r}",
        f"image_width {cfg.image_width}",
        f"image_height {cfg.image_height}",
    ]
    return "\n".join(lines) + "\n"


def parse_correspondences(text: str, source: str = "<pairs>") -> list[Correspondence]:
    corrs = []
    for lineno, line in _content_lines(text):
        parts = line.split()
        if len(parts) != 6:
            raise ParseError(source, lineno, f"expected 'label u v X Y Z', got {len(parts)} fields")
        label = parts[0]
        try:
            u, v, x, y, z = (float(p) for p in parts[1:])
        except ValueError:
            raise ParseError(source, lineno, "coordinates must be numbers") from None
        try:
            corrs.append(Correspondence(Point3D(x, y, z), PixelCoord(u, v), label))
        except ValueError as exc:
            raise ParseError(source, lineno, str(exc)) from None
    return corrs


def load_correspondences(path) -> list[Correspondence]:
    with open(path, "r", encoding="ascii") as f:
        return parse_correspondences(f.read(), source=str(path))


def format_correspondences(corrs) -> str:
    out = ["# label u v X Y Z"]
    for c in corrs:
        out.append(
            f"{c.label or '-'} {float(c.pixel.u)!r} {float(c.pixel.v)!r} "
            f"{float(c.lidar_point.x)!r} {float(c.lidar_point.y)!r} {float(c.lidar_point.z)!r}"
        )
    return "\n".join(out) + "\n"


def format_solution(sol: PnPSolution) -> str:
    return (
        f"rvec {float(sol.rvec.rx)!r} {float(sol.rvec.ry)!r} {float(sol.rvec.rz)!r}\n"
        f"tvec {float(sol.tvec[0])!r} {float(sol.tvec[1])!r} {float(sol.tvec[2])!r}\n"
        f"rmse_px {float(sol.rmse_px)!r}\n"
        f"iterations {sol.iterations}\n"
        f"converged {'true' if sol.converged else 'false'}\n"
        f"stop_reason {sol.stop_reason}\n"
    )


def parse_solution(text: str, source: str = "<solution>") -> PnPSolution:
    fields: dict[str, list[str]] = {}
    for lineno, line in _content_lines(text):
        parts = line.split()
        fields[parts[0]] = parts[1:]
    try:
        rvec = RotationVector(*(float(x) for x in fields["rvec"]))
        tvec = np.array([float(x) for x in fields["tvec"]])
        rmse = float(fields["rmse_px"][0])
        iters = int(fields["iterations"][0])
        converged = fields["converged"][0] == "true"
        stop = fields.get("stop_reason", ["unknown"])[0]
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ParseError(source, 0, f"bad solution file: {exc}") from None
    return PnPSolution(rvec, tvec, rmse, iters, converged, stop)


def parse_board_regions(text: str, source: str = "<boards>") -> list[BoardRegion]:
    boards = []
    for lineno, line in _content_lines(text):
        parts = line.split()
        if len(parts) < 8 or len(parts) % 2 != 0:
            raise ParseError(
                source, lineno, "expected 'name ground_truth_m u1 v1 u2 v2 u3 v3 ...'"
            )
        name = parts[0]
        try:
            gt = float(parts[1])
            coords = [float(p) for p in parts[2:]]
        except ValueError:
            raise ParseError(source, lineno, "coordinates must be numbers") from None
        poly = np.array(coords).reshape(-1, 2)
        try:
            boards.append(BoardRegion(poly, gt, name))
        except ValueError as exc:
            raise ParseError(source, lineno, str(exc)) from None
    return boards


def load_board_regions(path) -> list[BoardRegion]:
    with open(path, "r", encoding="ascii") as f:
        return parse_board_regions(f.read(), source=str(path))


def format_board_regions(boards) -> str:
    out = ["# name ground_truth_m u1 v1 u2 v2 ..."]
    for b in boards:
        coords = " ".join(f"{float(c)!r}" for c in b.polygon.ravel())
        out.append(f"{b.name} {float(b.ground_truth_range_m)!r} {coords}")
    return "\n".join(out) + "\n"


def overlay_to_csv(overlay: OverlayResult) -> str:
    buf = io.StringIO()
    buf.write("point_index,u,v,range_m\n")
    for i, (u, v), r in zip(overlay.indices, overlay.pixels, overlay.ranges):
        buf.write(f"{int(i)},{float(u)!r},{float(v)!r},{float(r)!r}\n")
    return buf.getvalue()


def overlay_from_csv(text: str, source: str = "<overlay>",
                     image_width: int | None = None, image_height: int | None = None) -> OverlayResult:
    """Rebuild an overlay from its CSV export.

    The CSV carries no image dimensions; when not supplied they are
    inferred as the smallest box containing every pixel.
    """
    indices, us, vs, rs = [], [], [], []
    lines = list(_content_lines(text))
    if not lines or lines[0][1] != "point_index,u,v,range_m":
        raise ParseError(source, 1, "missing 'point_index,u,v,range_m' header")
    for lineno, line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 4:
            raise ParseError(source, lineno, "expected 4 comma-separated fields")
        try:
            indices.append(int(parts[0]))
            us.append(float(parts[1]))
            vs.append(float(parts[2]))
            rs.append(float(parts[3]))
        except ValueError:
            raise ParseError(source, lineno, "bad numeric field") from None
    if image_width is None:
        image_width = int(math.ceil(max(us, default=0.0))) + 1
    if image_height is None:
        image_height = int(math.ceil(max(vs, default=0.0))) + 1
    return OverlayResult(
        indices=np.array(indices, dtype=np.int64),
        pixels=np.column_stack([us, vs]) if us else np.empty((0, 2)),
        ranges=np.array(rs),
        image_width=image_width,
        image_height=image_height,
    )


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    buf.write("board,tp,wrong,tpr,tolerance\n")
    for r in reports:
        buf.write(f"{r.board},{r.tp},{r.wrong},{r.tpr!r},{r.tolerance_fraction!r}\n")
    return buf.getvalue()


_TRACK_GEO_HEADER = "id,timestamp_ns,lat,lon,alt"
_TRACK_ENU_HEADER = "id,timestamp_ns,east,north,up"


def parse_tracks_csv(text: str, source: str = "<tracks>") -> dict[str, Track]:
    """Read labeled tracks; geographic rows share the first row's origin."""
    lines = list(_content_lines(text))
    if not lines:
        raise ParseError(source, 1, "empty track file")
    header = lines[0][1].replace(" ", "")
    if header == _TRACK_GEO_HEADER:
        geographic = True
    elif header == _TRACK_ENU_HEADER:
        geographic = False
    else:
        raise ParseError(
            source, lines[0][0],
            f"header must be '{_TRACK_GEO_HEADER}' or '{_TRACK_ENU_HEADER}'",
        )
    rows_by_id: dict[str, list] = {}
    origin: GeoPoint | None = None
    for lineno, line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 5:
            raise ParseError(source, lineno, "expected 5 comma-separated fields")
        track_id = parts[0].strip()
        try:
            ts = int(parts[1])
            a, b, c = float(parts[2]), float(parts[3]), float(parts[4])
        except ValueError:
            raise ParseError(source, lineno, "bad numeric field") from None
        try:
            if geographic:
                fix = GeoPoint(a, b, c, ts)
                if origin is None:
                    origin = fix
                point = geo_to_enu(origin, fix)
            else:
                point = EnuPoint(a, b, c, ts)
        except (ValueError, ToolkitError) as exc:
            raise ParseError(source, lineno, str(exc)) from None
        rows_by_id.setdefault(track_id, []).append(point)
    tracks = {}
    for track_id, samples in rows_by_id.items():
        try:
            tracks[track_id] = Track(track_id, tuple(samples))
        except ValueError as exc:
            raise ParseError(source, 0, str(exc)) from None
    return tracks


def load_tracks_csv(path) -> dict[str, Track]:
    with open(path, "r", encoding="ascii") as f:
        return parse_tracks_csv(f.read(), source=str(path))


def ttc_reports_to_csv(reports) -> str:
    buf = io.StringIO()
    buf.write("t_ns,range_m,closing_speed_mps,ttc_s\n")
    for r in reports:
        ttc_text = "" if r.ttc_s is None else repr(float(r.ttc_s))
        buf.write(f"{r.t_ns},{float(r.range_m)!r},{float(r.closing_speed_mps)!r},{ttc_text}\n")
    return buf.getvalue()
