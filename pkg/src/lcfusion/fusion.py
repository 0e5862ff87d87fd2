"""Whole-frame projection, overlay rendering, and fusion accuracy scoring.

``project_cloud`` maps a LiDAR frame onto an image, keeping exactly the
points with positive camera-frame depth whose pixels land inside the image.
``render_overlay`` paints those pixels as pure-green dots, and
``evaluate_tpr`` scores the calibration against a ground-truth board: a
projected point counted as correct when its LiDAR range matches the board's
surveyed distance within a relative tolerance,

    TPR = correct mappings / (correct + wrong mappings).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from PIL import Image

from .errors import ToolkitError
from .geometry import (
    DistortionParams,
    ExtrinsicTransform,
    IntrinsicMatrix,
    PixelCoord,
    Point3D,
    _check_distortion,
    transform_points,
)

__all__ = [
    "PointCloudFrame",
    "OverlayResult",
    "BoardRegion",
    "FusionReport",
    "DimensionMismatch",
    "NoPointsOnBoard",
    "MAX_POINTS_PER_FRAME",
    "project_cloud",
    "render_overlay",
    "evaluate_tpr",
    "read_image_rgb",
    "write_image_rgb",
]

# 64 beams x 2048 columns per 10 Hz revolution
MAX_POINTS_PER_FRAME = 131_072

GREEN = (0, 255, 0)


class DimensionMismatch(ToolkitError):
    pass


class NoPointsOnBoard(ToolkitError):
    """No overlay point fell inside the board polygon; no TPR is fabricated."""


@dataclass(frozen=True, eq=False)
class PointCloudFrame:
    """One timestamped LiDAR scan: (N, 3) float64 meters + (N,) uint8 intensity."""

    timestamp_ns: int
    xyz: np.ndarray
    intensity: np.ndarray

    def __post_init__(self):
        if self.timestamp_ns < 0:
            raise ValueError("timestamp_ns must be non-negative")
        xyz = np.asarray(self.xyz, dtype=float)
        if xyz.ndim != 2 or xyz.shape[1] != 3:
            raise ValueError(f"xyz must be (N, 3), got {xyz.shape}")
        inten = np.asarray(self.intensity, dtype=np.uint8)
        if inten.shape != (xyz.shape[0],):
            raise ValueError("intensity length must match point count")
        if xyz.shape[0] > MAX_POINTS_PER_FRAME:
            raise ValueError(
                f"frame holds {xyz.shape[0]} points, above the per-scan maximum {MAX_POINTS_PER_FRAME}"
            )
        xyz = xyz.copy()
        xyz.flags.writeable = False
        inten = inten.copy()
        inten.flags.writeable = False
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "intensity", inten)

    def __len__(self) -> int:
        return self.xyz.shape[0]

    @property
    def points(self) -> Iterator[tuple[Point3D, int]]:
        for row, i in zip(self.xyz, self.intensity):
            yield Point3D(*row), int(i)


@dataclass(frozen=True, eq=False)
class OverlayResult:
    """Projected in-bounds points of one frame, in source order.

    ``indices`` are positions in the source frame, ``pixels`` the (u, v)
    coordinates, ``ranges`` the LiDAR-frame Euclidean distances.
    """

    indices: np.ndarray
    pixels: np.ndarray
    ranges: np.ndarray
    image_width: int
    image_height: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        px = np.asarray(self.pixels, dtype=float).reshape(-1, 2)
        rg = np.asarray(self.ranges, dtype=float)
        if not (len(idx) == len(px) == len(rg)):
            raise ValueError("indices, pixels and ranges must have equal length")
        if self.image_width <= 0 or self.image_height <= 0:
            raise ValueError("image dimensions must be positive")
        if len(px):
            u, v = px[:, 0], px[:, 1]
            if (u < 0).any() or (u >= self.image_width).any() or (v < 0).any() or (v >= self.image_height).any():
                raise ValueError("overlay contains out-of-bounds pixels")
            if (rg <= 0).any():
                raise ValueError("ranges must be positive")
        for name, arr in (("indices", idx), ("pixels", px), ("ranges", rg)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def projected(self) -> Iterator[tuple[int, PixelCoord, float]]:
        for i, (u, v), r in zip(self.indices, self.pixels, self.ranges):
            yield int(i), PixelCoord(float(u), float(v)), float(r)


@dataclass(frozen=True, eq=False)
class BoardRegion:
    """A convex image polygon marking a ground-truth board at a known range."""

    polygon: np.ndarray
    ground_truth_range_m: float
    name: str

    def __post_init__(self):
        poly = np.asarray(self.polygon, dtype=float).reshape(-1, 2)
        if len(poly) < 3:
            raise ValueError("polygon needs at least 3 vertices")
        if self.ground_truth_range_m <= 0:
            raise ValueError("ground_truth_range_m must be positive")
        crosses = _edge_crosses(poly)
        if (crosses == 0).any() or not (np.all(crosses > 0) or np.all(crosses < 0)):
            raise ValueError("polygon must be strictly convex and non-degenerate")
        poly = poly.copy()
        poly.flags.writeable = False
        object.__setattr__(self, "polygon", poly)

    def contains(self, u: float, v: float) -> bool:
        """Point-in-polygon with boundary points counted inside."""
        return bool(_points_in_polygon(np.array([[u, v]]), self.polygon)[0])


def _edge_crosses(poly: np.ndarray) -> np.ndarray:
    """Cross products of consecutive edge pairs; uniform sign = convex."""
    nxt = np.roll(poly, -1, axis=0)
    edges = nxt - poly
    nxt_edges = np.roll(edges, -1, axis=0)
    return edges[:, 0] * nxt_edges[:, 1] - edges[:, 1] * nxt_edges[:, 0]


def _points_in_polygon(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Boolean mask of points inside (or on the edge of) a convex polygon."""
    orient = 1.0 if _edge_crosses(poly)[0] > 0 else -1.0
    inside = np.ones(len(pts), dtype=bool)
    for i in range(len(poly)):
        a = poly[i]
        b = poly[(i + 1) % len(poly)]
        cross = (b[0] - a[0]) * (pts[:, 1] - a[1]) - (b[1] - a[1]) * (pts[:, 0] - a[0])
        inside &= orient * cross >= 0
    return inside


@dataclass(frozen=True)
class FusionReport:
    """TPR score of one board: tp correct mappings vs wrong mappings."""

    board: str
    tp: int
    wrong: int
    tpr: float
    tolerance_fraction: float


def project_cloud(
    frame: PointCloudFrame,
    K: IntrinsicMatrix,
    ext: ExtrinsicTransform,
    width: int,
    height: int,
    dist: DistortionParams | None = None,
) -> OverlayResult:
    """Project a whole frame onto the image.

    Keeps exactly the points with camera-frame z > 0 whose pixel lands
    in-bounds (0 <= u < width, 0 <= v < height), preserving input order.
    Zero-range returns (points at the sensor origin) are sensor blanks and
    are dropped.  An empty overlay is a valid result.
    """
    _check_distortion(dist)
    if width <= 0 or height <= 0:
        raise ValueError("image dimensions must be positive")
    xyz = frame.xyz
    if len(xyz) == 0:
        return OverlayResult(np.empty(0, dtype=np.int64), np.empty((0, 2)), np.empty(0), width, height)

    pc = transform_points(ext, xyz)
    front = pc[:, 2] > 0
    idx = np.nonzero(front)[0]
    x, y, z = pc[idx, 0], pc[idx, 1], pc[idx, 2]
    u = K.fx * x / z + K.ox
    v = K.fy * y / z + K.oy
    wx, wy, wz = xyz[idx, 0], xyz[idx, 1], xyz[idx, 2]
    rng = np.sqrt(wx * wx + wy * wy + wz * wz)
    keep = (u >= 0) & (u < width) & (v >= 0) & (v < height) & (rng > 0)
    return OverlayResult(
        indices=idx[keep],
        pixels=np.column_stack([u[keep], v[keep]]),
        ranges=rng[keep],
        image_width=width,
        image_height=height,
    )


def render_overlay(image: np.ndarray, overlay: OverlayResult, radius: int = 2) -> np.ndarray:
    """Return a copy of the image with a pure-green dot at each overlay pixel.

    Pixels are rounded half-up; dots are filled disks of the given radius
    (radius 0 paints a single pixel) and are clipped at the image border.
    The input buffer is untouched.
    """
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise DimensionMismatch(f"image must be (H, W, 3) uint8, got {img.shape} {img.dtype}")
    if img.shape[0] != overlay.image_height or img.shape[1] != overlay.image_width:
        raise DimensionMismatch(
            f"image is {img.shape[1]}x{img.shape[0]}, overlay expects "
            f"{overlay.image_width}x{overlay.image_height}"
        )
    if radius < 0:
        raise ValueError("radius must be non-negative")
    out = img.copy()
    h, w = out.shape[:2]
    offsets = [
        (dx, dy)
        for dx in range(-radius, radius + 1)
        for dy in range(-radius, radius + 1)
        if dx * dx + dy * dy <= radius * radius
    ]
    for u, v in overlay.pixels:
        cu = int(math.floor(u + 0.5))
        cv = int(math.floor(v + 0.5))
        for dx, dy in offsets:
            px, py = cu + dx, cv + dy
            if 0 <= px < w and 0 <= py < h:
                out[py, px] = GREEN
    return out


def evaluate_tpr(
    overlay: OverlayResult, board: BoardRegion, tolerance_fraction: float = 0.05
) -> FusionReport:
    """Score fusion accuracy on one board.

    Only overlay entries whose pixel lies inside (or on) the board polygon
    are considered; each is a correct mapping when its LiDAR range is within
    ``tolerance_fraction * ground_truth`` of the board's surveyed range,
    otherwise a wrong mapping.  Raises NoPointsOnBoard when nothing lands in
    the polygon (the calibration misses the board entirely).
    """
    if tolerance_fraction <= 0:
        raise ValueError("tolerance_fraction must be positive")
    if len(overlay) == 0:
        raise NoPointsOnBoard(f"overlay is empty; board {board.name!r} not covered")
    mask = _points_in_polygon(overlay.pixels, board.polygon)
    n_on = int(mask.sum())
    if n_on == 0:
        raise NoPointsOnBoard(f"no projected point falls inside board {board.name!r}")
    gt = board.ground_truth_range_m
    ok = np.abs(overlay.ranges[mask] - gt) <= tolerance_fraction * gt
    tp = int(ok.sum())
    wrong = n_on - tp
    return FusionReport(
        board=board.name,
        tp=tp,
        wrong=wrong,
        tpr=tp / n_on,
        tolerance_fraction=tolerance_fraction,
    )


def read_image_rgb(path) -> np.ndarray:
    """Load an image file as an (H, W, 3) uint8 RGB array."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def write_image_rgb(path, image: np.ndarray) -> None:
    """Write an (H, W, 3) uint8 RGB array as PNG (or per the extension)."""
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise DimensionMismatch(f"image must be (H, W, 3) uint8, got {img.shape} {img.dtype}")
    Image.fromarray(img, mode="RGB").save(path)
