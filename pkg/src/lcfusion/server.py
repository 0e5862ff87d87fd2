"""HTTP service hosting interactive calibration sessions for the UI.

Sessions are in-memory and short-lived: upload intrinsics, a point cloud
(bag or raw packet bytes), and an image; pick correspondences; solve;
fine-tune against the live overlay; score TPR.  Every number the UI shows
comes from these endpoints, so the client never re-implements projection
math.

Error mapping: 404 unknown session, 409 solving with fewer than six pairs,
400 for every other validation failure; bodies carry the module error name
as ``{"error": name, "detail": text}``.
"""

from __future__ import annotations

import io
import secrets
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .errors import ToolkitError
from .fusion import (
    BoardRegion,
    NoPointsOnBoard,
    PointCloudFrame,
    evaluate_tpr,
    project_cloud,
    render_overlay,
    write_image_rgb,
)
from .geometry import (
    DistortionParams,
    ExtrinsicTransform,
    IntrinsicMatrix,
    PixelCoord,
    Point3D,
    RotationVector,
    matrix_to_rodrigues,
)
from .ingest import assemble_frames, decode_frame_payload, read_packets_bytes
from .ingest.bag import MAGIC, BagReader, TOPIC_TYPE_POINTCLOUD
from .pnp import (
    Correspondence,
    FineTuneDelta,
    LMConfig,
    TooFewPairs,
    apply_fine_tune,
    refine_pnp_lm,
    reprojection_residuals,
    solve_pnp_linear,
)

DEFAULT_DECIMATION = 20_000


class IntrinsicsBody(BaseModel):
    fx: float
    fy: float
    ox: float
    oy: float
    image_width: int = Field(gt=0)
    image_height: int = Field(gt=0)
    k1: float = 0.0
    k2: float = 0.0
    p1: float = 0.0
    p2: float = 0.0
    k3: float = 0.0


class CorrespondenceBody(BaseModel):
    pixel: tuple[float, float]
    point_index: int | None = None
    lidar_point: tuple[float, float, float] | None = None
    label: str = ""


class LMBody(BaseModel):
    lambda_init: float = 1e-3
    lambda_up: float = 10.0
    lambda_down: float = 10.0
    max_iters: int = 100
    cost_tol: float = 1e-12
    step_tol: float = 1e-12


class SolveBody(BaseModel):
    lm: LMBody = LMBody()


class FineTuneBody(BaseModel):
    d_rvec: tuple[float, float, float] = (0.0, 0.0, 0.0)
    d_tvec: tuple[float, float, float] = (0.0, 0.0, 0.0)


class BoardBody(BaseModel):
    name: str = "board"
    ground_truth_range_m: float
    polygon: list[tuple[float, float]]
    tolerance_fraction: float = 0.05


@dataclass
class CalibrationSession:
    id: str
    intrinsics: IntrinsicMatrix
    distortion: DistortionParams
    image_width: int
    image_height: int
    lock: threading.Lock = field(default_factory=threading.Lock)
    cloud: PointCloudFrame | None = None
    image: np.ndarray | None = None
    correspondences: list[Correspondence] = field(default_factory=list)
    current_extrinsic: ExtrinsicTransform | None = None
    last_rmse_px: float | None = None
    history: list[tuple[ExtrinsicTransform, float | None]] = field(default_factory=list)


class ApiError(Exception):
    def __init__(self, status: int, name: str, detail: str):
        self.status = status
        self.name = name
        self.detail = detail


def _error_response(status: int, name: str, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": name, "detail": detail})


def create_app(ui_dir: Path | None = None) -> FastAPI:
    app = FastAPI(title="lcfusion calibration service", version="0.1.0")
    sessions: dict[str, CalibrationSession] = {}
    store_lock = threading.Lock()

    @app.exception_handler(ApiError)
    async def handle_api_error(_req: Request, exc: ApiError):
        return _error_response(exc.status, exc.name, exc.detail)

    @app.exception_handler(ToolkitError)
    async def handle_toolkit_error(_req: Request, exc: ToolkitError):
        status = 409 if isinstance(exc, TooFewPairs) else 400
        return _error_response(status, type(exc).__name__, str(exc))

    @app.exception_handler(ValueError)
    async def handle_value_error(_req: Request, exc: ValueError):
        return _error_response(400, "ValueError", str(exc))

    def get_session(session_id: str) -> CalibrationSession:
        with store_lock:
            sess = sessions.get(session_id)
        if sess is None:
            raise ApiError(404, "UnknownSession", f"no session {session_id!r}")
        return sess

    def require_cloud(sess: CalibrationSession) -> PointCloudFrame:
        if sess.cloud is None:
            raise ApiError(400, "NoCloud", "upload a point cloud first")
        return sess.cloud

    def require_extrinsic(sess: CalibrationSession) -> ExtrinsicTransform:
        if sess.current_extrinsic is None:
            raise ApiError(400, "NoExtrinsic", "solve or fine-tune first")
        return sess.current_extrinsic

    def extrinsic_json(ext: ExtrinsicTransform, rmse: float | None):
        rv = matrix_to_rodrigues(ext.rotation)
        return {
            "rvec": [rv.rx, rv.ry, rv.rz],
            "tvec": [float(x) for x in ext.translation],
            "rmse_px": rmse,
        }

    def overlay_json(sess: CalibrationSession):
        ext = require_extrinsic(sess)
        cloud = require_cloud(sess)
        overlay = project_cloud(
            cloud, sess.intrinsics, ext, sess.image_width, sess.image_height, sess.distortion
        )
        return {
            "image_width": sess.image_width,
            "image_height": sess.image_height,
            "points": [
                {"index": int(i), "u": float(u), "v": float(v), "range_m": float(r)}
                for i, (u, v), r in zip(overlay.indices, overlay.pixels, overlay.ranges)
            ],
        }

    def refresh_rmse(sess: CalibrationSession) -> float | None:
        if sess.current_extrinsic is None or len(sess.correspondences) == 0:
            return None
        _, rmse = reprojection_residuals(
            sess.current_extrinsic, sess.correspondences, sess.intrinsics, sess.distortion
        )
        return rmse

    @app.post("/api/sessions")
    def create_session(body: IntrinsicsBody):
        sess = CalibrationSession(
            id=secrets.token_hex(8),
            intrinsics=IntrinsicMatrix(body.fx, body.fy, body.ox, body.oy),
            distortion=DistortionParams(body.k1, body.k2, body.p1, body.p2, body.k3),
            image_width=body.image_width,
            image_height=body.image_height,
        )
        with store_lock:
            sessions[sess.id] = sess
        return {"session_id": sess.id}

    @app.post("/api/sessions/{session_id}/cloud")
    async def upload_cloud(session_id: str, request: Request):
        sess = get_session(session_id)
        data = await request.body()
        if not data:
            raise ApiError(400, "EmptyUpload", "request body is empty")
        if data[:4] == MAGIC:
            reader = BagReader(data)
            cloud_topics = [t for t in reader.topics if t.type == TOPIC_TYPE_POINTCLOUD]
            if not cloud_topics:
                raise ApiError(400, "NoCloudTopic", "bag has no pointcloud topic")
            topic_id = cloud_topics[0].topic_id
            frame = None
            for rec in reader:
                if rec.topic_id == topic_id:
                    frame = decode_frame_payload(rec.payload, rec.timestamp_ns)
                    break
            if frame is None:
                raise ApiError(400, "EmptyTopic", "pointcloud topic has no records")
        else:
            frames = list(assemble_frames(read_packets_bytes(data)))
            if not frames:
                raise ApiError(400, "NoFrames", "packet data produced no complete frame")
            frame = frames[0]
        with sess.lock:
            sess.cloud = frame
        return {"points": len(frame), "timestamp_ns": frame.timestamp_ns}

    @app.post("/api/sessions/{session_id}/image")
    async def upload_image(session_id: str, request: Request):
        from PIL import Image

        sess = get_session(session_id)
        data = await request.body()
        try:
            with Image.open(io.BytesIO(data)) as im:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
        except Exception as exc:
            raise ApiError(400, "BadImage", f"cannot decode image: {exc}") from None
        if arr.shape[1] != sess.image_width or arr.shape[0] != sess.image_height:
            raise ApiError(
                400,
                "DimensionMismatch",
                f"image is {arr.shape[1]}x{arr.shape[0]}, session expects "
                f"{sess.image_width}x{sess.image_height}",
            )
        with sess.lock:
            sess.image = arr
        return {"width": int(arr.shape[1]), "height": int(arr.shape[0])}

    @app.get("/api/sessions/{session_id}/cloud")
    def get_cloud(session_id: str, max_points: int = DEFAULT_DECIMATION):
        sess = get_session(session_id)
        cloud = require_cloud(sess)
        if max_points < 1:
            raise ApiError(400, "BadQuery", "max_points must be positive")
        n = len(cloud)
        stride = max(1, -(-n // max_points))  # ceil division: deterministic subset
        idx = np.arange(0, n, stride)
        xyz = cloud.xyz[idx]
        ranges = np.sqrt((xyz * xyz).sum(axis=1))
        return {
            "total_points": n,
            "stride": int(stride),
            "points": [
                {
                    "index": int(i),
                    "x": float(p[0]),
                    "y": float(p[1]),
                    "z": float(p[2]),
                    "range_m": float(r),
                }
                for i, p, r in zip(idx, xyz, ranges)
            ],
        }

    @app.get("/api/sessions/{session_id}/correspondences")
    def list_correspondences(session_id: str):
        sess = get_session(session_id)
        with sess.lock:
            return {
                "correspondences": [
                    {
                        "index": i,
                        "label": c.label,
                        "pixel": [c.pixel.u, c.pixel.v],
                        "lidar_point": [c.lidar_point.x, c.lidar_point.y, c.lidar_point.z],
                    }
                    for i, c in enumerate(sess.correspondences)
                ]
            }

    @app.post("/api/sessions/{session_id}/correspondences")
    def add_correspondence(session_id: str, body: CorrespondenceBody):
        sess = get_session(session_id)
        if (body.point_index is None) == (body.lidar_point is None):
            raise ApiError(400, "BadCorrespondence", "give exactly one of point_index or lidar_point")
        if body.point_index is not None:
            cloud = require_cloud(sess)
            if not 0 <= body.point_index < len(cloud):
                raise ApiError(400, "BadCorrespondence", f"point_index {body.point_index} out of range")
            p = Point3D(*cloud.xyz[body.point_index])
        else:
            p = Point3D(*body.lidar_point)
        corr = Correspondence(p, PixelCoord(*body.pixel), body.label)
        with sess.lock:
            sess.correspondences.append(corr)
            index = len(sess.correspondences) - 1
        return {"index": index, "count": index + 1}

    @app.delete("/api/sessions/{session_id}/correspondences/{index}")
    def delete_correspondence(session_id: str, index: int):
        sess = get_session(session_id)
        with sess.lock:
            if not 0 <= index < len(sess.correspondences):
                raise ApiError(400, "BadCorrespondence", f"index {index} out of range")
            sess.correspondences.pop(index)
            return {"count": len(sess.correspondences)}

    @app.post("/api/sessions/{session_id}/solve")
    def solve(session_id: str, body: SolveBody = SolveBody()):
        sess = get_session(session_id)
        cfg = LMConfig(
            lambda_init=body.lm.lambda_init,
            lambda_up=body.lm.lambda_up,
            lambda_down=body.lm.lambda_down,
            max_iters=body.lm.max_iters,
            cost_tol=body.lm.cost_tol,
            step_tol=body.lm.step_tol,
        )
        with sess.lock:
            corrs = list(sess.correspondences)
            init = solve_pnp_linear(corrs, sess.intrinsics, sess.distortion)
            sol = refine_pnp_lm(init, corrs, sess.intrinsics, cfg, sess.distortion)
            ext = sol.extrinsic
            residuals, _ = reprojection_residuals(ext, corrs, sess.intrinsics, sess.distortion)
            sess.current_extrinsic = ext
            sess.last_rmse_px = sol.rmse_px
            sess.history.append((ext, sol.rmse_px))
        return {
            **extrinsic_json(ext, sol.rmse_px),
            "iterations": sol.iterations,
            "converged": sol.converged,
            "stop_reason": sol.stop_reason,
            "residuals": [
                [float(residuals[2 * i]), float(residuals[2 * i + 1])]
                for i in range(len(corrs))
            ],
        }

    @app.post("/api/sessions/{session_id}/fine-tune")
    def fine_tune(session_id: str, body: FineTuneBody):
        sess = get_session(session_id)
        with sess.lock:
            ext = require_extrinsic(sess)
            new_ext = apply_fine_tune(ext, FineTuneDelta(body.d_rvec, body.d_tvec))
            sess.current_extrinsic = new_ext
            rmse = refresh_rmse(sess)
            sess.last_rmse_px = rmse
            sess.history.append((new_ext, rmse))
            payload = extrinsic_json(new_ext, rmse)
            payload["overlay"] = overlay_json(sess) if sess.cloud is not None else None
        return payload

    @app.get("/api/sessions/{session_id}/overlay")
    def get_overlay(session_id: str):
        sess = get_session(session_id)
        with sess.lock:
            return overlay_json(sess)

    @app.get("/api/sessions/{session_id}/overlay.png")
    def get_overlay_png(session_id: str, radius: int = 2):
        sess = get_session(session_id)
        with sess.lock:
            ext = require_extrinsic(sess)
            cloud = require_cloud(sess)
            if sess.image is None:
                base = np.zeros((sess.image_height, sess.image_width, 3), dtype=np.uint8)
            else:
                base = sess.image
            overlay = project_cloud(
                cloud, sess.intrinsics, ext, sess.image_width, sess.image_height, sess.distortion
            )
            rendered = render_overlay(base, overlay, radius=radius)
        buf = io.BytesIO()
        write_image_rgb(buf, rendered)
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.post("/api/sessions/{session_id}/evaluate-tpr")
    def evaluate(session_id: str, body: BoardBody):
        sess = get_session(session_id)
        with sess.lock:
            ext = require_extrinsic(sess)
            cloud = require_cloud(sess)
            board = BoardRegion(
                np.array(body.polygon, dtype=float), body.ground_truth_range_m, body.name
            )
            overlay = project_cloud(
                cloud, sess.intrinsics, ext, sess.image_width, sess.image_height, sess.distortion
            )
            try:
                rep = evaluate_tpr(overlay, board, body.tolerance_fraction)
            except NoPointsOnBoard as exc:
                raise ApiError(400, "NoPointsOnBoard", str(exc)) from None
        return {
            "board": rep.board,
            "tp": rep.tp,
            "wrong": rep.wrong,
            "tpr": rep.tpr,
            "tolerance_fraction": rep.tolerance_fraction,
        }

    @app.get("/api/sessions/{session_id}/history")
    def history(session_id: str):
        sess = get_session(session_id)
        with sess.lock:
            return {
                "history": [extrinsic_json(ext, rmse) for ext, rmse in sess.history],
            }

    @app.get("/api/sessions/{session_id}/snapshot")
    def snapshot(session_id: str):
        sess = get_session(session_id)
        with sess.lock:
            current = (
                extrinsic_json(sess.current_extrinsic, sess.last_rmse_px)
                if sess.current_extrinsic is not None
                else None
            )
            return {
                "session_id": sess.id,
                "intrinsics": {
                    "fx": sess.intrinsics.fx,
                    "fy": sess.intrinsics.fy,
                    "ox": sess.intrinsics.ox,
                    "oy": sess.intrinsics.oy,
                    "image_width": sess.image_width,
                    "image_height": sess.image_height,
                },
                "cloud_points": len(sess.cloud) if sess.cloud is not None else 0,
                "has_image": sess.image is not None,
                "correspondences": [
                    {
                        "label": c.label,
                        "pixel": [c.pixel.u, c.pixel.v],
                        "lidar_point": [c.lidar_point.x, c.lidar_point.y, c.lidar_point.z],
                    }
                    for c in sess.correspondences
                ],
                "current": current,
                "history_length": len(sess.history),
            }

    if ui_dir is not None and ui_dir.is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


app = create_app()
