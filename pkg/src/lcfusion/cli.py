"""Command-line shell for the batch pipelines.

Subcommands: ``calib solve``, ``fuse project``, ``fuse eval-tpr``,
``ingest nmea``, ``ingest assemble``, ``sync``, ``ttc``, ``serve``.

Exit codes: 0 success (for ``calib solve``, converged); 1 generic failure
or an unconverged solve; 2 TooFewPairs / DegenerateConfiguration;
3 NoPointsOnBoard.  Outputs are deterministic: every timestamp written
comes from input data, never the wall clock.  Diagnostics go to stderr
with file and line/byte positions where known.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import formats
from .errors import ToolkitError
from .fusion import evaluate_tpr, NoPointsOnBoard, project_cloud, read_image_rgb, render_overlay, write_image_rgb
from .ingest import (
    BagReader,
    BagRecord,
    BagTopic,
    BagWriter,
    TOPIC_TYPE_NMEA,
    TOPIC_TYPE_POINTCLOUD,
    assemble_frames,
    AssemblerStats,
    decode_frame_payload,
    encode_frame_payload,
    parse_nmea,
    read_packet_file,
    synchronize,
    GgaFix,
)
from .kinematics import ttc
from .pnp import DegenerateConfiguration, LMConfig, TooFewPairs, refine_pnp_lm, solve_pnp_linear

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CALIB_INPUT = 2
EXIT_NO_POINTS = 3


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ToolkitError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        if isinstance(exc, (TooFewPairs, DegenerateConfiguration)):
            return EXIT_CALIB_INPUT
        if isinstance(exc, NoPointsOnBoard):
            return EXIT_NO_POINTS
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lcfusion", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    calib = sub.add_parser("calib", help="extrinsic calibration").add_subparsers(
        dest="subcommand", required=True
    )
    solve = calib.add_parser("solve", help="solve pose from a correspondence file")
    solve.add_argument("--pairs", required=True, help="correspondence file (label u v X Y Z)")
    solve.add_argument("--intrinsics", required=True, help="intrinsics config file")
    solve.add_argument("--out", required=True, help="solution file to write")
    solve.add_argument("--lm-lambda-init", type=float, default=1e-3)
    solve.add_argument("--lm-lambda-up", type=float, default=10.0)
    solve.add_argument("--lm-lambda-down", type=float, default=10.0)
    solve.add_argument("--lm-max-iters", type=int, default=100)
    solve.add_argument("--lm-cost-tol", type=float, default=1e-12)
    solve.add_argument("--lm-step-tol", type=float, default=1e-12)
    solve.set_defaults(handler=cmd_calib_solve)

    fuse = sub.add_parser("fuse", help="projection and evaluation").add_subparsers(
        dest="subcommand", required=True
    )
    project = fuse.add_parser("project", help="project a bag frame onto an image")
    project.add_argument("--bag", required=True)
    project.add_argument("--topic", required=True, help="point-cloud topic name")
    project.add_argument("--calib", required=True, help="solution file from calib solve")
    project.add_argument("--intrinsics", required=True)
    project.add_argument("--image", help="image to draw on (required for .png output)")
    project.add_argument("--frame-index", type=int, default=0)
    project.add_argument("--radius", type=int, default=2, help="dot radius for PNG output")
    project.add_argument("--out", required=True, help="overlay .png or .csv")
    project.set_defaults(handler=cmd_fuse_project)

    eval_tpr = fuse.add_parser("eval-tpr", help="score an overlay against board regions")
    eval_tpr.add_argument("--overlay", required=True, help="overlay CSV from fuse project")
    eval_tpr.add_argument("--board", required=True, help="board-region file")
    eval_tpr.add_argument("--tolerance", type=float, default=0.05)
    eval_tpr.add_argument("--out", required=True, help="report CSV")
    eval_tpr.set_defaults(handler=cmd_fuse_eval_tpr)

    ingest = sub.add_parser("ingest", help="stream parsing").add_subparsers(
        dest="subcommand", required=True
    )
    nmea = ingest.add_parser("nmea", help="parse NMEA sentences to a fix CSV")
    nmea.add_argument("--in", dest="infile", required=True)
    nmea.add_argument("--out", required=True)
    nmea.set_defaults(handler=cmd_ingest_nmea)

    assemble = ingest.add_parser("assemble", help="reassemble a packet file into a bag")
    assemble.add_argument("--packets", required=True)
    assemble.add_argument("--out", required=True)
    assemble.add_argument("--topic-name", default="lidar")
    assemble.add_argument("--reorder-window", type=int, default=32)
    assemble.add_argument("--timeout-ms", type=int, default=1000)
    assemble.set_defaults(handler=cmd_ingest_assemble)

    sync = sub.add_parser("sync", help="synchronize bag streams at the LiDAR cadence")
    sync.add_argument("--bag", required=True)
    sync.add_argument("--tolerance-ms", type=float, default=50.0)
    sync.add_argument("--out", required=True)
    sync.set_defaults(handler=cmd_sync)

    ttc_cmd = sub.add_parser("ttc", help="time-to-collision between two tracks")
    ttc_cmd.add_argument("--tracks", required=True, help="track CSV")
    ttc_cmd.add_argument("--pair", required=True, help="two track ids, comma separated")
    ttc_cmd.add_argument("--out", required=True)
    ttc_cmd.set_defaults(handler=cmd_ttc)

    serve = sub.add_parser("serve", help="run the calibration HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--ui", help="directory with the built UI bundle to host at /ui")
    serve.set_defaults(handler=cmd_serve)

    return parser


def cmd_calib_solve(args) -> int:
    corrs = formats.load_correspondences(args.pairs)
    cam = formats.load_intrinsics(args.intrinsics)
    cfg = LMConfig(
        lambda_init=args.lm_lambda_init,
        lambda_up=args.lm_lambda_up,
        lambda_down=args.lm_lambda_down,
        max_iters=args.lm_max_iters,
        cost_tol=args.lm_cost_tol,
        step_tol=args.lm_step_tol,
    )
    init = solve_pnp_linear(corrs, cam.intrinsics, cam.distortion)
    sol = refine_pnp_lm(init, corrs, cam.intrinsics, cfg, cam.distortion)
    Path(args.out).write_text(formats.format_solution(sol), encoding="ascii")
    if not sol.converged:
        print(f"warning: solver stopped on {sol.stop_reason} without converging", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def _find_topic(reader: BagReader, name: str, expected_type: str) -> BagTopic:
    for t in reader.topics:
        if t.name == name:
            if t.type != expected_type:
                raise ToolkitError(f"topic {name!r} has type {t.type!r}, expected {expected_type!r}")
            return t
    raise ToolkitError(f"bag has no topic named {name!r}")


def cmd_fuse_project(args) -> int:
    cam = formats.load_intrinsics(args.intrinsics)
    sol = formats.parse_solution(Path(args.calib).read_text(encoding="ascii"), source=args.calib)
    ext = sol.extrinsic

    reader = BagReader(args.bag)
    topic = _find_topic(reader, args.topic, TOPIC_TYPE_POINTCLOUD)
    frames = [r for r in reader if r.topic_id == topic.topic_id]
    if not 0 <= args.frame_index < len(frames):
        raise ToolkitError(
            f"frame index {args.frame_index} out of range; topic has {len(frames)} frames"
        )
    record = frames[args.frame_index]
    frame = decode_frame_payload(record.payload, record.timestamp_ns)

    overlay = project_cloud(
        frame, cam.intrinsics, ext, cam.image_width, cam.image_height, cam.distortion
    )
    out = Path(args.out)
    if out.suffix.lower() == ".png":
        if not args.image:
            raise ToolkitError("--image is required for PNG output")
        image = read_image_rgb(args.image)
        write_image_rgb(out, render_overlay(image, overlay, radius=args.radius))
    else:
        out.write_text(formats.overlay_to_csv(overlay), encoding="ascii")
    print(f"projected {len(overlay)} of {len(frame)} points", file=sys.stderr)
    return EXIT_OK


def cmd_fuse_eval_tpr(args) -> int:
    overlay = formats.overlay_from_csv(
        Path(args.overlay).read_text(encoding="ascii"), source=args.overlay
    )
    boards = formats.load_board_regions(args.board)
    if not boards:
        raise ToolkitError(f"{args.board}: no board regions")
    reports = []
    failed = None
    for board in boards:
        try:
            reports.append(evaluate_tpr(overlay, board, args.tolerance))
        except NoPointsOnBoard as exc:
            failed = exc
            print(f"warning: {exc}", file=sys.stderr)
    Path(args.out).write_text(formats.reports_to_csv(reports), encoding="ascii")
    for r in reports:
        print(f"{r.board}: tp={r.tp} wrong={r.wrong} tpr={r.tpr:.4f}", file=sys.stderr)
    if failed is not None:
        raise failed
    return EXIT_OK


def cmd_ingest_nmea(args) -> int:
    header = "sentence,utc_time,latitude,longitude,fix_quality,satellites,hdop,altitude_m,speed_knots,course_deg\n"
    rows = []
    warnings = 0
    with open(args.infile, "r", encoding="ascii", errors="replace") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                fix = parse_nmea(line)
            except ToolkitError as exc:
                warnings += 1
                print(f"{args.infile}:{lineno}: {type(exc).__name__}: {exc}", file=sys.stderr)
                continue
            if isinstance(fix, GgaFix):
                rows.append(
                    f"GGA,{fix.utc_time!r},{fix.latitude!r},{fix.longitude!r},"
                    f"{fix.fix_quality.value},{fix.satellites},{fix.hdop!r},{fix.altitude_m!r},,"
                )
            else:
                course = "" if fix.course_deg is None else repr(fix.course_deg)
                rows.append(
                    f"RMC,{fix.utc_time!r},{fix.latitude!r},{fix.longitude!r},,,,,"
                    f"{fix.speed_knots!r},{course}"
                )
    Path(args.out).write_text(header + "\n".join(rows) + ("\n" if rows else ""), encoding="ascii")
    if warnings:
        print(f"{warnings} line(s) rejected", file=sys.stderr)
    return EXIT_OK


def cmd_ingest_assemble(args) -> int:
    stats = AssemblerStats()
    frames = list(
        assemble_frames(
            read_packet_file(args.packets),
            reorder_window=args.reorder_window,
            frame_timeout_ns=args.timeout_ms * 1_000_000,
            stats=stats,
        )
    )
    topic = BagTopic(1, args.topic_name, TOPIC_TYPE_POINTCLOUD)
    with BagWriter(args.out, [topic]) as w:
        for frame in frames:
            w.write(BagRecord(1, frame.timestamp_ns, encode_frame_payload(frame)))
    print(
        f"emitted {stats.frames_emitted} frame(s), dropped {stats.frames_dropped}, "
        f"duplicates {stats.duplicate_packets}, late {stats.late_packets}",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_sync(args) -> int:
    reader = BagReader(args.bag)
    lidar_topics = [t for t in reader.topics if t.type == TOPIC_TYPE_POINTCLOUD]
    if len(lidar_topics) != 1:
        raise ToolkitError(f"bag must have exactly one pointcloud topic, found {len(lidar_topics)}")
    lidar_topic = lidar_topics[0]
    cam_topics = {t.topic_id: t.name for t in reader.topics if t.type.startswith("image/")}
    gps_topics = [t for t in reader.topics if t.type == TOPIC_TYPE_NMEA]
    if len(gps_topics) != 1:
        raise ToolkitError(f"bag must have exactly one nmea topic, found {len(gps_topics)}")
    gps_topic = gps_topics[0]

    lidar_frames = []
    cameras: dict[str, list[BagRecord]] = {name: [] for name in cam_topics.values()}
    gps: list[BagRecord] = []
    for rec in reader:
        if rec.topic_id == lidar_topic.topic_id:
            lidar_frames.append(decode_frame_payload(rec.payload, rec.timestamp_ns))
        elif rec.topic_id in cam_topics:
            cameras[cam_topics[rec.topic_id]].append(rec)
        elif rec.topic_id == gps_topic.topic_id:
            gps.append(rec)

    samples, stats = synchronize(
        lidar_frames, cameras, gps, tolerance_ns=int(args.tolerance_ms * 1_000_000)
    )
    cam_names = sorted(cameras)
    header = ["lidar_timestamp_ns"]
    for name in cam_names:
        header += [f"{name}_timestamp_ns", f"{name}_skew_ns"]
    header += ["gps_timestamp_ns", "gps_skew_ns"]
    lines = [",".join(header)]
    for s in samples:
        row = [str(s.lidar.timestamp_ns)]
        for name in cam_names:
            row += [str(s.cameras[name].timestamp_ns), str(s.skew_ns[name])]
        row += [str(s.gps.timestamp_ns), str(s.skew_ns["gps"])]
        lines.append(",".join(row))
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="ascii")
    print(f"matched {stats.matched}, skipped {stats.skipped}", file=sys.stderr)
    return EXIT_OK


def cmd_ttc(args) -> int:
    tracks = formats.load_tracks_csv(args.tracks)
    ids = args.pair.split(",")
    if len(ids) != 2:
        raise ToolkitError("--pair expects exactly two ids, e.g. --pair ego,car")
    missing = [i for i in ids if i not in tracks]
    if missing:
        raise ToolkitError(f"track id(s) not in file: {', '.join(missing)}")
    a, b = tracks[ids[0]], tracks[ids[1]]
    t_lo = max(a.start_ns, b.start_ns)
    t_hi = min(a.end_ns, b.end_ns)
    if t_lo > t_hi:
        raise ToolkitError("tracks do not overlap in time")
    times = sorted({s.timestamp_ns for s in a.samples if t_lo <= s.timestamp_ns <= t_hi}
                   | {s.timestamp_ns for s in b.samples if t_lo <= s.timestamp_ns <= t_hi})
    reports = [ttc(a, b, t) for t in times]
    Path(args.out).write_text(formats.ttc_reports_to_csv(reports), encoding="ascii")
    closing = [r for r in reports if r.ttc_s is not None]
    if closing:
        worst = min(closing, key=lambda r: r.ttc_s)
        print(f"{len(reports)} samples; minimum ttc {worst.ttc_s:.3f} s at t={worst.t_ns}", file=sys.stderr)
    else:
        print(f"{len(reports)} samples; tracks never closing", file=sys.stderr)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    app = create_app(ui_dir=Path(args.ui) if args.ui else None)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
