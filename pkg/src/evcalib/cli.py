"""Command-line entry points: calib, simulate, inspect.

All diagnostics go to stderr; data goes to files. Exit status is 0 exactly
when the requested output was written (report, stream, or inspection
dumps). Nonzero codes: 2 unreadable or invalid input, 3 insufficient
observations, 4 solver failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .calib import calibrate_views
from .clustering import ClusterLabel
from .config import RunConfig, load_config_file
from .events import load_events, window_events, write_events
from .grid import load_board_spec
from .pipeline import detect_views, window_stages
from .report import write_report
from .sim import load_scenario, simulate_scenario, write_truth
from . import viz

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_TOO_FEW_VIEWS = 3
EXIT_SOLVER = 4


def _err(msg: str) -> None:
    print(f"evcalib: {msg}", file=sys.stderr)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _build_config(args) -> RunConfig:
    values = load_config_file(args.config) if args.config else {}
    if getattr(args, "window", None) is not None:
        values["window_len"] = args.window
    if getattr(args, "seed", None) is not None:
        values["seed"] = args.seed
    return RunConfig(
        events_path=args.events,
        board_path=args.board,
        out_path=getattr(args, "out", "") or "",
        values=values,
    )


def cmd_calibrate(args) -> int:
    try:
        cfg = _build_config(args)
        board = load_board_spec(args.board)
        geometry = cfg.geometry()
        events = load_events(args.events, geometry)
    except (OSError, ValueError) as exc:
        _err(str(exc))
        return EXIT_BAD_INPUT

    threads = args.threads if args.threads else (os.cpu_count() or 1)
    detections = detect_views(events, geometry, board,
                              cfg.detector_params(), threads=threads)
    for det in detections:
        state = "ok" if det.ok else "--"
        _log(f"window {det.index:5d} t={det.t:9.4f} {state} "
             f"events={det.n_events:6d} pairs={det.n_pairs:3d} "
             f"centers={det.n_centers:3d}")
    observations = [d.observation for d in detections if d.ok]
    _log(f"detected {len(observations)} / {len(detections)} windows")

    min_views = cfg["calib.min_views"]
    if len(observations) < min_views:
        _err(f"insufficient observations: {len(observations)} < {min_views}")
        return EXIT_TOO_FEW_VIEWS

    try:
        result = calibrate_views(observations, cfg.calib_options())
    except (ValueError, np.linalg.LinAlgError) as exc:
        _err(f"calibration failed: {exc}")
        return EXIT_SOLVER

    echo = cfg.echo(threads=threads, n_windows=len(detections),
                    n_detections=len(observations))
    try:
        write_report(args.out, result, geometry, echo)
    except OSError as exc:
        _err(f"cannot write report: {exc}")
        return EXIT_BAD_INPUT
    intr = result.intrinsics
    _log(f"rms_reproj = {result.rms:.6f} px over {result.n_views} views")
    _log("intrinsics: fx={:.4f} fy={:.4f} cx={:.4f} cy={:.4f} "
         "k1={:+.5f} k2={:+.5f} p1={:+.2e} p2={:+.2e}".format(
             intr.fx, intr.fy, intr.cx, intr.cy,
             intr.k1, intr.k2, intr.p1, intr.p2))
    _log(f"report written to {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except (OSError, ValueError, KeyError) as exc:
        _err(f"invalid scenario: {exc}")
        return EXIT_BAD_INPUT
    sim_ev, truth_rows = simulate_scenario(scenario)
    try:
        write_events(args.out_events, sim_ev.events)
        write_truth(truth_rows, args.out_truth, scenario.intrinsics)
    except OSError as exc:
        _err(f"cannot write output: {exc}")
        return EXIT_BAD_INPUT
    _log(f"wrote {len(sim_ev)} events, {len(truth_rows)} truth rows")
    return EXIT_OK


def _write_lines(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(" ".join(str(v) for v in row) + "\n")


def cmd_inspect(args) -> int:
    try:
        cfg = _build_config(args)
        board = load_board_spec(args.board)
        geometry = cfg.geometry()
        events = load_events(args.events, geometry)
    except (OSError, ValueError) as exc:
        _err(str(exc))
        return EXIT_BAD_INPUT

    params = cfg.detector_params()
    windows = window_events(events, params.window_len)
    if not 0 <= args.window_index < len(windows):
        _err(f"window index {args.window_index} out of range "
             f"(stream has {len(windows)} windows)")
        return EXIT_BAD_INPUT
    window = windows[args.window_index]
    stages = window_stages(window, geometry, board, params)

    os.makedirs(args.out_dir, exist_ok=True)
    join = lambda name: os.path.join(args.out_dir, name)

    surface = stages["surface"]
    active = surface.active_events() if surface is not None else None
    _write_lines(join("active_events.txt"),
                 ((repr(e.t), e.x, e.y, e.p) for e in active) if active else ())

    flows = stages["flow_events"]
    _write_lines(join("flows.txt"),
                 ((repr(f.t), f.x, f.y, f.p,
                   repr(f.vx), repr(f.vy), repr(f.inlier_rate))
                  for f in flows) if flows is not None else ())

    _write_lines(join("clusters.txt"),
                 ((c.id, c.polarity, c.label.name, len(c),
                   repr(float(c.mean_pos[0])), repr(float(c.mean_pos[1])))
                  for c in stages["clusters"]))

    _write_lines(join("pairs.txt"),
                 ((p.chasing.id, p.running.id, repr(p.distance))
                  for p in stages["pairs"]))

    _write_lines(join("ellipses.txt"),
                 ((pair.chasing.id, pair.running.id,
                   repr(float(sampled.center[0])), repr(float(sampled.center[1])),
                   repr(float(sampled.semi_axes[0])), repr(float(sampled.semi_axes[1])),
                   repr(float(sampled.alpha)))
                  for pair, fit, sampled in stages["ellipses"]))

    grid_rows = []
    if stages["observation"] is not None:
        obs = stages["observation"]
        for k, (img, obj) in enumerate(zip(obs.image_points, obs.object_points)):
            grid_rows.append((k // board.cols, k % board.cols,
                              repr(float(obj[0])), repr(float(obj[1])),
                              repr(float(img[0])), repr(float(img[1]))))
    _write_lines(join("grid.txt"), grid_rows)

    img = viz.blank_canvas(geometry)
    if active is not None:
        for pol, color in ((1, viz.POS_COLOR), (-1, viz.NEG_COLOR)):
            mask = active.p == pol
            viz.draw_pixels(img, active.x[mask], active.y[mask], color)
    label_colors = {ClusterLabel.RUN: viz.RUN_COLOR,
                    ClusterLabel.CHASE: viz.CHASE_COLOR,
                    ClusterLabel.UNKNOWN: viz.UNKNOWN_COLOR}
    for c in stages["clusters"]:
        viz.draw_pixels(img, c.members.x, c.members.y, label_colors[c.label])
    for _pair, _fit, sampled in stages["ellipses"]:
        viz.draw_ellipse(img, sampled, viz.ELLIPSE_COLOR)
    if stages["observation"] is not None:
        for pt in stages["observation"].image_points:
            viz.draw_cross(img, pt[0], pt[1], viz.GRID_COLOR)
    viz.write_ppm(join("overlay.ppm"), img)

    _log(f"inspection dumps written to {args.out_dir}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evcalib",
        description="Event-camera intrinsic calibration from circle-grid "
                    "event streams, plus a synthetic stream generator.")
    sub = parser.add_subparsers(dest="command", required=True)

    cal = sub.add_parser("calib", help="calibrate intrinsics from an event file")
    cal.add_argument("--events", required=True, help="event stream file")
    cal.add_argument("--board", required=True, help="board spec file")
    cal.add_argument("--window", type=float, default=None,
                     help="window length in seconds (default 0.02)")
    cal.add_argument("--out", default="report.json", help="report output path")
    cal.add_argument("--threads", type=int, default=None,
                     help="worker threads (default: available parallelism)")
    cal.add_argument("--seed", type=int, default=None, help="RNG seed")
    cal.add_argument("--config", default=None, help="config file path")
    cal.set_defaults(func=cmd_calibrate)

    sim = sub.add_parser("simulate", help="render a synthetic event stream")
    sim.add_argument("--scenario", required=True, help="scenario JSON path")
    sim.add_argument("--out-events", required=True, help="event stream output")
    sim.add_argument("--out-truth", required=True, help="truth sidecar output")
    sim.set_defaults(func=cmd_simulate)

    ins = sub.add_parser("inspect", help="dump per-stage data for one window")
    ins.add_argument("--events", required=True, help="event stream file")
    ins.add_argument("--board", required=True, help="board spec file")
    ins.add_argument("--window-index", type=int, required=True)
    ins.add_argument("--out-dir", required=True)
    ins.add_argument("--window", type=float, default=None)
    ins.add_argument("--seed", type=int, default=None)
    ins.add_argument("--config", default=None)
    ins.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
