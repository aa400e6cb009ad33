"""Per-window recognition: events to an ordered grid observation.

Each fixed-length window runs surface-of-active-events construction,
per-pixel normal flow, homopolar clustering, chase/run pair matching,
time-varying ellipse fits on each pair's raw events, and lattice
recognition on the sampled centers. Centers are sampled at the window end
time, which also stamps the resulting view.

Windows are independent; a thread pool fans them out and results are
reassembled by window index, so thread count never changes the output.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .calib import ViewObservation
from .clustering import ClusterParams, cluster_homopolar, match_clusters
from .ellipse import EllipseFitParams, fit_time_varying_ellipse
from .events import Events, EventWindow, SensorGeometry, build_sae, window_events
from .flow import FlowParams, estimate_flows
from .grid import BoardSpec, board_points, find_grid


@dataclass(frozen=True)
class DetectorParams:
    window_len: float = 0.02
    flow: FlowParams = field(default_factory=FlowParams)
    cluster: ClusterParams = field(default_factory=ClusterParams)
    # capped fit budget: window centers move under 0.01 px after ~10 steps,
    # so the full polish would buy nothing detection can see
    ellipse: EllipseFitParams = field(
        default_factory=lambda: EllipseFitParams(max_iters=25))
    grid_gate_px: float = 3.0
    grid_iterations: int = 64
    seed: int = 0


@dataclass(frozen=True)
class WindowDetection:
    """Outcome of one window, with stage counters for diagnostics."""

    index: int
    t: float
    observation: ViewObservation | None
    n_events: int = 0
    n_active: int = 0
    n_flow_events: int = 0
    n_clusters: int = 0
    n_pairs: int = 0
    n_centers: int = 0

    @property
    def ok(self) -> bool:
        return self.observation is not None


class _PixelIndex:
    """Lookup from pixel linear index to the window's event rows."""

    def __init__(self, events: Events, width: int):
        lin = events.y.astype(np.int64) * width + events.x
        self._order = np.argsort(lin, kind="stable")
        self._sorted = lin[self._order]

    def rows_for(self, lin_pixels) -> np.ndarray:
        lo = np.searchsorted(self._sorted, lin_pixels, side="left")
        hi = np.searchsorted(self._sorted, lin_pixels, side="right")
        counts = hi - lo
        total = int(counts.sum())
        if total == 0:
            return np.zeros(0, dtype=np.int64)
        starts = np.cumsum(counts) - counts
        pos = np.arange(total) - np.repeat(starts, counts) + np.repeat(lo, counts)
        return self._order[pos]


def pair_raw_events(window: EventWindow, pair, width: int,
                    index: _PixelIndex | None = None):
    """Raw window events belonging to a matched pair.

    A cluster owns every window event of its polarity at its member
    pixels, not just the per-pixel latest ones the surface kept.
    Returns (ts, xs, ys) float/int arrays for both clusters combined.
    """
    ev = window.events
    if index is None:
        index = _PixelIndex(ev, width)
    rows_parts = []
    for cluster in (pair.chasing, pair.running):
        m = cluster.members
        lin = np.unique(m.y.astype(np.int64) * width + m.x)
        rows = index.rows_for(lin)
        rows = rows[ev.p[rows] == cluster.polarity]
        rows_parts.append(rows)
    rows = np.concatenate(rows_parts)
    return ev.t[rows], ev.x[rows].astype(np.float64), ev.y[rows].astype(np.float64)


def window_stages(window: EventWindow, geometry: SensorGeometry,
                  board: BoardSpec, params: DetectorParams) -> dict:
    """Run every recognition stage, keeping intermediates for inspection."""
    out = {
        "surface": None, "flow_events": None, "clusters": [], "pairs": [],
        "ellipses": [], "centers": np.zeros((0, 2)), "grid": None,
        "observation": None,
    }
    if len(window) == 0:
        return out
    surface = build_sae(window, geometry)
    out["surface"] = surface
    if surface.active_count < 3:
        return out
    flow_events = estimate_flows(surface, params.flow)
    out["flow_events"] = flow_events
    if len(flow_events) == 0:
        return out
    clusters = cluster_homopolar(flow_events, geometry, params.cluster)
    out["clusters"] = clusters
    if not clusters:
        return out
    pairs = match_clusters(clusters, params.cluster.theta_thd)
    out["pairs"] = pairs
    if len(pairs) < board.n_points:
        return out

    t_ref = window.t_start
    t_sample = window.t_end
    index = _PixelIndex(window.events, geometry.width)
    centers, ellipses = [], []
    for pair in pairs:
        ts, xs, ys = pair_raw_events(window, pair, geometry.width, index)
        fit = fit_time_varying_ellipse(ts, xs, ys, t_ref, params.ellipse)
        if fit is None:
            continue
        try:
            sampled = fit.sample(t_sample)
        except ValueError:
            continue
        ellipses.append((pair, fit, sampled))
        centers.append(sampled.center)
    out["ellipses"] = ellipses
    if not centers:
        return out
    centers = np.stack(centers)
    out["centers"] = centers
    if len(centers) < board.n_points:
        return out
    match = find_grid(centers, board, gate_px=params.grid_gate_px,
                      iterations=params.grid_iterations, seed=params.seed)
    out["grid"] = match
    if match is not None:
        out["observation"] = ViewObservation(
            t=t_sample,
            image_points=match.image_points,
            object_points=board_points(board),
        )
    return out


def recognize_window(index: int, window: EventWindow, geometry: SensorGeometry,
                     board: BoardSpec, params: DetectorParams) -> WindowDetection:
    stages = window_stages(window, geometry, board, params)
    surface = stages["surface"]
    flow_events = stages["flow_events"]
    return WindowDetection(
        index=index,
        t=window.t_end,
        observation=stages["observation"],
        n_events=len(window),
        n_active=surface.active_count if surface is not None else 0,
        n_flow_events=len(flow_events) if flow_events is not None else 0,
        n_clusters=len(stages["clusters"]),
        n_pairs=len(stages["pairs"]),
        n_centers=len(stages["centers"]),
    )


def detect_views(events: Events, geometry: SensorGeometry, board: BoardSpec,
                 params: DetectorParams, threads: int = 1,
                 progress=None) -> list[WindowDetection]:
    """Recognize every window of the stream; order follows window index."""
    windows = window_events(events, params.window_len)

    def job(i):
        det = recognize_window(i, windows[i], geometry, board, params)
        if progress is not None:
            progress(det)
        return det

    if threads <= 1 or len(windows) <= 1:
        return [job(i) for i in range(len(windows))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(job, range(len(windows))))
