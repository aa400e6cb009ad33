"""Synthetic event streams of a moving circle-grid target.

The board is dark circles on a light background, rendered through the full
projection model (distortion included) by intersecting per-pixel
undistorted rays with the board plane at fine time substeps. A pixel whose
log intensity steps by at least the contrast threshold emits one event:
darkening gives polarity -1 (the leading edge of the moving pattern),
lightening +1 (trailing). Every signal event carries the generating circle
index and edge side so tests can audit the pipeline; the CLI discards the
tags when writing streams.

All randomness (timestamp jitter, background noise) comes from one seeded
generator with a fixed call order, so identical configs give byte-identical
streams.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .calib import Intrinsics, Pose, project, undistort_points
from .events import Events, SensorGeometry, DAVIS346
from .grid import BoardSpec, board_points


@dataclass(frozen=True)
class Keyframe:
    t: float
    pose: Pose


class Trajectory:
    """Board-in-camera pose track; lerp translation, slerp rotation."""

    def __init__(self, keyframes):
        keyframes = sorted(keyframes, key=lambda k: k.t)
        if not keyframes:
            raise ValueError("trajectory needs at least one keyframe")
        times = np.array([k.t for k in keyframes])
        if np.any(np.diff(times) <= 0):
            raise ValueError("keyframe times must be strictly increasing")
        self.keyframes = list(keyframes)
        self._times = times
        self._trans = np.stack([k.pose.translation for k in keyframes])
        if len(keyframes) > 1:
            rots = Rotation.from_matrix(
                np.stack([k.pose.rotation for k in keyframes]))
            self._slerp = Slerp(times, rots)
        else:
            self._slerp = None

    @property
    def t_start(self) -> float:
        return float(self._times[0])

    @property
    def t_end(self) -> float:
        return float(self._times[-1])

    def pose_at(self, t: float) -> Pose:
        if not self.t_start <= t <= self.t_end:
            raise ValueError(f"time {t} outside trajectory span")
        if self._slerp is None:
            return self.keyframes[0].pose
        rot = self._slerp([t]).as_matrix()[0]
        tr = np.array([np.interp(t, self._times, self._trans[:, i])
                       for i in range(3)])
        return Pose(rot, tr)


@dataclass(frozen=True)
class SimConfig:
    contrast_threshold: float = 0.4
    noise_rate: float = 0.0  # events / pixel / second
    jitter_sigma: float = 0.0  # seconds
    seed: int = 0
    substep: float = 1e-3

    def __post_init__(self):
        if self.contrast_threshold <= 0:
            raise ValueError("contrast_threshold must be positive")
        if self.noise_rate < 0:
            raise ValueError("noise_rate must be non-negative")
        if self.jitter_sigma < 0 or self.substep <= 0:
            raise ValueError("jitter_sigma >= 0 and substep > 0 required")


# log-intensity step between background and a circle; one threshold
# crossing per edge passage as long as contrast_threshold <= this
_LOG_STEP = 1.0

NOISE_CIRCLE = -1


@dataclass(frozen=True)
class SimulatedEvents:
    """Event stream plus per-event provenance tags."""

    events: Events
    circle_index: np.ndarray  # int32, NOISE_CIRCLE for background noise
    side: np.ndarray  # int8: -1 darkening edge, +1 lightening, 0 noise

    def __len__(self) -> int:
        return len(self.events)

    @property
    def signal_mask(self) -> np.ndarray:
        return self.circle_index != NOISE_CIRCLE


def pixel_rays(intr: Intrinsics, geometry: SensorGeometry) -> np.ndarray:
    """Undistorted unit-plane ray (x, y, 1) per pixel, shape (h*w, 3)."""
    u, v = np.meshgrid(np.arange(geometry.width, dtype=np.float64),
                       np.arange(geometry.height, dtype=np.float64))
    pn = undistort_points(np.stack([u.ravel(), v.ravel()], axis=1), intr)
    return np.concatenate([pn, np.ones((len(pn), 1))], axis=1)


def _board_occupancy(rays, pose: Pose, board: BoardSpec):
    """Darkness test for rays against the board plane.

    Returns (dark bool (n,), circle index int32 (n,)); index is valid only
    where dark.
    """
    r3 = pose.rotation[:, 2]
    num = float(r3 @ pose.translation)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = num / (rays @ r3)
    ok = np.isfinite(s) & (s > 0)
    s = np.where(ok, s, 1.0)
    pb = (rays * s[:, None] - pose.translation) @ pose.rotation
    xb, yb = pb[:, 0], pb[:, 1]

    su = board.spacing / 2.0
    i0 = np.round(yb / su).astype(np.int64)
    best_d2 = np.full(len(rays), np.inf)
    best_idx = np.zeros(len(rays), dtype=np.int32)
    for di in (-1, 0, 1):
        i = np.clip(i0 + di, 0, board.rows - 1)
        j = np.round((xb / su - (i % 2)) / 2.0).astype(np.int64)
        j = np.clip(j, 0, board.cols - 1)
        cx = su * (2 * j + (i % 2))
        cy = su * i
        d2 = (xb - cx) ** 2 + (yb - cy) ** 2
        take = d2 < best_d2
        best_d2 = np.where(take, d2, best_d2)
        best_idx = np.where(take, (i * board.cols + j).astype(np.int32), best_idx)
    dark = ok & (best_d2 <= board.circle_radius ** 2)
    return dark, best_idx


def _circle_windows(board: BoardSpec, pose: Pose, intr: Intrinsics,
                    geometry: SensorGeometry):
    """Projected circle centers and a conservative pixel half-extent.

    Returns (centers_px (m, 2) for front-facing circles, half-extent int)
    or None when nothing can be visible.
    """
    pts = board_points(board)
    offs = np.array([[0.0, 0.0, 0.0],
                     [board.circle_radius, 0.0, 0.0],
                     [-board.circle_radius, 0.0, 0.0],
                     [0.0, board.circle_radius, 0.0],
                     [0.0, -board.circle_radius, 0.0]])
    probe = (pts[:, None, :] + offs[None, :, :]).reshape(-1, 3)
    pc = pose.transform(probe)
    front = (pc[:, 2] > 1e-6).reshape(len(pts), len(offs)).all(axis=1)
    if not np.any(front):
        return None
    probe = probe.reshape(len(pts), len(offs), 3)[front].reshape(-1, 3)
    pix = project(probe, pose, intr).reshape(-1, len(offs), 2)
    centers = pix[:, 0, :]
    rad = np.abs(pix - centers[:, None, :]).max()
    margin = float(rad) + 3.0
    in_reach = ((centers[:, 0] > -margin) & (centers[:, 0] < geometry.width + margin)
                & (centers[:, 1] > -margin) & (centers[:, 1] < geometry.height + margin))
    if not np.any(in_reach):
        return None
    half = int(math.ceil(min(margin, 60.0)))
    return centers[in_reach], half


def render_edge_events(board: BoardSpec, traj: Trajectory, intr: Intrinsics,
                       geometry: SensorGeometry, cfg: SimConfig,
                       t0: float, t1: float) -> SimulatedEvents:
    """Render the event stream of the moving board over [t0, t1]."""
    if not (traj.t_start <= t0 <= t1 <= traj.t_end):
        raise ValueError("render span must lie inside the trajectory span")
    if cfg.contrast_threshold > _LOG_STEP:
        # threshold exceeds the scene contrast: nothing ever fires
        n_steps = 0
    else:
        n_steps = max(int(math.ceil((t1 - t0) / cfg.substep - 1e-9)), 0)

    w, h = geometry.width, geometry.height
    rays = pixel_rays(intr, geometry)
    dark = np.zeros(h * w, dtype=bool)
    circle_of = np.zeros(h * w, dtype=np.int32)

    def refresh(idx, pose):
        d_new, c_new = _board_occupancy(rays[idx], pose, board)
        changed = d_new != dark[idx]
        dark[idx] = d_new
        circle_of[idx[d_new]] = c_new[d_new]
        return idx[changed], d_new[changed]

    full = np.arange(h * w)
    d0, c0 = _board_occupancy(rays, traj.pose_at(t0), board)
    dark[:] = d0
    circle_of[d0] = c0[d0]

    ts_parts, idx_parts, pol_parts, tag_parts = [], [], [], []
    t_prev = t0
    for k in range(1, n_steps + 1):
        t_k = min(t0 + k * cfg.substep, t1)
        pose = traj.pose_at(t_k)
        win = _circle_windows(board, pose, intr, geometry)
        cand_parts = [np.flatnonzero(dark)]
        if win is not None:
            centers, half = win
            span = np.arange(-half, half + 1)
            cxs = np.round(centers[:, 0]).astype(np.int64)
            cys = np.round(centers[:, 1]).astype(np.int64)
            gx = (cxs[:, None] + span[None, :])[:, None, :]
            gy = (cys[:, None] + span[None, :])[:, :, None]
            lin = (gy * w + gx).reshape(-1)
            inb = ((gx >= 0) & (gx < w) & ((gy >= 0) & (gy < h))).reshape(-1)
            cand_parts.append(lin[inb])
        cand = np.unique(np.concatenate(cand_parts))
        if len(cand):
            prev_circle = circle_of[cand].copy()
            flipped, now_dark = refresh(cand, pose)
            if len(flipped):
                t_mid = 0.5 * (t_prev + t_k)
                ts_parts.append(np.full(len(flipped), t_mid))
                idx_parts.append(flipped)
                pol_parts.append(np.where(now_dark, -1, 1).astype(np.int8))
                # lightening pixels report the circle they belonged to
                tag = np.where(now_dark, circle_of[flipped],
                               prev_circle[np.searchsorted(cand, flipped)])
                tag_parts.append(tag.astype(np.int32))
        t_prev = t_k

    if ts_parts:
        ts = np.concatenate(ts_parts)
        lin = np.concatenate(idx_parts)
        pol = np.concatenate(pol_parts)
        tags = np.concatenate(tag_parts)
    else:
        ts = np.zeros(0)
        lin = np.zeros(0, dtype=np.int64)
        pol = np.zeros(0, dtype=np.int8)
        tags = np.zeros(0, dtype=np.int32)
    side = pol.copy()

    rng = np.random.default_rng(cfg.seed)
    if cfg.jitter_sigma > 0 and len(ts):
        ts = np.clip(ts + rng.normal(0.0, cfg.jitter_sigma, len(ts)), t0, t1)

    if cfg.noise_rate > 0:
        lam = cfg.noise_rate * geometry.n_pixels * (t1 - t0)
        n_noise = int(rng.poisson(lam))
        nts = rng.uniform(t0, t1, n_noise)
        nxs = rng.integers(0, w, n_noise)
        nys = rng.integers(0, h, n_noise)
        npol = (rng.integers(0, 2, n_noise) * 2 - 1).astype(np.int8)
        ts = np.concatenate([ts, nts])
        lin = np.concatenate([lin, nys * w + nxs])
        pol = np.concatenate([pol, npol])
        tags = np.concatenate([tags, np.full(n_noise, NOISE_CIRCLE, np.int32)])
        side = np.concatenate([side, np.zeros(n_noise, np.int8)])

    order = np.argsort(ts, kind="stable")
    ev = Events(t=ts[order],
                x=(lin[order] % w).astype(np.int32),
                y=(lin[order] // w).astype(np.int32),
                p=pol[order])
    return SimulatedEvents(events=ev, circle_index=tags[order],
                           side=side[order])


def ground_truth_centers(board: BoardSpec, traj: Trajectory, intr: Intrinsics,
                         t: float) -> np.ndarray:
    """Projected circle centers (rows*cols, 2) at time t, board order."""
    pose = traj.pose_at(t)
    pts = board_points(board)
    if np.any(pose.transform(pts)[:, 2] <= 0):
        raise ValueError(f"board circle behind camera at t={t}")
    return project(pts, pose, intr)


def render_translating_edge(geometry: SensorGeometry, speed_px_s: float,
                            t0: float, t1: float) -> tuple[Events, np.ndarray]:
    """Straight vertical dark edge sweeping in +x at constant pixel speed.

    Each pixel column fires once, at its exact crossing time, on every row
    (polarity -1: light to dark). Returns the stream and the true normal
    flow (speed, 0) px/s shared by every event.
    """
    if speed_px_s <= 0:
        raise ValueError("speed must be positive")
    # edge starts just left of column 0 at t0
    x_edge0 = -0.5
    cols = np.arange(geometry.width)
    t_cross = t0 + (cols - x_edge0) / speed_px_s
    live = (t_cross >= t0) & (t_cross < t1)
    cols = cols[live]
    t_cross = t_cross[live]
    h = geometry.height
    ts = np.repeat(t_cross, h)
    xs = np.repeat(cols, h).astype(np.int32)
    ys = np.tile(np.arange(h, dtype=np.int32), len(cols))
    ev = Events(t=ts, x=xs, y=ys, p=np.full(len(ts), -1, dtype=np.int8))
    return ev, np.array([speed_px_s, 0.0])


@dataclass
class Scenario:
    """Self-contained simulation description, JSON round-trippable."""

    geometry: SensorGeometry
    board: BoardSpec
    intrinsics: Intrinsics
    sim: SimConfig
    t_start: float
    t_end: float
    keyframes: list = field(default_factory=list)
    truth_dt: float = 0.02

    def trajectory(self) -> Trajectory:
        return Trajectory(self.keyframes)

    def to_dict(self) -> dict:
        return {
            "geometry": {"width": self.geometry.width, "height": self.geometry.height},
            "board": {"rows": self.board.rows, "cols": self.board.cols,
                      "spacing_m": self.board.spacing,
                      "circle_radius_m": self.board.circle_radius},
            "intrinsics": {k: getattr(self.intrinsics, k)
                           for k in ("fx", "fy", "cx", "cy", "k1", "k2", "p1", "p2")},
            "sim": {"contrast_threshold": self.sim.contrast_threshold,
                    "noise_rate": self.sim.noise_rate,
                    "jitter_sigma": self.sim.jitter_sigma,
                    "seed": self.sim.seed,
                    "substep": self.sim.substep},
            "t_start": self.t_start,
            "t_end": self.t_end,
            "truth_dt": self.truth_dt,
            "keyframes": [{"t": k.t,
                           "rotvec": list(map(float, k.pose.rotvec())),
                           "translation": list(map(float, k.pose.translation))}
                          for k in self.keyframes],
        }

    @staticmethod
    def from_dict(data: dict) -> "Scenario":
        geom = SensorGeometry(int(data["geometry"]["width"]),
                              int(data["geometry"]["height"]))
        b = data["board"]
        board = BoardSpec(rows=int(b["rows"]), cols=int(b["cols"]),
                          spacing=float(b["spacing_m"]),
                          circle_radius=float(b.get("circle_radius_m", 0.0)))
        intr = Intrinsics(**{k: float(v) for k, v in data["intrinsics"].items()})
        s = data.get("sim", {})
        cfg = SimConfig(
            contrast_threshold=float(s.get("contrast_threshold", 0.4)),
            noise_rate=float(s.get("noise_rate", 0.0)),
            jitter_sigma=float(s.get("jitter_sigma", 0.0)),
            seed=int(s.get("seed", 0)),
            substep=float(s.get("substep", 1e-3)),
        )
        keyframes = [
            Keyframe(t=float(k["t"]),
                     pose=Pose.from_rotvec(np.array(k["rotvec"], dtype=np.float64),
                                           np.array(k["translation"], dtype=np.float64)))
            for k in data["keyframes"]
        ]
        return Scenario(geometry=geom, board=board, intrinsics=intr, sim=cfg,
                        t_start=float(data["t_start"]), t_end=float(data["t_end"]),
                        keyframes=keyframes,
                        truth_dt=float(data.get("truth_dt", 0.02)))


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return Scenario.from_dict(json.load(fh))


# default truth intrinsics used by the bundled scenarios
DEFAULT_TRUTH = Intrinsics(fx=255.98, fy=256.10, cx=169.85, cy=121.73,
                           k1=-0.423, k2=0.254, p1=8.29e-4, p2=6.33e-4)


def make_wobble_scenario(duration: float = 30.0, *, seed: int = 7,
                         geometry: SensorGeometry = DAVIS346,
                         board: BoardSpec | None = None,
                         intrinsics: Intrinsics = DEFAULT_TRUTH,
                         noise_rate: float = 0.0,
                         jitter_sigma: float = 0.0,
                         keyframe_rate: float = 100.0) -> Scenario:
    """Smoothly wobbling board: circular sweep plus sway, depth, tilt, spin.

    The dominant term is a constant-speed orbit of the board center, so
    the slowest circle never stalls: every recognition window then carries
    enough events per circle edge for the per-cluster fits. Slow sway,
    depth and tilt cycles on top vary the pose, which Zhang-style
    initialization needs, with amplitudes sized to keep the whole grid
    inside a DAVIS346-like view.
    """
    if board is None:
        board = BoardSpec(rows=4, cols=11, spacing=0.05, circle_radius=0.0125)
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * math.pi, 8)
    centroid = board_points(board).mean(axis=0)

    def pose_fn(t):
        orbit = 2 * math.pi * 1.35 * t + phases[0]
        x = 0.065 * math.cos(orbit) \
            + 0.020 * math.sin(2 * math.pi * 0.21 * t + phases[1])
        y = 0.065 * math.sin(orbit) \
            + 0.016 * math.sin(2 * math.pi * 0.17 * t + phases[2])
        z = 0.660 + 0.050 * math.sin(2 * math.pi * 0.33 * t + phases[3])
        rx = 0.35 * math.sin(2 * math.pi * 0.24 * t + phases[4])
        ry = 0.18 * math.sin(2 * math.pi * 0.27 * t + phases[5])
        rz = 0.22 * math.sin(2 * math.pi * 0.16 * t + phases[6])
        rot = Rotation.from_rotvec([rx, ry, rz]).as_matrix()
        trans = np.array([x, y, z]) - rot @ centroid
        return Pose(rot, trans)

    # keyframes run a little past t_end so truth can be sampled at window
    # boundaries that land just beyond the last event
    span = duration + 0.1
    n_key = max(int(round(span * keyframe_rate)), 1)
    keyframes = [Keyframe(t=span * i / n_key, pose=pose_fn(span * i / n_key))
                 for i in range(n_key + 1)]
    return Scenario(
        geometry=geometry, board=board, intrinsics=intrinsics,
        sim=SimConfig(contrast_threshold=0.4, noise_rate=noise_rate,
                      jitter_sigma=jitter_sigma, seed=seed),
        t_start=0.0, t_end=duration, keyframes=keyframes,
    )


def simulate_scenario(scenario: Scenario):
    """Run a scenario; returns (SimulatedEvents, truth rows).

    Truth rows are (t, circle_index, cx_px, cy_px) tuples sampled at the
    midpoints of consecutive ``truth_dt`` windows.
    """
    traj = scenario.trajectory()
    sim_ev = render_edge_events(scenario.board, traj, scenario.intrinsics,
                                scenario.geometry, scenario.sim,
                                scenario.t_start, scenario.t_end)
    rows = []
    n_win = int(math.floor((scenario.t_end - scenario.t_start) / scenario.truth_dt + 1e-9))
    for i in range(n_win):
        t = scenario.t_start + (i + 0.5) * scenario.truth_dt
        if t > scenario.t_end:
            break
        centers = ground_truth_centers(scenario.board, traj, scenario.intrinsics, t)
        for ci, (cx, cy) in enumerate(centers):
            rows.append((t, ci, float(cx), float(cy)))
    return sim_ev, rows


def write_truth(rows, path, intrinsics: Intrinsics | None = None) -> None:
    """Sidecar truth table: `t circle_index cx_px cy_px` per line."""
    with open(path, "w", encoding="utf-8") as fh:
        if intrinsics is not None:
            for k in ("fx", "fy", "cx", "cy", "k1", "k2", "p1", "p2"):
                fh.write(f"# truth {k} = {getattr(intrinsics, k)!r}\n")
        for t, ci, cx, cy in rows:
            fh.write(f"{float(t)!r} {int(ci)} {float(cx)!r} {float(cy)!r}\n")
