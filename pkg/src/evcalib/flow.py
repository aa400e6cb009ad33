"""Normal flow from local spatiotemporal plane fits on the active surface.

Each active pixel's neighborhood is fit with a plane a*x + b*y + t + c = 0
by RANSAC; the flow is n = -(a, b) / (a^2 + b^2), the component of image
velocity along the local edge normal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from . import _kernels
from .events import ActiveEventSurface, Events


@dataclass(frozen=True)
class PlaneModel:
    """Spatiotemporal plane a*x + b*y + t + c = 0 (x, y px; t, c seconds)."""

    a: float
    b: float
    c: float

    def residual(self, x, y, t):
        return self.a * x + self.b * y + t + self.c


@dataclass(frozen=True)
class NormalFlow:
    vx: float
    vy: float

    @property
    def magnitude(self) -> float:
        return float(np.hypot(self.vx, self.vy))

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy])


@dataclass(frozen=True)
class FlowParams:
    radius: int = 2
    ransac_iters: int = 50
    inlier_thresh_frac: float = 0.2
    inlier_thresh_floor: float = 1e-3
    min_points: int = 5
    inlier_rate_min: float = 0.6
    seed: int = 0


class FlowEvent(NamedTuple):
    t: float
    x: int
    y: int
    p: int
    vx: float
    vy: float
    inlier_rate: float


class FlowEvents:
    """Columnar batch of events with estimated normal flow."""

    __slots__ = ("t", "x", "y", "p", "vx", "vy", "inlier_rate")

    def __init__(self, t, x, y, p, vx, vy, inlier_rate):
        self.t = np.asarray(t, dtype=np.float64)
        self.x = np.asarray(x, dtype=np.int32)
        self.y = np.asarray(y, dtype=np.int32)
        self.p = np.asarray(p, dtype=np.int8)
        self.vx = np.asarray(vx, dtype=np.float64)
        self.vy = np.asarray(vy, dtype=np.float64)
        self.inlier_rate = np.asarray(inlier_rate, dtype=np.float64)

    @classmethod
    def empty(cls) -> "FlowEvents":
        return cls([], [], [], [], [], [], [])

    def __len__(self) -> int:
        return int(self.t.shape[0])

    def __getitem__(self, i: int) -> FlowEvent:
        return FlowEvent(float(self.t[i]), int(self.x[i]), int(self.y[i]),
                         int(self.p[i]), float(self.vx[i]), float(self.vy[i]),
                         float(self.inlier_rate[i]))

    def __iter__(self) -> Iterator[FlowEvent]:
        for i in range(len(self)):
            yield self[i]

    def take(self, index) -> "FlowEvents":
        return FlowEvents(self.t[index], self.x[index], self.y[index],
                          self.p[index], self.vx[index], self.vy[index],
                          self.inlier_rate[index])

    @property
    def flows(self) -> np.ndarray:
        return np.stack([self.vx, self.vy], axis=1)

    @property
    def positions(self) -> np.ndarray:
        return np.stack([self.x, self.y], axis=1).astype(np.float64)


def neighborhood(surface: ActiveEventSurface, x: int, y: int,
                 radius: int) -> Events:
    """Active events within Chebyshev distance ``radius`` of (x, y)."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    g = surface.geometry
    if not (0 <= x < g.width and 0 <= y < g.height):
        raise ValueError(f"center ({x}, {y}) outside sensor geometry")
    x0, x1 = max(x - radius, 0), min(x + radius + 1, g.width)
    y0, y1 = max(y - radius, 0), min(y + radius + 1, g.height)
    sub = surface.valid[y0:y1, x0:x1]
    ny, nx = np.nonzero(sub)
    xs, ys = nx + x0, ny + y0
    return Events(surface.time_map[ys, xs], xs, ys, surface.polarity_map[ys, xs])


def fit_plane_ransac(events: Events, *, iterations: int = 50,
                     inlier_threshold: float, min_points: int = 5,
                     seed: int = 0, pixel: int = 0):
    """RANSAC plane fit over a neighborhood's events.

    Returns (PlaneModel, inlier_rate), or None when the neighborhood is
    spatially degenerate (all 3-point samples collinear).
    """
    if len(events) < max(min_points, 3):
        raise ValueError(f"need at least {max(min_points, 3)} events, "
                         f"got {len(events)}")
    if inlier_threshold < 0:
        raise ValueError("inlier_threshold must be non-negative")
    ok, a, b, c, rate = _kernels.ransac_plane(
        events.x.astype(np.float64), events.y.astype(np.float64), events.t,
        iterations, inlier_threshold, seed, pixel)
    if not ok:
        return None
    return PlaneModel(a, b, c), rate


def flow_from_plane(plane: PlaneModel):
    """Normal flow of a plane; None when the surface is too flat in (x, y)."""
    den = plane.a * plane.a + plane.b * plane.b
    if den < 1e-18:
        return None
    return NormalFlow(-plane.a / den, -plane.b / den)


def estimate_flows(surface: ActiveEventSurface, params: FlowParams) -> FlowEvents:
    """Flow for every active pixel whose local fit clears the inlier gate.

    Output is ordered row-major by pixel. An event is kept only when its
    plane fit succeeded, its flow is non-degenerate, and the final inlier
    rate strictly exceeds ``params.inlier_rate_min``.
    """
    x, y, t, p, vx, vy, rate, ok = _kernels.estimate_flow_fields(
        surface.time_map, surface.polarity_map,
        surface.valid.astype(np.uint8),
        params.radius, params.ransac_iters, params.inlier_thresh_frac,
        params.inlier_thresh_floor, params.min_points, params.seed)
    keep = (ok != 0) & (rate > params.inlier_rate_min)
    return FlowEvents(t[keep], x[keep], y[keep], p[keep],
                      vx[keep], vy[keep], rate[keep])
